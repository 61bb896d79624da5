//! OpenAI-compatible HTTP backend (chat completions and embeddings).

use std::sync::{Condvar, Mutex};
use std::thread;

use base64::Engine;
use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde_json::{json, Value};

use super::{
    parse_structured, prompts, ContentPart, EmbedInput, ModelBackend, ModelRequest, ModelResponse,
};
use crate::config::RemoteSpec;
use crate::error::{Error, Result};
use crate::types::FeatureVector;

const CAPTION_PROMPT: &str =
    "Describe the content, colours and mood of this image in two sentences.";

/// Counting semaphore bounding concurrent in-flight requests.
#[derive(Debug)]
struct Limiter {
    max: usize,
    in_flight: Mutex<usize>,
    freed: Condvar,
}

struct Permit<'a>(&'a Limiter);

impl Limiter {
    fn new(max: usize) -> Self {
        Limiter {
            max: max.max(1),
            in_flight: Mutex::new(0),
            freed: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut n = self.in_flight.lock().unwrap();
        while *n >= self.max {
            n = self.freed.wait(n).unwrap();
        }
        *n += 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.in_flight.lock().unwrap() -= 1;
        self.0.freed.notify_one();
    }
}

#[derive(Debug)]
pub struct RemoteBackend {
    client: Client,
    spec: RemoteSpec,
    api_key: Option<String>,
    dimension: usize,
    limiter: Limiter,
}

fn is_retryable(status: StatusCode) -> bool {
    status == StatusCode::TOO_MANY_REQUESTS || status.is_server_error()
}

impl RemoteBackend {
    /// Builds a client; the API key is read from the environment variable
    /// named in `spec.api_key_env` (absent is allowed for local servers).
    pub fn new(spec: RemoteSpec, dimension: usize, max_in_flight: usize) -> Result<Self> {
        let api_key = std::env::var(&spec.api_key_env).ok().filter(|k| !k.is_empty());
        Self::with_api_key(spec, dimension, max_in_flight, api_key)
    }

    pub fn with_api_key(
        spec: RemoteSpec,
        dimension: usize,
        max_in_flight: usize,
        api_key: Option<String>,
    ) -> Result<Self> {
        let client = Client::builder()
            .timeout(spec.timeout)
            .build()
            .map_err(|e| Error::Transport(format!("cannot build HTTP client: {e}")))?;
        Ok(RemoteBackend {
            client,
            spec,
            api_key,
            dimension,
            limiter: Limiter::new(max_in_flight),
        })
    }

    fn url(&self, path: &str) -> String {
        format!("{}/{}", self.spec.endpoint.trim_end_matches('/'), path)
    }

    /// POSTs `body`, retrying 429/5xx and network failures with exponential
    /// backoff. The caller sees one response or one error.
    fn post_json(&self, path: &str, body: &Value) -> Result<Value> {
        let url = self.url(path);
        let retry = &self.spec.retry;
        let mut attempt = 1;
        loop {
            let outcome = {
                let _permit = self.limiter.acquire();
                let mut req = self.client.post(&url).json(body);
                if let Some(key) = &self.api_key {
                    req = req.bearer_auth(key);
                }
                req.send()
            };
            let retry_reason = match outcome {
                Ok(resp) if resp.status().is_success() => {
                    return resp
                        .json::<Value>()
                        .map_err(|e| Error::Protocol(format!("response body is not JSON: {e}")));
                }
                Ok(resp) if is_retryable(resp.status()) => format!("HTTP {}", resp.status()),
                Ok(resp) => {
                    let status = resp.status();
                    let text = resp.text().unwrap_or_default();
                    let snippet: String = text.chars().take(200).collect();
                    return Err(Error::Transport(format!("{url}: HTTP {status}: {snippet}")));
                }
                Err(e) => e.to_string(),
            };
            if attempt >= retry.max_attempts {
                return Err(Error::Transport(format!(
                    "{url}: giving up after {attempt} attempt(s): {retry_reason}"
                )));
            }
            let delay = retry.delay_after(attempt);
            log::warn!("{url}: {retry_reason}; retrying in {delay:?}");
            thread::sleep(delay);
            attempt += 1;
        }
    }

    fn user_message(req: &ModelRequest) -> Value {
        if !req.has_images() {
            return json!({ "role": "user", "content": req.text_content() });
        }
        let parts: Vec<Value> = req
            .content
            .iter()
            .map(|p| match p {
                ContentPart::Text(t) => json!({ "type": "text", "text": t }),
                ContentPart::Image { bytes, mime } => {
                    let b64 = base64::engine::general_purpose::STANDARD.encode(bytes);
                    json!({
                        "type": "image_url",
                        "image_url": { "url": format!("data:{mime};base64,{b64}") }
                    })
                }
            })
            .collect();
        json!({ "role": "user", "content": parts })
    }

    fn chat(&self, messages: &[Value]) -> Result<String> {
        let body = json!({
            "model": self.spec.model,
            "messages": messages,
            "temperature": 0,
        });
        let resp = self.post_json("chat/completions", &body)?;
        resp.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| Error::Protocol("chat response has no choices[0].message.content".into()))
    }

    fn embed_text(&self, text: &str) -> Result<FeatureVector> {
        let body = json!({ "model": self.spec.embedding_model, "input": text });
        let resp = self.post_json("embeddings", &body)?;
        let arr = resp
            .pointer("/data/0/embedding")
            .and_then(Value::as_array)
            .ok_or_else(|| Error::Protocol("embedding response has no data[0].embedding".into()))?;
        let values = arr
            .iter()
            .map(|v| v.as_f64().map(|f| f as f32))
            .collect::<Option<Vec<f32>>>()
            .ok_or_else(|| Error::Protocol("embedding contains non-numbers".into()))?;
        if values.len() != self.dimension {
            log::debug!("projecting {}-dim embedding to {}", values.len(), self.dimension);
        }
        FeatureVector::project(values, self.dimension)
            .map_err(|e| Error::Protocol(format!("bad embedding: {e}")))
    }
}

impl ModelBackend for RemoteBackend {
    fn complete(&self, req: &ModelRequest) -> Result<ModelResponse> {
        req.validate(self.supports_images())?;
        let system = format!(
            "{}\n\n{}",
            req.role_prompt,
            prompts::format_instruction(req.schema)
        );
        let mut messages = vec![
            json!({ "role": "system", "content": system }),
            Self::user_message(req),
        ];
        let first = self.chat(&messages)?;
        let problem = match parse_structured(&first, req.schema) {
            Ok(r) if r.matches(req.schema) => return Ok(r),
            Ok(_) => "fields do not match the requested format".to_string(),
            Err(e) => e.to_string(),
        };
        log::warn!("{:?}: unparseable model output ({problem}); asking again", req.task);
        messages.push(json!({ "role": "assistant", "content": first }));
        messages.push(json!({ "role": "user", "content": prompts::reask(req.schema, &problem) }));
        let second = self.chat(&messages)?;
        match parse_structured(&second, req.schema) {
            Ok(r) if r.matches(req.schema) => Ok(r),
            Ok(_) => Err(Error::Protocol(format!(
                "{:?}: reply does not match {:?} after re-ask",
                req.task, req.schema
            ))),
            Err(e) => Err(Error::Protocol(format!("{:?}: {e} (after re-ask)", req.task))),
        }
    }

    fn embed(&self, input: EmbedInput<'_>) -> Result<FeatureVector> {
        match input {
            EmbedInput::Text(t) => {
                if t.trim().is_empty() {
                    return Err(Error::InvalidRequest("cannot embed empty text".into()));
                }
                self.embed_text(t)
            }
            EmbedInput::Image(bytes) => {
                if bytes.is_empty() {
                    return Err(Error::InvalidRequest("cannot embed empty image".into()));
                }
                if !self.spec.vision {
                    return Err(Error::Capability(
                        "image embedding needs a vision-capable chat model".into(),
                    ));
                }
                // Embeddings endpoints are text-only: caption first, then embed.
                let mime = crate::image::sniff_mime(bytes).unwrap_or("image/png");
                let caption_req = ModelRequest::new(
                    super::Task::FrameScore,
                    super::ResponseSchema::ReportOnly,
                    CAPTION_PROMPT,
                )
                .image(bytes.to_vec(), mime);
                let messages = [
                    json!({ "role": "system", "content": CAPTION_PROMPT }),
                    Self::user_message(&caption_req),
                ];
                let caption = self.chat(&messages)?;
                if caption.trim().is_empty() {
                    return Err(Error::Protocol("empty image caption".into()));
                }
                self.embed_text(&caption)
            }
        }
    }

    fn supports_images(&self) -> bool {
        self.spec.vision
    }

    fn dimension(&self) -> usize {
        self.dimension
    }
}
