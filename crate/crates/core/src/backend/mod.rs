//! Uniform interface to the language and vision models behind every stage.
//!
//! Stages never talk to a model directly; they build a [`ModelRequest`] and
//! hand it to a [`ModelBackend`]. Two implementations ship: [`StubBackend`], a
//! deterministic offline oracle, and [`RemoteBackend`], an OpenAI-compatible
//! HTTP client.

mod lexicon;
mod parse;
pub mod prompts;
mod remote;
mod stub;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{FeatureVector, Score, SentimentLabel};

pub use lexicon::StubLexicon;
pub use parse::parse_structured;
pub use remote::RemoteBackend;
pub use stub::{stub_text_score, StubBackend, STUB_HYPOTHESIS};

/// Which model role a request plays. Remote backends ignore it beyond logging;
/// the stub dispatches its deterministic rules on it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Task {
    SegmentScore,
    FrameScore,
    Fusion,
    Hypotheses,
    RagSummary,
    Classify,
}

impl Task {
    pub const ALL: [Task; 6] = [
        Task::SegmentScore,
        Task::FrameScore,
        Task::Fusion,
        Task::Hypotheses,
        Task::RagSummary,
        Task::Classify,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ResponseSchema {
    ScoreAndReport,
    ScoreOnly,
    ReportOnly,
    LabelAndReport,
    Hypotheses,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ContentPart {
    Text(String),
    Image { bytes: Vec<u8>, mime: &'static str },
}

/// Structured side-channel carried alongside the prompt. Remote backends see
/// the same information rendered into the prompt text.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RequestHints {
    pub features: Option<FeatureVector>,
    pub combined_score: Option<Score>,
    pub labels: Vec<SentimentLabel>,
    pub post_text: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelRequest {
    pub task: Task,
    pub role_prompt: String,
    pub content: Vec<ContentPart>,
    pub schema: ResponseSchema,
    pub hints: RequestHints,
}

impl ModelRequest {
    pub fn new(task: Task, schema: ResponseSchema, role_prompt: impl Into<String>) -> Self {
        ModelRequest {
            task,
            role_prompt: role_prompt.into(),
            content: Vec::new(),
            schema,
            hints: RequestHints::default(),
        }
    }

    pub fn text(mut self, text: impl Into<String>) -> Self {
        self.content.push(ContentPart::Text(text.into()));
        self
    }

    pub fn image(mut self, bytes: Vec<u8>, mime: &'static str) -> Self {
        self.content.push(ContentPart::Image { bytes, mime });
        self
    }

    pub fn hints(mut self, hints: RequestHints) -> Self {
        self.hints = hints;
        self
    }

    pub fn has_images(&self) -> bool {
        self.content
            .iter()
            .any(|p| matches!(p, ContentPart::Image { .. }))
    }

    /// Concatenated text parts.
    pub fn text_content(&self) -> String {
        self.content
            .iter()
            .filter_map(|p| match p {
                ContentPart::Text(t) => Some(t.as_str()),
                ContentPart::Image { .. } => None,
            })
            .collect::<Vec<_>>()
            .join("\n")
    }

    pub fn validate(&self, supports_images: bool) -> Result<()> {
        if self.content.is_empty() {
            return Err(Error::InvalidRequest("request has no content".into()));
        }
        if self.has_images() && !supports_images {
            return Err(Error::Capability(
                "image parts sent to a text-only backend".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelResponse {
    pub score: Option<Score>,
    pub report: Option<String>,
    pub label: Option<SentimentLabel>,
    pub hypotheses: Option<Vec<String>>,
}

impl ModelResponse {
    /// True when exactly the fields required by `schema` are present.
    pub fn matches(&self, schema: ResponseSchema) -> bool {
        let shape = (
            self.score.is_some(),
            self.report.is_some(),
            self.label.is_some(),
            self.hypotheses.as_ref().map(|h| !h.is_empty()),
        );
        match schema {
            ResponseSchema::ScoreAndReport => shape == (true, true, false, None),
            ResponseSchema::ScoreOnly => shape == (true, false, false, None),
            ResponseSchema::ReportOnly => shape == (false, true, false, None),
            ResponseSchema::LabelAndReport => shape == (false, true, true, None),
            ResponseSchema::Hypotheses => shape == (false, false, false, Some(true)),
        }
    }

    pub fn expect_score(&self) -> Result<Score> {
        self.score
            .ok_or_else(|| Error::Protocol("response carries no score".into()))
    }

    pub fn expect_report(&self) -> Result<String> {
        self.report
            .clone()
            .ok_or_else(|| Error::Protocol("response carries no report".into()))
    }

    pub fn expect_label(&self) -> Result<SentimentLabel> {
        self.label
            .ok_or_else(|| Error::Protocol("response carries no label".into()))
    }
}

#[derive(Debug, Clone, Copy)]
pub enum EmbedInput<'a> {
    Text(&'a str),
    Image(&'a [u8]),
}

/// A model provider. Implementations are stateless from the caller's point
/// of view and may be shared across threads.
pub trait ModelBackend: Send + Sync {
    fn complete(&self, req: &ModelRequest) -> Result<ModelResponse>;

    /// Embeds text or image bytes into a vector of length [`dimension`](Self::dimension).
    fn embed(&self, input: EmbedInput<'_>) -> Result<FeatureVector>;

    fn supports_images(&self) -> bool;

    fn dimension(&self) -> usize;
}

/// The backend selected by `config.backend`: the stub (with the configured
/// or bundled lexicon) or a remote client.
pub fn backend_from_config(config: &crate::config::PipelineConfig) -> Result<Box<dyn ModelBackend>> {
    use crate::config::BackendKind;
    Ok(match config.backend {
        BackendKind::Stub => {
            let lexicon = match &config.lexicon_path {
                Some(p) => StubLexicon::from_file(p)?,
                None => StubLexicon::default(),
            };
            Box::new(StubBackend::new(lexicon, config.dimension, config.valence.clone()))
        }
        BackendKind::Remote => Box::new(RemoteBackend::new(
            config.remote.clone(),
            config.dimension,
            config.concurrency,
        )?),
    })
}

/// The single place a model-emitted score may be clamped into `[-1, 1]`.
pub(crate) fn clamp_model_score(raw: f64) -> Result<Score> {
    if !raw.is_finite() {
        return Err(Error::Protocol(format!("model emitted non-finite score {raw}")));
    }
    if !(-1.0..=1.0).contains(&raw) {
        log::warn!("clamping model score {raw} into [-1, 1]");
    }
    Score::new(raw.clamp(-1.0, 1.0))
}
