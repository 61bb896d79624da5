//! Pipeline configuration and its flat `key = value` file format.
//!
//! ```text
//! # comments start with '#'
//! dimension = 256
//! theta = 0.4
//! top_k = 5
//! alpha = 0.7
//! beta = 0.3
//! segment_weighting = token_proportional
//! backend = stub
//! valence.Happiness = 0.9
//! ```

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{parse_label, Score, ValenceMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentWeighting {
    TokenProportional,
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameWeighting {
    Uniform,
}

/// Retry behaviour for retryable HTTP failures (429 and 5xx).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    /// Total attempts including the first one.
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub factor: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 3,
            base_delay: Duration::from_secs(1),
            factor: 2.0,
        }
    }
}

impl RetryPolicy {
    /// Delay to sleep after failed attempt number `attempt` (1-based).
    pub fn delay_after(&self, attempt: u32) -> Duration {
        let exp = self.factor.powi(attempt.saturating_sub(1) as i32);
        self.base_delay.mul_f64(exp)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteSpec {
    /// Base URL of an OpenAI-compatible API, e.g. `https://api.openai.com/v1`.
    pub endpoint: String,
    pub model: String,
    pub embedding_model: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    pub timeout: Duration,
    pub retry: RetryPolicy,
    /// Whether the chat model accepts image parts.
    pub vision: bool,
}

impl Default for RemoteSpec {
    fn default() -> Self {
        RemoteSpec {
            endpoint: "http://localhost:8000/v1".into(),
            model: "gpt-4o".into(),
            embedding_model: "text-embedding-3-small".into(),
            api_key_env: "OPENAI_API_KEY".into(),
            timeout: Duration::from_secs(60),
            retry: RetryPolicy::default(),
            vision: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Stub,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Per-modality feature dimension; fused vectors have twice this length.
    pub dimension: usize,
    /// Conflict threshold; refinement triggers only when a delta strictly exceeds it.
    pub theta: f64,
    pub top_k: usize,
    pub alpha: f64,
    pub beta: f64,
    pub segment_weighting: SegmentWeighting,
    pub frame_weighting: FrameWeighting,
    pub backend: BackendKind,
    pub remote: RemoteSpec,
    /// Maximum concurrent in-flight backend calls.
    pub concurrency: usize,
    pub valence: ValenceMap,
    pub stopwords_path: Option<PathBuf>,
    pub lexicon_path: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            dimension: 256,
            theta: 0.4,
            top_k: 5,
            alpha: 0.7,
            beta: 0.3,
            segment_weighting: SegmentWeighting::TokenProportional,
            frame_weighting: FrameWeighting::Uniform,
            backend: BackendKind::Stub,
            remote: RemoteSpec::default(),
            concurrency: 4,
            valence: ValenceMap::default(),
            stopwords_path: None,
            lexicon_path: None,
        }
    }
}

impl PipelineConfig {
    pub fn fused_dimension(&self) -> usize {
        2 * self.dimension
    }

    pub fn validate(&self) -> Result<()> {
        if self.dimension == 0 {
            return Err(Error::Config("dimension must be positive".into()));
        }
        if !(self.theta.is_finite() && self.theta > 0.0) {
            return Err(Error::Config(format!("theta must be > 0, got {}", self.theta)));
        }
        if self.top_k == 0 {
            return Err(Error::Config("top_k must be at least 1".into()));
        }
        check_mixing_weights(self.alpha, self.beta).map_err(|e| Error::Config(e.to_string()))?;
        if self.concurrency == 0 {
            return Err(Error::Config("concurrency must be at least 1".into()));
        }
        if self.remote.retry.max_attempts == 0 {
            return Err(Error::Config("max_attempts must be at least 1".into()));
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = PipelineConfig::default();
        cfg.apply_text(&text)?;
        // Relative resource paths resolve against the config file's directory.
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        for p in [&mut cfg.stopwords_path, &mut cfg.lexicon_path].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies every `key = value` line of `text` on top of the current values.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            self.set(key.trim(), value.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    /// Sets a single key. Also used for command-line overrides.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| Error::Config(format!("{key}: cannot parse {v:?}")))
        }
        fn flag(key: &str, v: &str) -> Result<bool> {
            match v {
                "true" | "yes" | "1" => Ok(true),
                "false" | "no" | "0" => Ok(false),
                _ => Err(Error::Config(format!("{key}: expected true or false"))),
            }
        }

        match key {
            "dimension" => self.dimension = num(key, value)?,
            "theta" => self.theta = num(key, value)?,
            "top_k" => self.top_k = num(key, value)?,
            "alpha" => self.alpha = num(key, value)?,
            "beta" => self.beta = num(key, value)?,
            "segment_weighting" => {
                self.segment_weighting = match value {
                    "token_proportional" => SegmentWeighting::TokenProportional,
                    "uniform" => SegmentWeighting::Uniform,
                    _ => return Err(Error::Config(format!("unknown segment_weighting {value:?}"))),
                }
            }
            "frame_weighting" => {
                self.frame_weighting = match value {
                    "uniform" => FrameWeighting::Uniform,
                    _ => return Err(Error::Config(format!("unknown frame_weighting {value:?}"))),
                }
            }
            "backend" => {
                self.backend = match value {
                    "stub" => BackendKind::Stub,
                    "remote" => BackendKind::Remote,
                    _ => return Err(Error::Config(format!("unknown backend {value:?}"))),
                }
            }
            "endpoint" => self.remote.endpoint = value.to_string(),
            "model" => self.remote.model = value.to_string(),
            "embedding_model" => self.remote.embedding_model = value.to_string(),
            "api_key_env" => self.remote.api_key_env = value.to_string(),
            "timeout_secs" => self.remote.timeout = Duration::from_secs_f64(num(key, value)?),
            "max_attempts" => self.remote.retry.max_attempts = num(key, value)?,
            "retry_base_ms" => {
                self.remote.retry.base_delay = Duration::from_millis(num(key, value)?)
            }
            "retry_factor" => self.remote.retry.factor = num(key, value)?,
            "vision" => self.remote.vision = flag(key, value)?,
            "concurrency" => self.concurrency = num(key, value)?,
            "stopwords" => self.stopwords_path = Some(PathBuf::from(value)),
            "lexicon" => self.lexicon_path = Some(PathBuf::from(value)),
            k if k.starts_with("valence.") => {
                let label = parse_label(&k["valence.".len()..])?;
                self.valence.set(label, Score::new(num(key, value)?)?);
            }
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }
}

/// Checks that `alpha` and `beta` are in `[0, 1]` and sum to 1 within 1e-9.
pub fn check_mixing_weights(alpha: f64, beta: f64) -> Result<()> {
    let in_unit = |x: f64| x.is_finite() && (0.0..=1.0).contains(&x);
    if !in_unit(alpha) || !in_unit(beta) {
        return Err(Error::WeightViolation(format!(
            "alpha={alpha}, beta={beta} must both lie in [0, 1]"
        )));
    }
    if (alpha + beta - 1.0).abs() > 1e-9 {
        return Err(Error::WeightViolation(format!(
            "alpha + beta = {} (must be 1)",
            alpha + beta
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{label_valence, SentimentLabel};

    #[test]
    fn defaults_are_valid() {
        PipelineConfig::default().validate().unwrap();
    }

    #[test]
    fn rejects_alpha_beta_not_summing_to_one() {
        let mut cfg = PipelineConfig {
            alpha: 0.7,
            beta: 0.31,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        cfg.beta = 0.3 + 5e-10;
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn rejects_bad_theta_and_k() {
        let cfg = PipelineConfig {
            theta: 0.0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = PipelineConfig {
            top_k: 0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn parses_key_value_text() {
        let mut cfg = PipelineConfig::default();
        cfg.apply_text(
            "# test\n dimension = 8\ntheta=0.25\nsegment_weighting = uniform\nvalence.Fear = -0.9\nretry_base_ms = 5\n",
        )
        .unwrap();
        assert_eq!(cfg.dimension, 8);
        assert_eq!(cfg.theta, 0.25);
        assert_eq!(cfg.segment_weighting, SegmentWeighting::Uniform);
        assert_eq!(label_valence(SentimentLabel::Fear, &cfg.valence).value(), -0.9);
        assert_eq!(cfg.remote.retry.base_delay, Duration::from_millis(5));
    }

    #[test]
    fn unknown_keys_are_errors() {
        let mut cfg = PipelineConfig::default();
        let err = cfg.apply_text("colour = blue").unwrap_err();
        assert!(err.to_string().contains("line 1"));
        assert!(cfg.apply_text("valence.Joy = 0.5").is_err());
        assert!(cfg.apply_text("valence.Like = 1.5").is_err());
    }

    #[test]
    fn retry_delays_grow_geometrically() {
        let p = RetryPolicy::default();
        assert_eq!(p.delay_after(1), Duration::from_secs(1));
        assert_eq!(p.delay_after(2), Duration::from_secs(2));
        assert_eq!(p.delay_after(3), Duration::from_secs(4));
    }
}
