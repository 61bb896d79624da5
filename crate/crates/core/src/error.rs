use std::fmt;
use std::path::PathBuf;

use thiserror::Error;

/// Pipeline stage, used to tag errors raised while running a post end to end.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Stage {
    TextAnalyst,
    ImageAnalyst,
    FusionInspector,
    KbAssistant,
    ClassifierAggregator,
}

impl Stage {
    pub fn number(self) -> u8 {
        match self {
            Stage::TextAnalyst => 1,
            Stage::ImageAnalyst => 2,
            Stage::FusionInspector => 3,
            Stage::KbAssistant => 4,
            Stage::ClassifierAggregator => 5,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Stage::TextAnalyst => "text analyst",
            Stage::ImageAnalyst => "image analyst",
            Stage::FusionInspector => "fusion inspector",
            Stage::KbAssistant => "kb assistant",
            Stage::ClassifierAggregator => "classifier aggregator",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "stage {} ({})", self.number(), self.name())
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown sentiment label {0:?}")]
    UnknownLabel(String),

    #[error("score {0} is outside [-1, 1] or not finite")]
    ScoreOutOfRange(f64),

    #[error("invalid feature vector: {0}")]
    InvalidVector(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid post: {0}")]
    InvalidPost(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("text is empty after preprocessing")]
    EmptyText,

    #[error("weight mismatch: {0}")]
    WeightMismatch(String),

    #[error("weight violation: {0}")]
    WeightViolation(String),

    #[error("missing or unreadable frame: {0}")]
    MissingFrame(String),

    #[error("invalid model request: {0}")]
    InvalidRequest(String),

    #[error("transport error: {0}")]
    Transport(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("capability error: {0}")]
    Capability(String),

    #[error("knowledge base store is empty")]
    EmptyStore,

    #[error("retrieval returned no entries")]
    EmptyRetrieval,

    #[error("duplicate id {0:?}")]
    DuplicateId(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("schema error: {}", format_schema_issues(.0))]
    Schema(Vec<SchemaIssue>),

    #[error("nothing to evaluate")]
    EmptyEvaluation,

    #[error("{stage}: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: Box<Error>,
    },
}

/// One malformed line in a JSONL input file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SchemaIssue {
    pub line: usize,
    pub message: String,
}

fn format_schema_issues(issues: &[SchemaIssue]) -> String {
    issues
        .iter()
        .map(|i| format!("line {}: {}", i.line, i.message))
        .collect::<Vec<_>>()
        .join("; ")
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn at_stage(self, stage: Stage) -> Self {
        match self {
            already @ Error::Stage { .. } => already,
            other => Error::Stage {
                stage,
                source: Box::new(other),
            },
        }
    }

    /// The innermost error, looking through stage tags.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }

    pub fn stage(&self) -> Option<Stage> {
        match self {
            Error::Stage { stage, .. } => Some(*stage),
            _ => None,
        }
    }

    /// True for failures that originate in a model backend.
    pub fn is_backend(&self) -> bool {
        matches!(
            self.root(),
            Error::Transport(_) | Error::Protocol(_) | Error::Capability(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
