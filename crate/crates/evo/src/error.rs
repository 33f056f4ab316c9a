use thiserror::Error;

pub type Result<T> = std::result::Result<T, EvoError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvoError {
    #[error("template `{template}` is missing bindings: {}", missing.join(", "))]
    MissingBindings {
        template: String,
        missing: Vec<String>,
    },

    #[error("no fenced code block in response")]
    NoCodeBlock,

    #[error("empty fenced code block in response")]
    EmptyCodeBlock,

    #[error("unknown task `{id}` (catalog: {})", known.join(", "))]
    UnknownTask { id: String, known: Vec<String> },

    #[error("catalog error: {0}")]
    Catalog(String),

    #[error("backend unreachable after {attempts} attempts: {message}")]
    BackendUnreachable { attempts: u32, message: String },

    #[error("backend error: {0}")]
    Backend(String),

    #[error("replay miss for request `{tag}` (digest {digest})")]
    ReplayMiss { tag: String, digest: String },

    #[error("transcript error: {0}")]
    Transcript(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("no valid individual after initialization ({attempts} candidates tried)")]
    NoValidIndividual { attempts: usize },

    #[error("random walk aborted at step {step}: {resamples} invalid offspring in a row")]
    WalkAborted { step: usize, resamples: usize },

    #[error("sandbox error: {0}")]
    Sandbox(String),

    #[error("io error: {0}")]
    Io(String),

    #[error(transparent)]
    Core(#[from] hevo_core::Error),
}

impl From<std::io::Error> for EvoError {
    fn from(e: std::io::Error) -> Self {
        EvoError::Io(e.to_string())
    }
}
