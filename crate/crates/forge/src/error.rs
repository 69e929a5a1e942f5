use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = ForgeError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum ForgeError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Core(#[from] forge_core::Error),
    #[error("unsupported checkpoint format version `{0}`")]
    Version(String),
    #[error("checkpoint truncated in {0}")]
    Truncated(String),
    #[error("tensor `{name}` has dims {found:?} but the header config implies {expected:?}")]
    Dims {
        name: String,
        found: Vec<usize>,
        expected: Vec<usize>,
    },
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("data-usage audit failed in stage `{stage}`: {detail}")]
    Audit { stage: String, detail: String },
    #[error("stage `{stage}` failed: {source}")]
    Stage { stage: String, source: Box<ForgeError> },
    #[error("corpus files: {0}")]
    Corpus(String),
    #[error("results: {0}")]
    Results(String),
}

impl ForgeError {
    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> ForgeError {
        let path = path.into();
        move |source| ForgeError::Io { path, source }
    }

    pub fn in_stage(self, stage: &str) -> ForgeError {
        match self {
            e @ (ForgeError::Stage { .. } | ForgeError::Audit { .. } | ForgeError::Config(_)) => e,
            e => ForgeError::Stage {
                stage: stage.into(),
                source: Box::new(e),
            },
        }
    }

    /// Process exit code: 2 config, 3 audit, 4 any other failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            ForgeError::Config(_) => 2,
            ForgeError::Audit { .. } => 3,
            ForgeError::Stage { source, .. } => match source.exit_code() {
                3 => 3,
                _ => 4,
            },
            _ => 4,
        }
    }
}
