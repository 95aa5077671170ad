//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },

    #[error("non-finite value in {context}")]
    NonFinite { context: &'static str },

    #[error("centered ranks need at least 2 scores, got {0}")]
    TooFewScores(usize),

    #[error("sigma must be positive, got {0}")]
    NonPositiveSigma(f64),

    #[error("perturbation of dim {dim} does not fit in noise table of length {table_len}")]
    SliceTooLong { dim: usize, table_len: usize },

    #[error("behavior kind mismatch: expected {expected}, got {got}")]
    KindMismatch {
        expected: &'static str,
        got: &'static str,
    },

    #[error("novelty query against an empty archive")]
    EmptyArchive,

    #[error("negative novelty {0} passed to agent selection")]
    NegativeNovelty(f64),

    #[error("environment has no 2-D final positions; overhead export is undefined")]
    NoFinalPositions,

    #[error("policy spec required for this environment")]
    MissingPolicySpec,

    #[error("rollout failed at generation {generation}, agent {agent_id}, sample {sample_index}: {source}")]
    Batch {
        generation: u64,
        agent_id: usize,
        sample_index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("checkpoint does not match this run: {0}")]
    CheckpointMismatch(String),

    #[error("corrupt policy file: {0}")]
    PolicyFile(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// Process exit code mandated for this error class (config errors exit 2,
    /// runtime failures exit 1).
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Config(_) => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
