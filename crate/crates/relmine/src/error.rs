use thiserror::Error;

/// Crate-wide error type. Variants are grouped by the pipeline stage that
/// raises them; the CLI maps them onto exit codes (data vs training).
#[derive(Error, Debug)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at {path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("unknown answer category {category:?} for question {question}")]
    UnknownCategory { question: String, category: String },

    #[error("respondent age {age} outside the 15-25 sample window")]
    AgeOutOfRange { age: i64 },

    #[error("missing required field {0}")]
    MissingField(String),

    #[error("embedding lookup miss for text hash {0}")]
    EmbeddingMiss(String),

    #[error("relation id {0} has no weight matrix")]
    MissingRelationWeight(u32),

    #[error("row {row} has {eligible} eligible neighbors, fewer than k_sim = {k}")]
    InsufficientNeighbors { row: usize, eligible: usize, k: usize },

    #[error("target base rate {target} unreachable: closest achievable {achieved} (tolerance 0.05)")]
    InfeasibleBaseRate { target: f64, achieved: f64 },

    #[error("training diverged at epoch {epoch}: loss = {loss}")]
    Diverged { epoch: usize, loss: f64 },

    #[error("frozen LM parameter digest changed during training ({before} -> {after})")]
    FreezeViolation { before: String, after: String },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("unknown respondent id {0}")]
    UnknownRespondent(String),

    #[error("invalid configuration: {0}")]
    Config(String),
}

impl Error {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io { path: path.as_ref().display().to_string(), source }
    }

    /// True for errors caused by bad input data rather than training dynamics.
    pub fn is_data_error(&self) -> bool {
        !matches!(self, Error::Diverged { .. } | Error::FreezeViolation { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
