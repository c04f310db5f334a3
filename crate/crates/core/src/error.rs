use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("no likelihood row defined for mode {mode} under action {action}")]
    UnknownLikelihood { mode: usize, action: &'static str },

    #[error("impossible evidence: observation {observation} has zero probability under the predicted belief of asset {asset}")]
    ImpossibleEvidence { asset: u32, observation: &'static str },

    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("row {row}: {message}")]
    Validation { row: u64, message: String },

    #[error("window {0} has no scenario outcomes")]
    MismatchedWindows(u64),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
