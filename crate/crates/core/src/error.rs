use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Error taxonomy shared by every module; the CLI maps variants onto its
/// exit-code contract (input errors vs numerical failures).
#[derive(Debug, Error)]
pub enum Error {
    /// Physically invalid input (non-positive diameter, negative flowrate, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// Incompatible array shapes on the tape.
    #[error("shape error: {0}")]
    Shape(String),

    /// Violated API precondition.
    #[error("contract error: {0}")]
    Contract(String),

    /// Dataset or manifest schema problem.
    #[error("schema error: {0}")]
    Schema(String),

    /// Unparseable cell in an input file.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: u64, msg: String },

    /// Dataset-level failure (all rows dropped, zero stddev, ...).
    #[error("data error: {0}")]
    Data(String),

    /// Numerical failure while training; the message carries the epoch index.
    #[error("training error: {0}")]
    Training(String),

    /// Non-finite value produced by a forward pass under check.
    #[error("evaluation error: {0}")]
    Eval(String),

    /// Checkpoint cannot be restored.
    #[error("checkpoint load error: {0}")]
    Load(String),

    /// Invalid run configuration.
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}
