use std::path::PathBuf;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("variable v{0} is not bound by the assignment")]
    UnboundVariable(u32),

    #[error("generation config invalid: {0}")]
    Generate(String),

    #[error("expression is not in disjunctive normal form: {0}")]
    NotDnf(String),

    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("cosine similarity of a zero-norm vector")]
    ZeroNorm,

    #[error("log of a non-positive value ({0})")]
    LogDomain(f64),

    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),

    #[error("backward pass requires a scalar loss node, got {rows}x{cols}")]
    NonScalarLoss { rows: usize, cols: usize },

    #[error("backward already ran on this tape; build a fresh tape per step")]
    BackwardConsumed,

    #[error("no optimizer moments for parameter {0:?}; optimizer and store are out of sync")]
    MissingMoments(String),

    #[error("dropout rate must be in [0, 1), got {0}")]
    DropoutRate(f64),

    #[error("training diverged: {0}")]
    Divergence(String),

    #[error("{path}:{line}: {message}")]
    Data {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("empty negative pool for user {0}: every item is a positive")]
    EmptyNegativePool(u32),

    #[error("unknown item {0}")]
    UnknownItem(String),

    #[error("empty evaluation split")]
    EmptySplit,

    #[error("gradient check failed: max relative error {max_rel:e} exceeds {tol:e}")]
    GradCheck { max_rel: f64, tol: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
