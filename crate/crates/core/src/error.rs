use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },

    #[error("backward called on an empty graph")]
    EmptyGraph,

    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("label {label} out of range 1..={vocab}")]
    LabelOutOfRange { label: usize, vocab: usize },

    #[error("input too short: {0}")]
    TooShort(String),

    #[error("enumeration budget exceeded: T + U = {0} > 14")]
    BudgetExceeded(usize),

    #[error("band width {0} is below the minimum of 2")]
    BandTooNarrow(usize),

    #[error("band of width {r} cannot connect (1,0) to ({t},{u})")]
    BandDisconnected { r: usize, t: usize, u: usize },

    #[error("terminal lattice cell is unreachable inside the pruning band")]
    Unreachable,

    #[error("training diverged at step {step}: loss is not finite")]
    Diverged { step: usize },

    #[error("session is closed")]
    SessionClosed,

    #[error("wav: {0}")]
    Wav(String),

    #[error("feature file: {0}")]
    Feat(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub(crate) fn shape_err(op: &'static str, detail: impl Into<String>) -> Error {
    Error::Shape {
        op,
        detail: detail.into(),
    }
}
