//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter violates a documented domain constraint.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// An input is valid in type but numerically meaningless (e.g. a DC
    /// reference too close to zero for a ratio).
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    /// The reduced conductance matrix has no usable pivot; the netlist is
    /// malformed (isolated node or zero-conductance cut).
    #[error("singular conductance matrix: pivot {pivot:.3e} at elimination step {step}")]
    SingularMatrix { step: usize, pivot: f64 },

    #[error("waveform too short: {got} samples, need at least {min}")]
    TooFewSamples { got: usize, min: usize },

    #[error("non-finite value in {context} for case {case_id}")]
    NonFinite { context: &'static str, case_id: u32 },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// A CSV or JSON document does not match the documented schema.
    #[error("schema mismatch: missing columns {missing:?}, unexpected columns {unexpected:?}")]
    Schema {
        missing: Vec<String>,
        unexpected: Vec<String>,
    },

    #[error("feature mismatch between model and dataset: {0}")]
    FeatureMismatch(String),

    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
