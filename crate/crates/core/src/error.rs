use thiserror::Error;

use crate::solver::FittedModel;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid label {label} for logistic loss (expected -1 or +1)")]
    InvalidLabel { label: f64 },

    /// A dual variable lies outside the domain of the loss conjugate.
    #[error("y*alpha = {value} is outside the conjugate domain [0, 1]")]
    ConjugateDomain { value: f64 },

    #[error("dual point infeasible at instance {instance}")]
    DualInfeasible { instance: usize },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("labels contain a single class; binary classification needs two")]
    SingleClass,

    #[error("expected two distinct labels for binary classification, found {0}")]
    TooManyClasses(usize),

    #[error("line {line}, column {column}: missing value")]
    MissingValue { line: usize, column: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("all feature columns are constant")]
    AllConstant,

    #[error("solver did not reach the gap tolerance after {iterations} iterations (gap {gap:e})", iterations = .0.iterations, gap = .0.gap)]
    NotConverged(Box<FittedModel>),

    #[error("uncertainty level exceeds representable shift (delta = {delta} >= 1)")]
    UncertaintyOverflow { delta: f64 },

    #[error("corner enumeration for n = {n} exceeds the cap of {cap}; use sampling")]
    TooManyCorners { n: usize, cap: usize },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
