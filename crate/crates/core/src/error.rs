//! Error type shared by every module.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("non-finite sample at {at}")]
    NonFinite { at: String },

    #[error("declared decay order {order} on axis {axis} is not integrable (need < -1 or an explicit finite part)")]
    DecayTooSlow { axis: usize, order: f64 },

    #[error("node count {0} is below the minimum of 8")]
    TooFewNodes(usize),

    #[error("design matrix ill-conditioned (cond {cond:.3e}); colliding exponents {first} and {second}")]
    IllConditioned { cond: f64, first: String, second: String },

    #[error("invalid asymptotic basis: {0}")]
    InvalidBasis(String),

    #[error("singular element at {at}")]
    Singular { at: String },

    #[error("under-resolved: raw value {raw} is {distance:.3e} from the nearest integer")]
    UnderResolved { raw: f64, distance: f64 },

    #[error("fit residual {residual:.3e} exceeds threshold {threshold:.3e}")]
    FitResidual { residual: f64, threshold: f64 },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("orientation must be supplied")]
    MissingOrientation,

    #[error("invalid path: {0}")]
    InvalidPath(String),

    #[error("input is not self-adjoint (defect {0:.3e})")]
    NotSelfAdjoint(f64),

    #[error("zero mode in spectrum")]
    ZeroMode,

    #[error("missing data: {0}")]
    Missing(String),

    #[error("search budget exhausted: {0}")]
    SearchFailed(String),

    #[error("invalid input: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;
