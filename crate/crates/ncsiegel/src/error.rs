//! Error type shared across the crate, with machine-readable codes for the CLI.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("division by zero")]
    DivisionByZero,

    #[error("division by a value indistinguishable from zero (all known digits vanish, O(l^{abs}))")]
    DivisionByIndistinguishableZero { abs: i64 },

    #[error("precision exhausted: {0}")]
    PrecisionExhausted(String),

    #[error("comparison undecidable at the available precision: {0}")]
    Undecidable(String),

    #[error("operands use different scalar backends (exact vs capped)")]
    BackendMismatch,

    #[error("operation requires the exact-rational backend")]
    BackendUnsupported,

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("substitution argument {index} has a nonzero constant term")]
    ConstantTermNonzero { index: usize },

    #[error("linear part is not the identity")]
    NotNormalized,

    #[error("norm of the nonlinear part is not below the radius")]
    NormTooLarge,

    #[error("perturbation norm is not below the radius")]
    RadiusViolation,

    #[error("linear part is not diagonal")]
    NotDiagonal,

    #[error("resonant obstruction: nonzero coefficient at word {word:?}, component {component}")]
    ResonantObstruction { word: Vec<u8>, component: u8 },

    #[error("schedule precondition violated: {0}")]
    ScheduleViolation(String),

    #[error("contraction failure: measured step norm exceeds the asserted bound ({0})")]
    ContractionFailure(String),

    #[error("iteration schedule diverged: {0}")]
    ScheduleDivergence(String),

    #[error("no feasible B below the search cap {cap}")]
    NoFeasibleB { cap: u64 },

    #[error("inconsistent weight table: {0}")]
    InconsistentWeights(String),

    #[error("empty parameter grid")]
    EmptyGrid,

    #[error("parse error at {path}: {detail}")]
    Parse { path: String, detail: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("internal verification failed: {0}")]
    Verification(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable machine-readable code, also used to pick the CLI exit status.
    pub fn code(&self) -> &'static str {
        match self {
            Error::DivisionByZero => "division-by-zero",
            Error::DivisionByIndistinguishableZero { .. } => "division-by-indistinguishable-zero",
            Error::PrecisionExhausted(_) => "precision-exhausted",
            Error::Undecidable(_) => "undecidable",
            Error::BackendMismatch => "backend-mismatch",
            Error::BackendUnsupported => "backend-unsupported",
            Error::ShapeMismatch(_) => "shape-mismatch",
            Error::ConstantTermNonzero { .. } => "constant-term-nonzero",
            Error::NotNormalized => "not-normalized",
            Error::NormTooLarge => "norm-too-large",
            Error::RadiusViolation => "radius-violation",
            Error::NotDiagonal => "not-diagonal",
            Error::ResonantObstruction { .. } => "resonant-obstruction",
            Error::ScheduleViolation(_) => "schedule-violation",
            Error::ContractionFailure(_) => "contraction-failure",
            Error::ScheduleDivergence(_) => "schedule-divergence",
            Error::NoFeasibleB { .. } => "no-feasible-b",
            Error::InconsistentWeights(_) => "inconsistent-weights",
            Error::EmptyGrid => "empty-grid",
            Error::Parse { .. } => "parse-error",
            Error::InvalidInput(_) => "invalid-input",
            Error::Verification(_) => "verification-failed",
            Error::Io(_) => "io-error",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
