use thiserror::Error;

/// Errors raised by the mzlab library.
#[derive(Error, Debug, Clone, PartialEq)]
pub enum MzError {
    #[error("level L must be at least 1, got {0}")]
    InvalidLevel(f64),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("manifold mismatch: expected {expected}, found {found}")]
    ManifoldMismatch { expected: String, found: String },

    #[error("empty support")]
    EmptySupport,

    #[error("empty point set")]
    EmptyPointSet,

    #[error("need at least 2 points, got {0}")]
    TooFewPoints(usize),

    #[error("basis truncated at level {available}, but level {requested} was requested")]
    BasisTruncated { available: f64, requested: f64 },

    #[error("quadrature exact to degree {available}, need at least {required}")]
    InsufficientQuadrature { available: usize, required: usize },

    #[error("{orphans} probe points are not covered by the base partition (delta = {delta})")]
    OrphanPoints { orphans: usize, delta: f64 },

    #[error("tau not dominant at scale {radius}: some ball has zero mass")]
    NotDominant { radius: f64 },

    #[error("scale d = {d} is outside (delta(supp nu) = {support_mesh}, {upper}]")]
    ScaleOutOfRange { d: f64, support_mesh: f64, upper: f64 },

    #[error("support too sparse: delta(supp nu) = {support_mesh} >= d = {d}")]
    SupportTooSparse { support_mesh: f64, d: f64 },

    #[error("heat kernel tail tolerance {tol} unachievable below truncation level {max_level}")]
    TruncationUnachievable { tol: f64, max_level: usize },

    #[error("probe set too coarse: spacing {spacing} exceeds 1/(8L) = {limit}")]
    ProbeTooCoarse { spacing: f64, limit: f64 },

    #[error("dimension of Pi_L ({dim}) exceeds the configured cap ({cap})")]
    DimensionCap { dim: usize, cap: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("linear program infeasible (phase-one residual {residual:.3e})")]
    Infeasible { residual: f64, direction: Vec<f64> },

    #[error("invariant violated: {0}")]
    InvariantViolated(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, MzError>;

impl From<std::io::Error> for MzError {
    fn from(e: std::io::Error) -> Self {
        MzError::Io(e.to_string())
    }
}

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> MzError {
    MzError::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
