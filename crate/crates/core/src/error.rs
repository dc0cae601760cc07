//! Error type shared by all modules of the crate.

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Everything that can go wrong while validating chains, decomposing
/// operators, or driving an evolution.
///
/// Validation errors name the offending row or pair so a failed chain file
/// can be fixed by inspection.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("row {row} of the transition matrix sums to {sum:.17}, not 1")]
    NonStochastic { row: usize, sum: f64 },

    #[error("transition matrix entry ({row}, {col}) = {value} lies outside [0, 1]")]
    BadEntry { row: usize, col: usize, value: f64 },

    #[error("chain is not irreducible: vertex {vertex} is not strongly connected to vertex 0")]
    NotIrreducible { vertex: usize },

    #[error("chain is not aperiodic: cycle lengths share period {period}")]
    NotAperiodic { period: u64 },

    #[error("chain is not reversible: detailed balance fails for pair ({x}, {y}) by {violation:.3e}")]
    NotReversible { x: usize, y: usize, violation: f64 },

    #[error("marked vertex {index} is out of range for a chain on {n} vertices")]
    MarkedOutOfRange { index: usize, n: usize },

    #[error("linear system is singular or near-singular ({context})")]
    SingularSystem { context: String },

    #[error("interpolation parameter s = {s} is outside [0, 1]")]
    SOutOfRange { s: f64 },

    #[error("bad parameters: {message}")]
    BadParams { message: String },

    #[error("eigensolver did not converge within {sweeps} sweeps")]
    EigensolverFailure { sweeps: usize },

    #[error("eigenvalue {lambda} is too close to 1 at s = {s}; denominator degenerates")]
    DegenerateDenominator { lambda: f64, s: f64 },

    #[error("the discriminant derivative is singular at s = 1")]
    SAtOne,

    #[error("vertex count {n} exceeds the cap {cap} for this operation")]
    DimensionCap { n: usize, cap: usize },

    #[error("state norm drifted by {drift:.3e} during evolution")]
    NonUnitaryDrift { drift: f64 },

    #[error("step-size control failed to converge after {refinements} refinements")]
    StepControlFailure { refinements: usize },

    #[error("random walk did not reach a marked vertex within {cap} steps")]
    WalkDidNotAbsorb { cap: u64 },

    #[error("internal consistency check failed: {what} (deviation {deviation:.3e})")]
    ConsistencyFailure { what: String, deviation: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("chain file is not valid JSON for the chain schema: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Convenience constructor for [`Error::BadParams`].
    pub fn bad_params(message: impl Into<String>) -> Self {
        Error::BadParams {
            message: message.into(),
        }
    }

    /// Stable short tag naming the error variant, for CLI output and
    /// scripting against it.
    pub fn code(&self) -> &'static str {
        match self {
            Error::NonStochastic { .. } => "NonStochastic",
            Error::BadEntry { .. } => "BadEntry",
            Error::NotIrreducible { .. } => "NotIrreducible",
            Error::NotAperiodic { .. } => "NotAperiodic",
            Error::NotReversible { .. } => "NotReversible",
            Error::MarkedOutOfRange { .. } => "MarkedOutOfRange",
            Error::SingularSystem { .. } => "SingularSystem",
            Error::SOutOfRange { .. } => "SOutOfRange",
            Error::BadParams { .. } => "BadParams",
            Error::EigensolverFailure { .. } => "EigensolverFailure",
            Error::DegenerateDenominator { .. } => "DegenerateDenominator",
            Error::SAtOne => "SAtOne",
            Error::DimensionCap { .. } => "DimensionCap",
            Error::NonUnitaryDrift { .. } => "NonUnitaryDrift",
            Error::StepControlFailure { .. } => "StepControlFailure",
            Error::WalkDidNotAbsorb { .. } => "WalkDidNotAbsorb",
            Error::ConsistencyFailure { .. } => "ConsistencyFailure",
            Error::Io(_) => "Io",
            Error::Json(_) => "Json",
        }
    }

    /// True if the error indicates an invalid chain (as opposed to bad
    /// usage, a dimension cap, or a numerical failure).
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::NonStochastic { .. }
                | Error::BadEntry { .. }
                | Error::NotIrreducible { .. }
                | Error::NotAperiodic { .. }
                | Error::NotReversible { .. }
                | Error::MarkedOutOfRange { .. }
                | Error::Json(_)
        )
    }
}
