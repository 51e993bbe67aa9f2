use thiserror::Error;

/// Errors raised by the library.
///
/// Variants fall in two groups: input problems (bad spectra, targets or
/// parameters) and degenerate conditions that are well-posed inputs for which
/// a requested quantity does not exist. The CLI maps the latter to exit code 2.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid spectrum: {0}")]
    InvalidSpectrum(String),

    #[error("invalid target: {0}")]
    InvalidTarget(String),

    #[error("schema violation at '{pointer}': {message}")]
    Schema { pointer: String, message: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("truncation error: {0}")]
    Truncation(String),

    #[error(
        "degenerate interpolation: {positive} positive eigenvalues do not exceed n = {n}; \
         the ridgeless effective regularization is zero"
    )]
    DegenerateInterpolation { positive: u64, n: u64 },

    #[error("root finder did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error(
        "kappa = {kappa:e} lies below the ridgeless value {kappa0:e}; delta would be negative"
    )]
    NegativeDelta { kappa: f64, kappa0: f64 },

    #[error("target coefficient {index} lies beyond the spectrum horizon {horizon}")]
    TargetBeyondHorizon { index: usize, horizon: usize },

    #[error("epsilon = {epsilon} outside the open interval (0, {max})")]
    EpsilonOutOfRange { epsilon: f64, max: f64 },

    #[error("block dimensions overflow the horizon budget: {0}")]
    OverflowGuard(String),

    #[error("n = {n} lies within a factor 2 of the block boundary {boundary}")]
    AtDescentPeak { n: u64, boundary: u64 },

    #[error("kernel system is singular: {0}")]
    SingularSystem(String),
}

impl Error {
    /// True for results that are degenerate conditions of a valid problem rather
    /// than malformed input.
    pub fn is_degenerate(&self) -> bool {
        matches!(
            self,
            Error::DegenerateInterpolation { .. }
                | Error::NonConvergence { .. }
                | Error::NegativeDelta { .. }
                | Error::AtDescentPeak { .. }
                | Error::SingularSystem(_)
                | Error::Truncation(_)
        )
    }
}

impl Error {
    /// Stable machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidSpectrum(_) => "invalid_spectrum",
            Error::InvalidTarget(_) => "invalid_target",
            Error::Schema { .. } => "schema",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::Truncation(_) => "truncation",
            Error::DegenerateInterpolation { .. } => "degenerate_interpolation",
            Error::NonConvergence { .. } => "non_convergence",
            Error::NegativeDelta { .. } => "negative_delta",
            Error::TargetBeyondHorizon { .. } => "target_beyond_horizon",
            Error::EpsilonOutOfRange { .. } => "epsilon_out_of_range",
            Error::OverflowGuard(_) => "overflow_guard",
            Error::AtDescentPeak { .. } => "at_descent_peak",
            Error::SingularSystem(_) => "singular_system",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
