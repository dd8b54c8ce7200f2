use thiserror::Error;

/// Everything that can go wrong while evaluating a bound or running a simulation.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("integrand is not finite at {at}")]
    NonFiniteIntegrand { at: f64 },

    #[error("integral diverges at the {side} end of [{lo}, {hi}] (power-law exponent {alpha:.3})")]
    DivergentIntegral {
        lo: f64,
        hi: f64,
        side: &'static str,
        alpha: f64,
    },

    #[error("tensor quadrature supports at most 3 dimensions, got {0}")]
    DimensionTooLarge(usize),

    #[error("matrix is not positive definite (smallest eigenvalue {min_eig:.6e})")]
    NotPositiveDefinite { min_eig: f64 },

    #[error("matrix is not symmetric (max asymmetry {asymmetry:.3e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("linear system is singular")]
    SingularSystem,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("parameter {theta} lies outside the support ({lo}, {hi})")]
    OutOfSupport { theta: f64, lo: f64, hi: f64 },

    #[error("information is not positive at {theta} (value {value:.6e})")]
    NonPositiveInformation { theta: f64, value: f64 },

    #[error("bound denominator is not positive ({0:.6e}); regularity is violated or the weight is too aggressive")]
    NonPositiveDenominator(f64),

    #[error("weight derivative callback disagrees with finite differences at {theta} ({which})")]
    DerivativeMismatch { theta: f64, which: &'static str },

    #[error(
        "1 + rho = {0:.6e} is not positive; the tight bound does not exist at this configuration"
    )]
    RhoDegenerate(f64),

    #[error("panel doubling moved the result by {rel_change:.3e} (limit {limit:.1e})")]
    NonConverged { rel_change: f64, limit: f64 },

    #[error("grid spacing {delta} is too coarse for a support of width {width}")]
    SpacingTooCoarse { delta: f64, width: f64 },

    #[error("estimator objective is not finite anywhere on the search grid")]
    DegenerateObjective,

    #[error("invalid parameters: {0}")]
    BadParams(String),

    #[error("trial {index}: {source}")]
    Trial {
        index: u64,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Short stable name of the variant, used in CLI diagnostics.
    pub fn name(&self) -> &'static str {
        match self {
            Error::NonFiniteIntegrand { .. } => "NonFiniteIntegrand",
            Error::DivergentIntegral { .. } => "DivergentIntegral",
            Error::DimensionTooLarge(_) => "DimensionTooLarge",
            Error::NotPositiveDefinite { .. } => "NotPositiveDefinite",
            Error::NotSymmetric { .. } => "NotSymmetric",
            Error::SingularSystem => "SingularSystem",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::OutOfSupport { .. } => "OutOfSupport",
            Error::NonPositiveInformation { .. } => "NonPositiveInformation",
            Error::NonPositiveDenominator(_) => "NonPositiveDenominator",
            Error::DerivativeMismatch { .. } => "DerivativeMismatch",
            Error::RhoDegenerate(_) => "RhoDegenerate",
            Error::NonConverged { .. } => "NonConverged",
            Error::SpacingTooCoarse { .. } => "SpacingTooCoarse",
            Error::DegenerateObjective => "DegenerateObjective",
            Error::BadParams(_) => "BadParams",
            Error::Trial { source, .. } => source.name(),
        }
    }
}
