use thiserror::Error;

/// Errors produced by the polygonal toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{what} = {value} lies outside [0, 1]")]
    Domain { what: &'static str, value: f64 },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("weights sum to {sum}, expected 1")]
    NotNormalized { sum: f64 },

    #[error("density integrates to {integral}, expected 1 within 1e-6")]
    DensityNotNormalized { integral: f64 },

    #[error("invalid sample: {0}")]
    InvalidSample(String),

    #[error("observation {index} (x = {x}) has zero mixture density")]
    ZeroDensity { index: usize, x: f64 },

    #[error("weighted sample has no positive weight")]
    EmptyEffectiveSample,

    #[error("component counts differ: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("target is not concave and nonnegative: {0}")]
    NotConcave(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("root bracketing failed: {0}")]
    Bracket(String),

    #[error("no dimension jump detected over the kappa grid; increase gamma or the sample size")]
    NoJump,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for failures of a numerical procedure on otherwise well-formed input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::ZeroDensity { .. }
                | Error::EmptyEffectiveSample
                | Error::NotConcave(_)
                | Error::Bracket(_)
                | Error::NoJump
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
