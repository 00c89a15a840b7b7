use alloc::string::String;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid support rectangle: {0}")]
    InvalidSupport(String),
    #[error("invalid parameters for model {model}: {reason}")]
    InvalidParams { model: String, reason: String },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("log-density of {model} is not finite at a grid node")]
    NonFiniteDensity { model: String },
    #[error("normalizing constant of {model} underflows")]
    ZeroMass { model: String },
    #[error("point ({x1}, {x2}) lies outside the support")]
    OutOfSupport { x1: f64, x2: f64 },
    #[error("rejection sampler for {model} stalled (acceptance rate {rate:e})")]
    RejectionStall { model: String, rate: f64 },
    #[error("empty data set")]
    EmptyData,
    #[error("need at least {needed} observations, got {got}")]
    TooFewObservations { needed: usize, got: usize },
    #[error("maximum likelihood did not converge for {model}")]
    NoConvergence { model: String },
    #[error("Fisher information is singular (eigenvalues {min:e} / {max:e})")]
    SingularInformation { min: f64, max: f64 },
    #[error("models {reference} and {candidate} do not share the same support")]
    SupportMismatch { reference: String, candidate: String },
    #[error("parameter dimensions differ: {reference} has {p_ref}, {candidate} has {p_cand}")]
    DimensionMismatch { reference: String, candidate: String, p_ref: usize, p_cand: usize },
    #[error("operator K is degenerate: 1 - <l, 1>_F = {0:e}")]
    DegenerateK(f64),
    #[error("replicate count {got} below minimum {min}")]
    TooFewReplicates { min: usize, got: usize },
}
