use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension {0}: must be at least 1")]
    InvalidDimension(usize),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("weight family has empty support")]
    EmptyWeights,
    #[error("index set is empty")]
    EmptyIndexSet,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("truncation tail {tail:e} exceeds budget {budget:e} at radius {radius}")]
    TruncationTail { radius: u64, tail: f64, budget: f64 },
    #[error("analytic value unavailable: {0}")]
    AnalyticUnavailable(String),
    #[error("moment of order {order} is infinite for this innovation law (tail index {tail_index})")]
    InfiniteMoment { order: f64, tail_index: f64 },
    #[error("non-finite Monte Carlo statistic: {0}")]
    NonFinite(String),
    #[error("missing dependence data: {0}")]
    MissingData(String),
    #[error("threshold condition n0 fails: {0}")]
    ConditionFailed(String),
    #[error("kernel violates its assumptions: {0}")]
    InvalidKernel(String),
    #[error("empty kernel support: bandwidth {bandwidth} too small for grid side {n}")]
    EmptyKernelSupport { n: usize, bandwidth: f64 },
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
