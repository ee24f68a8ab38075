use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid variable spec `{name}`: {reason}")]
    InvalidSpec { name: String, reason: String },

    #[error("invalid design space: {0}")]
    InvalidSpace(String),

    #[error("unknown variable `{0}`")]
    UnknownVariable(String),

    #[error("value for `{name}` out of range: {detail}")]
    OutOfRange { name: String, detail: String },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("sobol dimension {0} exceeds the direction-number table (max 64)")]
    SobolDimension(usize),

    #[error("sobol sequence exhausted (index 2^32 reached)")]
    SobolExhausted,

    #[error("invalid sample plan: {0}")]
    InvalidPlan(String),

    #[error("degenerate binning for `{variable}`: {distinct} distinct values, {requested} bins requested")]
    DegenerateBinning {
        variable: String,
        distinct: usize,
        requested: usize,
    },

    #[error("bin index {index} out of range for `{variable}` ({bins} bins)")]
    BinIndex {
        variable: String,
        index: usize,
        bins: usize,
    },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("arity mismatch: {0}")]
    ArityMismatch(String),

    #[error("invalid evidence: {0}")]
    InvalidEvidence(String),

    #[error("evidence has zero probability")]
    InconsistentEvidence,

    #[error("incomplete assignment: missing `{0}`")]
    IncompleteAssignment(String),

    #[error("state space too large: {count} joint states (limit {limit})")]
    StateSpaceTooLarge { count: u128, limit: u128 },

    #[error("base point too close to the boundary for step {step}: coordinate {index} = {value}")]
    BoundaryPoint { index: usize, value: f64, step: f64 },

    #[error("svd did not converge after {0} sweeps")]
    NonConvergence(usize),

    #[error("rank {rank} out of range 1..={max}")]
    RankOutOfRange { rank: usize, max: usize },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("invalid fold plan: {0}")]
    InvalidFolds(String),

    #[error("model validation failed: {0}")]
    ModelValidation(String),

    #[error("unsupported schema version {found} (expected {expected})")]
    SchemaVersion { found: u32, expected: u32 },

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("pipeline step `{step}` failed: {source}")]
    Step {
        step: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("sample {index}: {source}")]
    Batch {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("config parse error: {0}")]
    Toml(String),
}
