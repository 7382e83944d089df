use thiserror::Error;

/// Errors produced by the anchor library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("zero-norm vector in {matrix} row {row}")]
    ZeroNormVector { matrix: &'static str, row: usize },

    #[error("malformed embedding set: {0}")]
    InvalidEmbeddingSet(String),

    #[error("threshold {0} is outside [0, 1]")]
    ThresholdOutOfRange(f64),

    #[error("{what} index {index} out of range (len {len})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        len: usize,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension {0} is odd; rotary embedding needs an even dimension")]
    OddDimension(usize),

    #[error("text {n} best matches image {best}, not image {m}")]
    NotBestMatch { n: usize, m: usize, best: usize },

    #[error("similarity {score} is below threshold {threshold}")]
    BelowThreshold { score: f64, threshold: f64 },

    #[error("labels contain no true correspondences")]
    NoTruePairs,

    #[error("non-finite value during integration at tau={0}")]
    IntegrationFailure(f64),

    #[error("joint distribution is not normalized (total {0})")]
    NotNormalized(f64),

    #[error("no anchors selected at threshold {0}")]
    NoAnchorsSelected(f64),

    #[error("embedding set carries no cluster labels")]
    MissingClusterLabels,

    #[error("timer resolution too coarse: median {median_ns} ns < 100 x {granularity_ns} ns")]
    TimerResolutionTooCoarse {
        median_ns: u128,
        granularity_ns: u128,
    },

    #[error("degenerate log-log fit: {0}")]
    DegenerateFit(String),

    #[error("unknown failure scenario `{0}`")]
    UnknownScenario(String),

    #[error("malformed sequence document: {0}")]
    MalformedSequence(String),
}

pub type Result<T> = std::result::Result<T, Error>;
