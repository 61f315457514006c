use thiserror::Error;

pub type Result<T> = std::result::Result<T, SddeError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SddeError {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// A step (or initial step) violates `max h_n < min_k tau_k`.
    #[error("step size {step} must be strictly smaller than the smallest delay {min_delay}")]
    StepTooLarge { step: f64, min_delay: f64 },

    #[error("{numerator} is not an integer multiple of {divisor}")]
    NotDivisible { numerator: f64, divisor: f64 },

    #[error("no mesh point within {tolerance:e} of t = {t}")]
    MeshMiss { t: f64, tolerance: f64 },

    #[error("time {t} lies outside the grid span [{start}, {end}]")]
    OutsideGrid { t: f64, start: f64, end: f64 },

    #[error("augmented mesh would hold at least {size} points, above the cap of {cap}")]
    MeshCapExceeded { size: usize, cap: usize },

    #[error("trajectory diverged at step {step} (t = {t})")]
    Divergence { step: usize, t: f64 },

    #[error("delayed value requested at t = {t}, beyond the simulated frontier {frontier}")]
    BeyondFrontier { t: f64, frontier: f64 },

    #[error("unknown problem `{name}`; registered problems: {known}")]
    UnknownProblem { name: String, known: String },

    #[error("not enough data: {0}")]
    InsufficientData(String),
}
