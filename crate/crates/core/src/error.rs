use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("wave speed must be positive, found min c = {min}")]
    NonPositiveSpeed { min: f64 },
    #[error("need at least 3 nodes per axis, got {got}")]
    ResolutionTooCoarse { got: usize },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid influence spec: {0}")]
    InvalidSpec(String),
    #[error("time step {dt} exceeds stability bound {bound}")]
    CflViolation { dt: f64, bound: f64 },
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("source does not match the response basis: {0}")]
    BasisMismatch(String),
    #[error("requested time {requested} exceeds available horizon {horizon}")]
    HorizonExceeded { requested: f64, horizon: f64 },
    #[error("Gram matrix is not positive semidefinite (curvature {value:e})")]
    GramNotPsd { value: f64 },
    #[error("iterative solve did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("search budget of {budget} candidate tests exhausted")]
    SearchBudgetExceeded { budget: usize },
    #[error("unknown representation id {0}")]
    UnknownId(usize),
    #[error("k^2 = {k2} lies within {guard} of threshold {threshold}")]
    ThresholdProximity { k2: f64, threshold: f64, guard: f64 },
    #[error("matching coefficients drift by {drift:e} when the matching radius is doubled")]
    NonConvergedMatching { drift: f64 },
    #[error("k^2 is (numerically) an interior eigenvalue; condition estimate {condition:e}")]
    InteriorEigenvalue { condition: f64 },
    #[error("degenerate matching: {0}")]
    DegenerateMatching(String),
    #[error("exponential scale {scale} exceeds cap {cap}")]
    OverflowGuard { scale: f64, cap: f64 },
    #[error("ODE integration failed: {0}")]
    OdeFailure(String),
    #[error("invalid config: {0}")]
    ConfigInvalid(String),
    #[error("upstream artifact missing: {0}")]
    UpstreamArtifactMissing(String),
    #[error("hash mismatch: expected {expected}, found {found}")]
    HashMismatch { expected: String, found: String },
    #[error("corrupt file: {0}")]
    CorruptFile(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::ConfigInvalid(_)
            | Error::InvalidGrid(_)
            | Error::InvalidSpec(_)
            | Error::NonPositiveSpeed { .. }
            | Error::ResolutionTooCoarse { .. }
            | Error::CflViolation { .. }
            | Error::UpstreamArtifactMissing(_) => 2,
            Error::Io(_) | Error::Csv(_) | Error::CorruptFile(_) | Error::HashMismatch { .. } => 4,
            _ => 3,
        }
    }
}
