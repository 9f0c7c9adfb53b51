use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Every failure mode of the toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("non-finite model output: {0}")]
    Evaluation(String),
    #[error("invalid model: {0}")]
    Model(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("step size underflow at t = {t}")]
    Stiffness { t: f64 },
    #[error("integration diverged at t = {t}")]
    Divergence { t: f64 },

    #[error("no convergence after {iterations} iterations: {reason}")]
    NoConvergence { iterations: usize, reason: String },
    #[error("singular Jacobian: {0}")]
    SingularJacobian(String),
    #[error("no zero-energy orbit near the guess (energy residual {residual:e})")]
    EnergyMismatch { residual: f64 },
    #[error("insufficient accuracy: {0}")]
    Accuracy(String),
    #[error(
        "continuation broke down: {failed} node(s) unsolved, {solved} solved; first failure at node {first_failure:?}"
    )]
    ContinuationBreakdown {
        solved: usize,
        failed: usize,
        first_failure: Vec<usize>,
        /// Flat indices of the nodes that were solved before the breakdown.
        frontier: Vec<usize>,
    },

    #[error("point outside the domain: {0}")]
    Domain(String),
    #[error("trajectory left the domain at tau = {tau_exit}")]
    DomainExit { tau_exit: f64 },
    #[error("segment {segment} reaches the boundary before its breakpoint")]
    SegmentExit { segment: usize },
    #[error("breakpoints must be strictly increasing and start at 0")]
    NonIncreasingBreakpoints,
    #[error("value out of range: {0}")]
    OutOfRange(String),
    #[error("target is not accessible: {0}")]
    NotAccessible(String),

    #[error("slow map is not invertible for eps = {eps} (sampled contraction {rate})")]
    SlowMapNotInvertible { eps: f64, rate: f64 },
    #[error("index {index} outside the surface window [{lo}, {hi}]")]
    SurfaceWindowExceeded { index: i64, lo: i64, hi: i64 },
    #[error("codes disagree inside the compared block at index {index}")]
    BlockMismatch { index: i64 },
    #[error("segment {segment} gets no symbols (eps too large)")]
    EmptyBlock { segment: usize },

    #[error("i/o: {0}")]
    Io(String),
    #[error("parse: {0}")]
    Parse(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
