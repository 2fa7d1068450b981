use thiserror::Error;

/// Errors raised by the formation-tracking solver and its building blocks.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum OiftError {
    #[error("invalid system: {0}")]
    InvalidSystem(String),

    #[error("dimension mismatch: expected {expected}, got {got} ({what})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("agent index {index} out of range 1..={count}")]
    AgentIndex { index: usize, count: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid formation: {0}")]
    InvalidFormation(String),

    #[error("negative squared distance {0}")]
    NegativeSquaredDistance(f64),

    #[error("time {t} outside horizon [0, {horizon}]")]
    TimeOutOfRange { t: f64, horizon: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("non-finite value during {stage} at node {node} (t = {t})")]
    NonFinite {
        stage: &'static str,
        node: usize,
        t: f64,
    },

    #[error("Riccati solution lost symmetry at t = {t} (relative asymmetry {asymmetry:e})")]
    RiccatiAsymmetry { t: f64, asymmetry: f64 },

    #[error("Q_o is not positive semidefinite at node {node} (min eigenvalue {min_eigenvalue:e}); enable the safe Hessian")]
    IndefiniteWeight { node: usize, min_eigenvalue: f64 },

    #[error("line search precondition violated: directional derivative {0} is not negative")]
    NotDescent(f64),

    #[error("degenerate subspace basis")]
    DegenerateBasis,

    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),
}

pub type Result<T> = std::result::Result<T, OiftError>;
