use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("edge ({i}, {j}): A A^T is singular or ill-conditioned (condition number {cond:.3e})")]
    RankDeficient { i: usize, j: usize, cond: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("iteration did not converge after {iterations} iterations (residual {residual:.3e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("affine slice is empty (best residual {residual:.3e})")]
    EmptySlice { residual: f64 },

    #[error("linear system is singular")]
    SingularSystem,

    #[error("non-finite iterate at iteration {iteration} (agent {agent})")]
    NonFiniteIterate { iteration: usize, agent: usize },

    #[error("problem is infeasible (set distance {residual:.3e})")]
    Infeasible { residual: f64 },

    #[error("demand cannot be met by node {node} constraints (residual {residual:.3e})")]
    InfeasibleDemand { node: usize, residual: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("MPC step {step}: {source}")]
    MpcStep { step: usize, source: Box<Error> },
}
