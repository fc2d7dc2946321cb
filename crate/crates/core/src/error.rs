use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix is not trace-free skew-Hermitian (defect {defect:.3e})")]
    NotInAlgebra { defect: f64 },

    #[error("matrix is not trace-free Hermitian (defect {defect:.3e})")]
    NotHermitian { defect: f64 },

    #[error("matrix is not special unitary (unitarity defect {unitarity:.3e}, determinant defect {determinant:.3e})")]
    NotSpecialUnitary { unitarity: f64, determinant: f64 },

    #[error("Cayley chart boundary: V + 1 is singular or outside the chart")]
    CayleyChartBoundary,

    #[error("state vector has zero norm")]
    ZeroState,

    #[error(
        "target at cut locus; squared distance not differentiable here \
         (D = {distance:.12}{}); perturb the target state or its time",
        node.map(|n| format!(", grid node {n}")).unwrap_or_default()
    )]
    CutLocus { distance: f64, node: Option<usize> },

    #[error("operation requires a two-level system, got dimension {dim}")]
    NotTwoLevel { dim: usize },

    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("target time t_{index} = {time} is not on the grid (nearest grid time {nearest}, step {step})")]
    MisalignedTarget {
        index: usize,
        time: f64,
        nearest: f64,
        step: f64,
    },

    #[error("line search stalled at iteration {iteration}: cost {cost:.6e}, gradient norm {grad_norm:.3e}, last trial step {step:.3e}")]
    LineSearchStalled {
        iteration: usize,
        cost: f64,
        grad_norm: f64,
        step: f64,
    },

    #[error("{path}: {message} (line {line}, column {column})")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}
