use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("degenerate interpolation row {row}")]
    DegenerateInterpolation { row: usize },

    #[error("invalid boundary intervals: {0}")]
    InvalidIntervals(String),

    #[error("invalid conductivity: {0}")]
    InvalidConductivity(String),

    #[error("invalid boundary specification: {0}")]
    InvalidBoundary(String),

    #[error("floating potential: no Dirichlet electrode nodes")]
    FloatingPotential,

    #[error("linear solver failed: {0}")]
    Solver(String),

    #[error("solver residual {residual:.3e} exceeds tolerance {tolerance:.1e}")]
    SolverResidual { residual: f64, tolerance: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("fine grid too coarse for heating width a={a}: need at least {required} nodes per side, have {actual}")]
    Undersampled {
        a: f64,
        required: usize,
        actual: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("line search failed after {backtracks} backtracks at iteration {iteration} (residual {residual:.3e})")]
    LineSearch {
        iteration: usize,
        backtracks: usize,
        residual: f64,
    },

    #[error("unknown phantom `{0}`")]
    UnknownPhantom(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
