use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),

    #[error("system is not Hurwitz (max real eigenvalue part {max_real:.3e})")]
    NotHurwitz { max_real: f64 },

    #[error("Riccati equation has no stabilizing solution: {0}")]
    NoStabilizingSolution(String),

    #[error("invalid cone [{a}, {b}]: need a < 0 < b < inf")]
    InvalidCone { a: f64, b: f64 },

    #[error("system has nonzero feedthrough; conic analysis requires D = 0")]
    Feedthrough,

    #[error("plant assumption violated: {0}")]
    PlantAssumption(String),

    #[error("controller is not inside the requested cone (residual {residual:.3e})")]
    NotInCone { residual: f64 },

    #[error("initial point is infeasible: {0}")]
    InfeasibleInit(String),

    #[error("ill-conditioned matrix (condition estimate {cond:.3e}): {what}")]
    IllConditioned { what: &'static str, cond: f64 },

    #[error("semidefinite solver failed: {0}")]
    Solver(String),

    #[error("invalid option: {0}")]
    InvalidOption(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

pub type Result<T> = std::result::Result<T, Error>;
