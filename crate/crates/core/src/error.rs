use thiserror::Error;

/// Errors raised by the lattice, interpolation, solver and simulation layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid lattice spec: {0}")]
    InvalidSpec(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("index out of range on axis {axis}: coordinate {coord} not in [{lower}, {upper}]")]
    IndexOutOfRange {
        axis: usize,
        coord: i64,
        lower: i64,
        upper: i64,
    },

    #[error("point {point:?} is outside the interpolation domain: {reason}")]
    Domain { point: Vec<f64>, reason: String },

    #[error("fourth-order derivative requested at a knot (axis {axis})")]
    UndefinedDerivative { axis: usize },

    #[error("sampler failed to produce an in-class function after {attempts} attempts (seed {seed})")]
    Sampling { seed: u64, attempts: usize },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("solver error: {0}")]
    Solver(String),

    #[error("unstable queue: utilization rho = {rho} must be < 1")]
    Stability { rho: f64 },

    #[error("tolerance not reached: {0}")]
    Tolerance(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
