//! Continuous-time Markov chains on truncated lattice boxes.

pub mod integral;
pub mod kernel;
pub mod poisson;
pub mod stationary;

pub use integral::poisson_via_integral;
pub use kernel::{DroppedJump, Jump, KernelConfig, RateExpr, RateKernel, SparseGenerator};
pub use poisson::{
    birth_death_poisson, solve_poisson, truncation_level, PoissonSolution, PoissonSolver, TRUNCATION_TOL,
};
pub use stationary::{stationary, StationaryDistribution};
