//! Prelimit generator comparison for Stein's method on lattice Markov chains.
//!
//! The crate covers the full pipeline for comparing a continuous-time Markov
//! chain on `δℤᵈ` with its diffusion limit:
//!
//! * [`lattice`], [`sampling`]: grid functions, finite differences and
//!   samplers for the discrete test-function classes.
//! * [`weights`], [`interpolator`]: the degree-7 forward-difference spline `A`.
//! * [`ctmc`]: rate kernels, stationary laws and Poisson-equation solvers.
//! * [`interchange`]: `A G_X f` against the interchanged generator and its
//!   exact error term.
//! * [`mm1`]: the M/M/1 example end to end.
//! * [`coupling`]: synchronous couplings and Monte-Carlo Stein factors.
//! * [`metrics`]: one-dimensional Wasserstein distances.
//!
//! Lattice, difference and interpolation code is generic over [`Scalar`]
//! (`f32`, `f64`, exact [`BigRational`]); the aliases below fix the common
//! choices.

// `!(x > 0.0)` style guards deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod coupling;
pub mod ctmc;
pub mod error;
pub mod interchange;
pub mod interpolator;
pub mod lattice;
pub mod metrics;
pub mod mm1;
pub mod quadrature;
pub mod sampling;
pub mod scalar;
pub mod weights;

pub use error::{Error, Result};
pub use interpolator::Interpolant;
pub use lattice::{GridFunction, LatticeSpec, MultiIndex};
pub use num_rational::BigRational;
pub use scalar::Scalar;
pub use weights::WeightTable;

/// Double-precision grid function.
pub type Grid = GridFunction<f64>;
/// Exact rational grid function.
pub type ExactGrid = GridFunction<BigRational>;
/// Double-precision interpolant.
pub type Interp = Interpolant<f64>;
/// Exact rational interpolant.
pub type ExactInterp = Interpolant<BigRational>;

/// Library version embedded in CLI output.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
