//! Scalar abstraction for the lattice and interpolation layers.
//!
//! Grid functions, finite differences and the spline are pure field arithmetic,
//! so they run over `f32`, `f64` and exact [`BigRational`]. The stochastic and
//! quadrature layers need transcendental functions and stay on `f64`.

use std::fmt::Debug;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{FromPrimitive, Num, Signed, ToPrimitive};

/// Field element usable as grid values and evaluation coordinates.
pub trait Scalar: Num + Signed + Clone + PartialOrd + Debug + Send + Sync + 'static {
    /// Converts an exact rational. Lossy for floating-point types.
    fn from_rational(r: &BigRational) -> Self;
    /// Converts an `f64`. Exact for rational types.
    fn from_f64(x: f64) -> Self;
    fn from_i64(n: i64) -> Self;
    fn as_f64(&self) -> f64;
    /// Largest integer not greater than `self`.
    fn floor_i64(&self) -> i64;
    fn is_finite_value(&self) -> bool;
}

impl Scalar for f64 {
    fn from_rational(r: &BigRational) -> Self {
        ToPrimitive::to_f64(r).unwrap_or(f64::NAN)
    }
    fn from_f64(x: f64) -> Self {
        x
    }
    fn from_i64(n: i64) -> Self {
        n as f64
    }
    fn as_f64(&self) -> f64 {
        *self
    }
    fn floor_i64(&self) -> i64 {
        self.floor() as i64
    }
    fn is_finite_value(&self) -> bool {
        self.is_finite()
    }
}

impl Scalar for f32 {
    fn from_rational(r: &BigRational) -> Self {
        ToPrimitive::to_f64(r).unwrap_or(f64::NAN) as f32
    }
    fn from_f64(x: f64) -> Self {
        x as f32
    }
    fn from_i64(n: i64) -> Self {
        n as f32
    }
    fn as_f64(&self) -> f64 {
        *self as f64
    }
    fn floor_i64(&self) -> i64 {
        self.floor() as i64
    }
    fn is_finite_value(&self) -> bool {
        self.is_finite()
    }
}

impl Scalar for BigRational {
    fn from_rational(r: &BigRational) -> Self {
        r.clone()
    }
    fn from_f64(x: f64) -> Self {
        <BigRational as FromPrimitive>::from_f64(x).expect("finite f64 converts to a rational")
    }
    fn from_i64(n: i64) -> Self {
        BigRational::from_integer(BigInt::from(n))
    }
    fn as_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
    fn floor_i64(&self) -> i64 {
        self.floor().to_integer().to_i64().expect("floor fits in i64")
    }
    fn is_finite_value(&self) -> bool {
        true
    }
}

/// Shorthand for an exact rational from a numerator/denominator pair.
pub fn ratio(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}
