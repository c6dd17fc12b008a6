//! Tensor-product degree-7 forward-difference spline `A`.
//!
//! `Af(x) = Σ_{i∈{0..4}ᵈ} Π_j J_{i_j}(t_j) f(δ(k(x)+i))` with `k_j(x) = ⌊x_j/δ⌋`
//! and `t_j = x_j/δ − k_j(x)`. The result is `C³`; fourth derivatives exist off
//! the knot set.

use crate::error::{Error, Result};
use crate::lattice::{GridFunction, LatticeSpec, MultiIndex};
use crate::scalar::Scalar;
use crate::weights::{ScalarWeights, WeightTable, MAX_DERIVATIVE, NODES};

/// Offsets within this distance of an integer count as a knot.
pub const KNOT_TOL: f64 = 1e-12;

/// Interpolated view of a grid function.
#[derive(Debug, Clone)]
pub struct Interpolant<T = f64> {
    f: GridFunction<T>,
    weights: ScalarWeights<T>,
    delta: T,
    strides: Vec<usize>,
}

impl<T: Scalar> Interpolant<T> {
    pub fn new(f: GridFunction<T>) -> Self {
        let shape = f.spec().shape();
        let mut strides = vec![1usize; shape.len()];
        for j in (0..shape.len().saturating_sub(1)).rev() {
            strides[j] = strides[j + 1] * shape[j + 1];
        }
        Self {
            delta: T::from_f64(f.spec().delta()),
            weights: WeightTable::get().to_scalar(),
            f,
            strides,
        }
    }

    pub fn grid(&self) -> &GridFunction<T> {
        &self.f
    }

    pub fn spec(&self) -> &LatticeSpec {
        self.f.spec()
    }

    pub fn dim(&self) -> usize {
        self.spec().dim()
    }

    /// Piece anchors `k` whose stencil `k..k+4` lies in the box, per axis.
    pub fn anchor_range(&self) -> (Vec<i64>, Vec<i64>) {
        let s = self.spec();
        (s.lower().to_vec(), s.upper().iter().map(|u| u - 4).collect())
    }

    /// Whether the box is wide enough to hold a single piece on every axis.
    pub fn has_domain(&self) -> bool {
        let (lo, hi) = self.anchor_range();
        lo.iter().zip(&hi).all(|(l, h)| l <= h)
    }

    /// Piece anchor and offset for `x`.
    ///
    /// Floating-point quotients that land within [`KNOT_TOL`] below an
    /// integer are moved to the next piece with a tiny negative offset, so a
    /// knot always evaluates on its own piece.
    pub fn locate(&self, x: &[T]) -> Result<(Vec<i64>, Vec<T>)> {
        let d = self.dim();
        if x.len() != d {
            return Err(Error::InvalidArgument(format!(
                "point has dimension {}, lattice has {d}",
                x.len()
            )));
        }
        let (lo, hi) = self.anchor_range();
        let mut ks = Vec::with_capacity(d);
        let mut ts = Vec::with_capacity(d);
        for j in 0..d {
            if !x[j].is_finite_value() {
                return Err(self.domain_error(x, "non-finite coordinate"));
            }
            let (mut k, mut t) = split_coordinate(&x[j], &self.delta);
            if k == hi[j] + 1 && t.as_f64().abs() <= KNOT_TOL {
                k -= 1;
                t = t + T::one();
            }
            if k < lo[j] || k > hi[j] {
                return Err(self.domain_error(
                    x,
                    &format!(
                        "axis {j} needs stencil {k}..{} inside [{}, {}]",
                        k + 4,
                        lo[j],
                        hi[j] + 4
                    ),
                ));
            }
            ks.push(k);
            ts.push(t);
        }
        Ok((ks, ts))
    }

    /// `Af(x)`.
    pub fn evaluate(&self, x: &[T]) -> Result<T> {
        let (k, t) = self.locate(x)?;
        self.piece_derivative(&k, &t, &MultiIndex::zero(self.dim()))
    }

    /// `∂ᵃAf(x)`; `‖a‖₁ = 4` is refused when any coordinate sits on a knot.
    pub fn derivative(&self, x: &[T], a: &MultiIndex) -> Result<T> {
        self.check_order(a)?;
        let (k, t) = self.locate(x)?;
        if a.order() == MAX_DERIVATIVE {
            if let Some(axis) = t.iter().position(|tj| is_knot(tj)) {
                return Err(Error::UndefinedDerivative { axis });
            }
        }
        self.piece_derivative(&k, &t, a)
    }

    pub fn evaluate_1d(&self, x: T) -> Result<T> {
        self.require_1d()?;
        self.evaluate(&[x])
    }

    pub fn derivative_1d(&self, x: T, a: usize) -> Result<T> {
        self.require_1d()?;
        self.derivative(&[x], &MultiIndex::new(vec![a]))
    }

    pub fn evaluate_nd(&self, x: &[T]) -> Result<T> {
        self.evaluate(x)
    }

    pub fn derivative_nd(&self, x: &[T], a: &MultiIndex) -> Result<T> {
        self.derivative(x, a)
    }

    /// `∂ᵃP_k` at offset `t` (in units of δ) on the piece anchored at `k`.
    ///
    /// `t` is not restricted to `[0, 1)`, so the same call evaluates a piece's
    /// polynomial beyond its own cell (used for one-sided limits at knots and
    /// for shifted evaluation `Af(x + δℓ)` on piece `k + ℓ`).
    pub fn piece_derivative(&self, k: &[i64], t: &[T], a: &MultiIndex) -> Result<T> {
        let d = self.dim();
        if k.len() != d || t.len() != d || a.dim() != d {
            return Err(Error::InvalidArgument(format!(
                "dimension mismatch with lattice dimension {d}"
            )));
        }
        self.check_order(a)?;
        let spec = self.spec();
        let mut base = 0usize;
        for j in 0..d {
            if k[j] < spec.lower()[j] || k[j] + 4 > spec.upper()[j] {
                return Err(Error::Domain {
                    point: t
                        .iter()
                        .zip(k)
                        .map(|(tj, kj)| (T::from_i64(*kj) + tj.clone()).as_f64() * spec.delta())
                        .collect(),
                    reason: format!("piece {k:?} stencil leaves the box on axis {j}"),
                });
            }
            base += (k[j] - spec.lower()[j]) as usize * self.strides[j];
        }
        let w: Vec<[T; NODES]> = (0..d).map(|j| self.weights.eval_all(a.as_slice()[j], &t[j])).collect();
        let values = self.f.values();
        let total = if d == 1 {
            self.tensor_1d(&w[0], base, values)
        } else {
            self.tensor_nd(&w, base, values)
        };
        let mut scale = T::one();
        for _ in 0..a.order() {
            scale = scale * self.delta.clone();
        }
        Ok(total / scale)
    }

    fn tensor_1d(&self, w: &[T; NODES], base: usize, values: &[T]) -> T {
        let s = self.strides[0];
        w.iter().enumerate().fold(T::zero(), |acc, (i, wi)| {
            acc + wi.clone() * values[base + i * s].clone()
        })
    }

    fn tensor_nd(&self, w: &[[T; NODES]], base: usize, values: &[T]) -> T {
        let d = w.len();
        let mut idx = vec![0usize; d];
        let mut total = T::zero();
        loop {
            let mut weight = T::one();
            let mut off = base;
            for j in 0..d {
                weight = weight * w[j][idx[j]].clone();
                off += idx[j] * self.strides[j];
            }
            if !weight.is_zero() {
                total = total + weight * values[off].clone();
            }
            let mut j = d;
            loop {
                if j == 0 {
                    return total;
                }
                j -= 1;
                idx[j] += 1;
                if idx[j] < NODES {
                    break;
                }
                idx[j] = 0;
            }
        }
    }

    fn check_order(&self, a: &MultiIndex) -> Result<()> {
        if a.dim() != self.dim() {
            return Err(Error::InvalidArgument(format!(
                "multi-index has dimension {}, lattice has {}",
                a.dim(),
                self.dim()
            )));
        }
        if a.order() > MAX_DERIVATIVE {
            return Err(Error::InvalidArgument(format!(
                "derivative order {} exceeds 4",
                a.order()
            )));
        }
        Ok(())
    }

    fn require_1d(&self) -> Result<()> {
        if self.dim() != 1 {
            return Err(Error::InvalidArgument(format!(
                "one-dimensional call on a {}-dimensional lattice",
                self.dim()
            )));
        }
        Ok(())
    }

    fn domain_error(&self, x: &[T], reason: &str) -> Error {
        Error::Domain {
            point: x.iter().map(|v| v.as_f64()).collect(),
            reason: reason.to_string(),
        }
    }
}

/// `(k, t)` with `x = δ(k + t)`, `k = ⌊x/δ⌋`, except that quotients within
/// [`KNOT_TOL`] below an integer go to the next piece with `t` slightly negative.
pub fn split_coordinate<T: Scalar>(x: &T, delta: &T) -> (i64, T) {
    let s = x.clone() / delta.clone();
    let k = s.floor_i64();
    let t = s - T::from_i64(k);
    if t.as_f64() > 1.0 - KNOT_TOL {
        (k + 1, t - T::one())
    } else {
        (k, t)
    }
}

/// `∂ᵃ` of the spline through arbitrary node values, on the piece anchored at
/// `k` with offsets `t`; `node` supplies the value at each lattice index.
///
/// Used for functions that are cheap to evaluate pointwise but awkward to
/// tabulate on a box (rates, generator values).
pub fn interpolate_nodes(
    delta: f64,
    k: &[i64],
    t: &[f64],
    a: &MultiIndex,
    mut node: impl FnMut(&[i64]) -> Result<f64>,
) -> Result<f64> {
    let d = k.len();
    let w: Vec<[f64; NODES]> = (0..d)
        .map(|j| {
            std::array::from_fn(|i| crate::weights::weight_derivative(i, a.as_slice()[j], t[j]).expect("valid order"))
        })
        .collect();
    let mut idx = vec![0usize; d];
    let mut p = vec![0i64; d];
    let mut total = 0.0;
    loop {
        let mut weight = 1.0;
        for j in 0..d {
            weight *= w[j][idx[j]];
            p[j] = k[j] + idx[j] as i64;
        }
        if weight != 0.0 {
            total += weight * node(&p)?;
        }
        let mut j = d;
        loop {
            if j == 0 {
                return Ok(total / delta.powi(a.order() as i32));
            }
            j -= 1;
            idx[j] += 1;
            if idx[j] < NODES {
                break;
            }
            idx[j] = 0;
        }
    }
}

fn is_knot<T: Scalar>(t: &T) -> bool {
    let v = t.as_f64();
    v.abs() <= KNOT_TOL || (1.0 - v).abs() <= KNOT_TOL
}
