//! Truncated boxes of the lattice `δℤᵈ` and real-valued functions on them.
//!
//! Values are stored row-major with the last axis varying fastest. Every
//! access outside the box is an [`Error::IndexOutOfRange`]; nothing is
//! extrapolated.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Box `[lower, upper]` (inclusive, componentwise) of `δℤᵈ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeSpec {
    dim: usize,
    delta: f64,
    lower: Vec<i64>,
    upper: Vec<i64>,
}

impl LatticeSpec {
    pub fn new(delta: f64, lower: Vec<i64>, upper: Vec<i64>) -> Result<Self> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::InvalidSpec(format!("delta must be positive, got {delta}")));
        }
        if lower.is_empty() {
            return Err(Error::InvalidSpec("dimension must be positive".into()));
        }
        if lower.len() != upper.len() {
            return Err(Error::InvalidSpec(format!(
                "lower has length {} but upper has length {}",
                lower.len(),
                upper.len()
            )));
        }
        if let Some(axis) = (0..lower.len()).find(|&j| lower[j] > upper[j]) {
            return Err(Error::InvalidSpec(format!(
                "lower[{axis}] = {} exceeds upper[{axis}] = {}",
                lower[axis], upper[axis]
            )));
        }
        Ok(Self {
            dim: lower.len(),
            delta,
            lower,
            upper,
        })
    }

    /// One-dimensional box `{lo, ..., hi}`.
    pub fn line(delta: f64, lo: i64, hi: i64) -> Result<Self> {
        Self::new(delta, vec![lo], vec![hi])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn lower(&self) -> &[i64] {
        &self.lower
    }

    pub fn upper(&self) -> &[i64] {
        &self.upper
    }

    /// Number of lattice points along each axis.
    pub fn shape(&self) -> Vec<usize> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(lo, hi)| (hi - lo + 1) as usize)
            .collect()
    }

    pub fn len(&self) -> usize {
        self.shape().iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, k: &[i64]) -> bool {
        k.len() == self.dim
            && k.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(c, (lo, hi))| lo <= c && c <= hi)
    }

    /// Checks membership and reports the first offending coordinate.
    pub fn check(&self, k: &[i64]) -> Result<()> {
        if k.len() != self.dim {
            return Err(Error::InvalidArgument(format!(
                "index has dimension {} but lattice has dimension {}",
                k.len(),
                self.dim
            )));
        }
        for (axis, &c) in k.iter().enumerate() {
            if c < self.lower[axis] || c > self.upper[axis] {
                return Err(Error::IndexOutOfRange {
                    axis,
                    coord: c,
                    lower: self.lower[axis],
                    upper: self.upper[axis],
                });
            }
        }
        Ok(())
    }

    /// Row-major position of `k` in the value array.
    pub fn linear_index(&self, k: &[i64]) -> Result<usize> {
        self.check(k)?;
        let shape = self.shape();
        let mut idx = 0usize;
        for j in 0..self.dim {
            idx = idx * shape[j] + (k[j] - self.lower[j]) as usize;
        }
        Ok(idx)
    }

    /// Inverse of [`linear_index`](Self::linear_index).
    pub fn multi_index(&self, mut idx: usize) -> Vec<i64> {
        let shape = self.shape();
        let mut k = vec![0i64; self.dim];
        for j in (0..self.dim).rev() {
            k[j] = self.lower[j] + (idx % shape[j]) as i64;
            idx /= shape[j];
        }
        k
    }

    /// All lattice points of the box in storage order.
    pub fn points(&self) -> impl Iterator<Item = Vec<i64>> + '_ {
        (0..self.len()).map(move |i| self.multi_index(i))
    }

    /// Physical coordinates `δk`.
    pub fn position(&self, k: &[i64]) -> Vec<f64> {
        k.iter().map(|&c| self.delta * c as f64).collect()
    }

    /// The same box with each axis widened by the given amounts.
    pub fn widened(&self, below: &[i64], above: &[i64]) -> Result<Self> {
        let lower = self.lower.iter().zip(below).map(|(l, b)| l - b).collect();
        let upper = self.upper.iter().zip(above).map(|(u, a)| u + a).collect();
        Self::new(self.delta, lower, upper)
    }
}

/// Non-negative multi-index `a` for `Δᵃ` and `∂ᵃ`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MultiIndex(Vec<usize>);

impl MultiIndex {
    pub fn new(a: Vec<usize>) -> Self {
        Self(a)
    }

    pub fn zero(dim: usize) -> Self {
        Self(vec![0; dim])
    }

    /// `order · e_axis`.
    pub fn axis(dim: usize, axis: usize, order: usize) -> Self {
        let mut a = vec![0; dim];
        a[axis] = order;
        Self(a)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// `‖a‖₁`.
    pub fn order(&self) -> usize {
        self.0.iter().sum()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }
}

impl From<Vec<usize>> for MultiIndex {
    fn from(a: Vec<usize>) -> Self {
        Self(a)
    }
}

/// Real-valued function on every point of a [`LatticeSpec`] box.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction<T = f64> {
    spec: LatticeSpec,
    values: Vec<T>,
}

impl<T: Scalar> GridFunction<T> {
    pub fn from_values(spec: LatticeSpec, values: Vec<T>) -> Result<Self> {
        if values.len() != spec.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} values for the box, got {}",
                spec.len(),
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite_value()) {
            return Err(Error::InvalidArgument(format!(
                "value at {:?} is not finite",
                spec.multi_index(i)
            )));
        }
        Ok(Self { spec, values })
    }

    /// Tabulates `f(k)` over the box (the closure receives the lattice index).
    pub fn from_fn(spec: LatticeSpec, mut f: impl FnMut(&[i64]) -> T) -> Result<Self> {
        let values = (0..spec.len()).map(|i| f(&spec.multi_index(i))).collect();
        Self::from_values(spec, values)
    }

    pub fn constant(spec: LatticeSpec, c: T) -> Self {
        let n = spec.len();
        Self {
            spec,
            values: vec![c; n],
        }
    }

    pub fn spec(&self) -> &LatticeSpec {
        &self.spec
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn get(&self, k: &[i64]) -> Result<&T> {
        Ok(&self.values[self.spec.linear_index(k)?])
    }

    /// Pointwise map, keeping the box.
    pub fn map<U: Scalar>(&self, f: impl Fn(&T) -> U) -> Result<GridFunction<U>> {
        GridFunction::from_values(self.spec.clone(), self.values.iter().map(f).collect())
    }

    /// `αf + βg` on a common box.
    pub fn linear_combination(&self, alpha: &T, other: &Self, beta: &T) -> Result<Self> {
        if self.spec != other.spec {
            return Err(Error::InvalidArgument("grid functions live on different boxes".into()));
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| alpha.clone() * a.clone() + beta.clone() * b.clone())
            .collect();
        Self::from_values(self.spec.clone(), values)
    }

    /// `Δ₁^{a₁} ⋯ Δ_d^{a_d} f(δk)`, differencing axis 0 first.
    pub fn forward_difference(&self, a: &MultiIndex, k: &[i64]) -> Result<T> {
        let order: Vec<usize> = (0..self.spec.dim()).collect();
        self.forward_difference_in_order(a, k, &order)
    }

    /// Like [`forward_difference`](Self::forward_difference) with an explicit
    /// axis order for the iterated first differences.
    pub fn forward_difference_in_order(&self, a: &MultiIndex, k: &[i64], axis_order: &[usize]) -> Result<T> {
        let d = self.spec.dim();
        if a.dim() != d || k.len() != d {
            return Err(Error::InvalidArgument(format!(
                "multi-index/point dimension mismatch with lattice dimension {d}"
            )));
        }
        let mut sorted = axis_order.to_vec();
        sorted.sort_unstable();
        if sorted != (0..d).collect::<Vec<_>>() {
            return Err(Error::InvalidArgument("axis order must be a permutation".into()));
        }
        self.spec.check(k)?;
        let far: Vec<i64> = k.iter().zip(a.as_slice()).map(|(c, &o)| c + o as i64).collect();
        self.spec.check(&far)?;

        // Gather the (a+1)-block, then difference it down to a single value.
        let mut shape: Vec<usize> = a.as_slice().iter().map(|o| o + 1).collect();
        let block_len: usize = shape.iter().product();
        let mut block = Vec::with_capacity(block_len);
        let mut offset = vec![0i64; d];
        for i in 0..block_len {
            let mut rem = i;
            for j in (0..d).rev() {
                offset[j] = (rem % shape[j]) as i64;
                rem /= shape[j];
            }
            let p: Vec<i64> = k.iter().zip(&offset).map(|(c, o)| c + o).collect();
            block.push(self.get(&p)?.clone());
        }
        for &axis in axis_order {
            for _ in 0..a.as_slice()[axis] {
                block = difference_along(&block, &mut shape, axis);
            }
        }
        Ok(block.into_iter().next().expect("fully reduced block has one entry"))
    }

    /// Largest `|Δᵃf(δk)|` over every `k` whose stencil fits in the box.
    pub fn max_abs_difference(&self, a: &MultiIndex) -> Result<f64> {
        let mut best = 0.0f64;
        for k in self.spec.points() {
            let fits = k
                .iter()
                .zip(a.as_slice())
                .zip(self.spec.upper())
                .all(|((c, &o), hi)| c + o as i64 <= *hi);
            if fits {
                best = best.max(self.forward_difference(a, &k)?.abs().as_f64());
            }
        }
        Ok(best)
    }
}

/// One first-difference pass along `axis` of a row-major block.
fn difference_along<T: Scalar>(block: &[T], shape: &mut [usize], axis: usize) -> Vec<T> {
    let stride: usize = shape[axis + 1..].iter().product();
    let n_axis = shape[axis];
    let outer: usize = shape[..axis].iter().product();
    let mut out = Vec::with_capacity(block.len() / n_axis * (n_axis - 1));
    for o in 0..outer {
        for i in 0..n_axis - 1 {
            for s in 0..stride {
                let lo = (o * n_axis + i) * stride + s;
                let hi = lo + stride;
                out.push(block[hi].clone() - block[lo].clone());
            }
        }
    }
    shape[axis] -= 1;
    out
}

#[derive(Serialize, Deserialize)]
struct GridFunctionJson {
    dim: usize,
    delta: f64,
    lower: Vec<i64>,
    upper: Vec<i64>,
    values: Vec<f64>,
}

impl Serialize for GridFunction<f64> {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        GridFunctionJson {
            dim: self.spec.dim,
            delta: self.spec.delta,
            lower: self.spec.lower.clone(),
            upper: self.spec.upper.clone(),
            values: self.values.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for GridFunction<f64> {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = GridFunctionJson::deserialize(d)?;
        let spec = LatticeSpec::new(raw.delta, raw.lower, raw.upper).map_err(serde::de::Error::custom)?;
        if spec.dim() != raw.dim {
            return Err(serde::de::Error::custom(format!(
                "dim = {} disagrees with corner length {}",
                raw.dim,
                spec.dim()
            )));
        }
        GridFunction::from_values(spec, raw.values).map_err(serde::de::Error::custom)
    }
}
