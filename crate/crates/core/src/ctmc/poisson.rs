use nalgebra::{DMatrix, DVector, Dyn, LU};
use serde::Serialize;

use crate::ctmc::kernel::RateKernel;
use crate::ctmc::stationary::{stationary, StationaryDistribution};
use crate::error::{Error, Result};
use crate::lattice::{GridFunction, LatticeSpec, MultiIndex};

/// Default bound on the stationary mass beyond a truncated box.
pub const TRUNCATION_TOL: f64 = 1e-14;

/// Smallest `N` with `ρ^{N+1} < tol`.
pub fn truncation_level(rho: f64, tol: f64) -> Result<i64> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::Stability { rho });
    }
    let mut n = (tol.ln() / rho.ln()).floor().max(0.0) as i64;
    while n > 0 && rho.powi(n as i32) < tol {
        n -= 1;
    }
    while rho.powi((n + 1) as i32) >= tol {
        n += 1;
    }
    Ok(n)
}

/// Solution `f_h` of `G_X f = E h(X) − h`, anchored at zero at one point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PoissonSolution {
    spec: LatticeSpec,
    values: Vec<f64>,
    mean: f64,
    anchor: Vec<i64>,
    warning: Option<String>,
}

impl PoissonSolution {
    pub fn spec(&self) -> &LatticeSpec {
        &self.spec
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `E h(X)` under the truncated stationary law.
    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Point where the solution is pinned to 0 (the origin when it is in the box).
    pub fn anchor(&self) -> &[i64] {
        &self.anchor
    }

    /// Set when a numerical shortcut (such as a finite time horizon) may have
    /// left error above tolerance.
    pub fn warning(&self) -> Option<&str> {
        self.warning.as_deref()
    }

    pub fn grid(&self) -> GridFunction {
        GridFunction::from_values(self.spec.clone(), self.values.clone()).expect("finite solution values")
    }

    pub fn get(&self, k: &[i64]) -> Result<f64> {
        Ok(self.values[self.spec.linear_index(k)?])
    }

    /// One-dimensional `Δ^order f(δk)`.
    pub fn difference(&self, order: usize, k: i64) -> Result<f64> {
        self.grid().forward_difference(&MultiIndex::new(vec![order]), &[k])
    }

    /// `max_k |G_X f(δk) + h(δk) − E h(X)|` over the box.
    pub fn residual(&self, kernel: &RateKernel, h: &GridFunction) -> Result<f64> {
        let f = self.grid();
        let mut worst = 0.0f64;
        for k in self.spec.points() {
            let r = kernel.generator_apply(&f, &k)? + h.get(&k)? - self.mean;
            worst = worst.max(r.abs());
        }
        Ok(worst)
    }
}

pub(crate) fn anchor_of(spec: &LatticeSpec) -> Vec<i64> {
    let origin = vec![0; spec.dim()];
    if spec.contains(&origin) {
        origin
    } else {
        spec.lower().to_vec()
    }
}

/// Dense direct solver; factorizes once and solves for many `h`.
#[derive(Debug, Clone)]
pub struct PoissonSolver {
    kernel: RateKernel,
    pi: StationaryDistribution,
    lu: LU<f64, Dyn, Dyn>,
    anchor: Vec<i64>,
    anchor_row: usize,
}

impl PoissonSolver {
    pub fn new(kernel: &RateKernel) -> Result<Self> {
        let pi = stationary(kernel)?;
        let q = kernel.sparse();
        let n = q.len();
        let spec = kernel.spec();
        let anchor = anchor_of(spec);
        let anchor_row = spec.linear_index(&anchor)?;
        let mut a = DMatrix::<f64>::zeros(n, n);
        for (i, row) in q.rows.iter().enumerate() {
            a[(i, i)] = -q.exit[i];
            for &(j, r) in row {
                a[(i, j)] += r;
            }
        }
        for j in 0..n {
            a[(anchor_row, j)] = 0.0;
        }
        a[(anchor_row, anchor_row)] = 1.0;
        Ok(Self {
            kernel: kernel.clone(),
            pi,
            lu: a.lu(),
            anchor,
            anchor_row,
        })
    }

    pub fn stationary(&self) -> &StationaryDistribution {
        &self.pi
    }

    pub fn solve(&self, h: &GridFunction) -> Result<PoissonSolution> {
        let mean = self.pi.expectation(h)?;
        let mut b = DVector::from_iterator(h.values().len(), h.values().iter().map(|v| mean - v));
        b[self.anchor_row] = 0.0;
        let f = self
            .lu
            .solve(&b)
            .ok_or_else(|| Error::Solver("Poisson system is singular beyond the constant null space".into()))?;
        let fa = f[self.anchor_row];
        let sol = PoissonSolution {
            spec: self.kernel.spec().clone(),
            values: f.iter().map(|v| v - fa).collect(),
            mean,
            anchor: self.anchor.clone(),
            warning: None,
        };
        if sol.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Solver("non-finite Poisson solution".into()));
        }
        let scale = 1.0 + h.values().iter().fold(0.0f64, |m, v| m.max((v - mean).abs()));
        let resid = sol.residual(&self.kernel, h)?;
        if resid > 1e-6 * scale {
            return Err(Error::Solver(format!("Poisson residual {resid:e} after direct solve")));
        }
        Ok(sol)
    }
}

/// Direct solve of the truncated Poisson equation, `f(anchor) = 0`.
pub fn solve_poisson(kernel: &RateKernel, h: &GridFunction) -> Result<PoissonSolution> {
    PoissonSolver::new(kernel)?.solve(h)
}

/// M/M/1 Poisson solution on the box of `h` (which must start at 0), from
///
/// `Δf(δk) = −(1/(λπ_k)) Σ_{j>k} π_j (E h(X) − h(δj))`
///
/// with the truncated geometric law, then cumulative summation from `f(0) = 0`.
pub fn birth_death_poisson(lambda: f64, mu: f64, delta: f64, h: &GridFunction) -> Result<PoissonSolution> {
    let rho = lambda / mu;
    if !(lambda > 0.0 && mu > 0.0) || rho >= 1.0 {
        return Err(Error::Stability { rho });
    }
    let spec = h.spec();
    if spec.dim() != 1 || spec.lower()[0] != 0 {
        return Err(Error::InvalidArgument(
            "birth-death solver needs a one-dimensional box starting at 0".into(),
        ));
    }
    if (spec.delta() - delta).abs() > 1e-15 * delta {
        return Err(Error::InvalidArgument(format!(
            "spacing {delta} differs from the function's spacing {}",
            spec.delta()
        )));
    }
    let hv = h.values();
    let n = hv.len();
    // Truncated geometric weights, normalized.
    let mut w = Vec::with_capacity(n);
    let mut p = 1.0;
    for _ in 0..n {
        w.push(p);
        p *= rho;
    }
    let z: f64 = w.iter().sum();
    let mean: f64 = w.iter().zip(hv).map(|(a, b)| a * b).sum::<f64>() / z;
    // S_k = Σ_{j>k} ρ^{j−k} (E h − h_j), built from the top down.
    let mut diffs = vec![0.0; n.saturating_sub(1)];
    let mut s = 0.0;
    for k in (0..n.saturating_sub(1)).rev() {
        s = rho * ((mean - hv[k + 1]) + s);
        diffs[k] = -s / lambda;
    }
    let mut values = Vec::with_capacity(n);
    let mut acc = 0.0;
    values.push(acc);
    for d in &diffs {
        acc += d;
        values.push(acc);
    }
    Ok(PoissonSolution {
        spec: spec.clone(),
        values,
        mean,
        anchor: vec![0],
        warning: None,
    })
}

pub(crate) fn build_solution(
    spec: LatticeSpec,
    values: Vec<f64>,
    mean: f64,
    warning: Option<String>,
) -> PoissonSolution {
    let anchor = anchor_of(&spec);
    PoissonSolution {
        spec,
        values,
        mean,
        anchor,
        warning,
    }
}
