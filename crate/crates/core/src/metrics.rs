//! One-dimensional Wasserstein distance `W₁ = ∫|F_u − F_v|` and the bridge
//! between Lipschitz test functions and their lattice restrictions.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::interpolator::Interpolant;
use crate::lattice::{GridFunction, LatticeSpec};
use crate::quadrature::{exponential_expectation, TRUNCATION_MEANS};

/// Law on the real line, either a lattice pmf or a named continuous law.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DistributionHandle {
    /// Mass `pmf[i]` at `δ(lower + i)`.
    Lattice {
        delta: f64,
        lower: i64,
        pmf: Vec<f64>,
    },
    Exponential {
        mean: f64,
    },
}

impl DistributionHandle {
    pub fn lattice(delta: f64, lower: i64, pmf: Vec<f64>) -> Result<Self> {
        if !(delta > 0.0) {
            return Err(Error::InvalidArgument(format!("spacing must be positive, got {delta}")));
        }
        if pmf.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::InvalidArgument(
                "pmf entries must be finite and non-negative".into(),
            ));
        }
        let s: f64 = pmf.iter().sum();
        if (s - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!("pmf sums to {s}")));
        }
        Ok(Self::Lattice { delta, lower, pmf })
    }

    pub fn exponential(mean: f64) -> Result<Self> {
        if !(mean > 0.0 && mean.is_finite()) {
            return Err(Error::InvalidArgument(format!("mean must be positive, got {mean}")));
        }
        Ok(Self::Exponential { mean })
    }

    /// `P(X = δn) = (1−ρ)ρⁿ`, cut where the remaining mass is below 1e−16.
    pub fn geometric(rho: f64, delta: f64) -> Result<Self> {
        if !(rho > 0.0 && rho < 1.0) {
            return Err(Error::Stability { rho });
        }
        let mut pmf = Vec::new();
        let mut p = 1.0 - rho;
        let mut tail = 1.0;
        while tail >= 1e-16 {
            pmf.push(p);
            tail *= rho;
            p *= rho;
        }
        Self::lattice(delta, 0, pmf)
    }

    pub fn mean(&self) -> f64 {
        match self {
            Self::Lattice { delta, lower, pmf } => pmf
                .iter()
                .enumerate()
                .map(|(i, p)| p * delta * (lower + i as i64) as f64)
                .sum(),
            Self::Exponential { mean } => *mean,
        }
    }
}

/// Neumaier-compensated sum.
#[derive(Default)]
struct Sum {
    s: f64,
    c: f64,
    terms: usize,
}

impl Sum {
    fn add(&mut self, x: f64) {
        let t = self.s + x;
        if self.s.abs() >= x.abs() {
            self.c += (self.s - t) + x;
        } else {
            self.c += (x - t) + self.s;
        }
        self.s = t;
        self.terms += 1;
    }

    fn value(&self) -> f64 {
        self.s + self.c
    }
}

/// `∫|F_u − F_v|`, summed cell by cell in closed form.
///
/// Fails with a tolerance error if the accumulated rounding bound exceeds
/// `tol` relative to the result.
pub fn wasserstein1(u: &DistributionHandle, v: &DistributionHandle, tol: f64) -> Result<f64> {
    use DistributionHandle::*;
    let (value, scale, terms) = match (u, v) {
        (Exponential { mean: a }, Exponential { mean: b }) => ((a - b).abs(), a.max(*b), 1),
        (Lattice { .. }, Lattice { .. }) => lattice_lattice(u, v),
        (Lattice { delta, lower, pmf }, Exponential { mean })
        | (Exponential { mean }, Lattice { delta, lower, pmf }) => lattice_exponential(*delta, *lower, pmf, *mean),
    };
    // Every cell contributes a non-negative term evaluated to a few ulps and the
    // sum is compensated, so the error is a small multiple of ε·W₁.
    let bound = 16.0 * f64::EPSILON * value * (1.0 + terms as f64 * f64::EPSILON);
    if !value.is_finite() || !scale.is_finite() || bound > tol * value {
        return Err(Error::Tolerance(format!(
            "rounding bound {bound:e} exceeds tolerance {tol:e} for W1 = {value:e}"
        )));
    }
    Ok(value)
}

fn support(delta: f64, lower: i64, pmf: &[f64]) -> impl Iterator<Item = (f64, f64)> + '_ {
    pmf.iter()
        .enumerate()
        .map(move |(i, p)| (delta * (lower + i as i64) as f64, *p))
}

fn lattice_lattice(u: &DistributionHandle, v: &DistributionHandle) -> (f64, f64, usize) {
    let (
        DistributionHandle::Lattice {
            delta: du,
            lower: lu,
            pmf: pu,
        },
        DistributionHandle::Lattice {
            delta: dv,
            lower: lv,
            pmf: pv,
        },
    ) = (u, v)
    else {
        unreachable!("lattice pair")
    };
    let mut events: Vec<(f64, f64)> = support(*du, *lu, pu)
        .chain(support(*dv, *lv, pv).map(|(x, p)| (x, -p)))
        .collect();
    events.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut acc = Sum::default();
    let mut diff = 0.0f64;
    let mut prev = events.first().map_or(0.0, |e| e.0);
    for (x, dp) in &events {
        acc.add(diff.abs() * (x - prev));
        diff += dp;
        prev = *x;
    }
    let scale = events.last().map_or(1.0, |e| e.0.abs()).max(1.0) - events.first().map_or(0.0, |e| e.0.min(0.0));
    (acc.value(), scale, acc.terms)
}

/// `∫_a^b |c − F(t)| dt` with `F(t) = 1 − e^{−t/m}` on `t ≥ 0`, zero below.
fn cell_vs_exponential(c: f64, a: f64, b: f64, m: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    if b <= 0.0 {
        return c.abs() * (b - a);
    }
    let mut out = 0.0;
    let a = if a < 0.0 {
        out += c.abs() * (-a);
        0.0
    } else {
        a
    };
    // g(t) = c − F(t) = c − 1 + e^{−t/m} is decreasing.
    let integral = |lo: f64, hi: f64| (c - 1.0) * (hi - lo) + m * ((-lo / m).exp() - (-hi / m).exp());
    let root = if c < 1.0 { -m * (1.0 - c).ln() } else { f64::INFINITY };
    if root <= a || root >= b {
        out += integral(a, b).abs();
    } else {
        out += integral(a, root).abs() + integral(root, b).abs();
    }
    out
}

fn lattice_exponential(delta: f64, lower: i64, pmf: &[f64], m: f64) -> (f64, f64, usize) {
    let mut acc = Sum::default();
    let pts: Vec<(f64, f64)> = support(delta, lower, pmf).collect();
    let first = pts.first().map_or(0.0, |p| p.0);
    // Below the first atom F_u = 0.
    acc.add(cell_vs_exponential(0.0, first.min(0.0), first, m));
    let mut c = 0.0;
    for w in pts.windows(2) {
        c += w[0].1;
        acc.add(cell_vs_exponential(c, w[0].0, w[1].0, m));
    }
    // Beyond the last atom the lattice law is treated as complete.
    let last = pts.last().map_or(0.0, |p| p.0);
    let tail_end = last.max(0.0) + TRUNCATION_MEANS * m;
    acc.add(cell_vs_exponential(1.0, last, tail_end, m));
    (acc.value(), (last.abs() + m).max(delta), acc.terms)
}

/// Both sides of the Lipschitz/lattice bridge for a lattice law `u` and an
/// exponential law `v`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BridgeGap {
    /// `|E h*(u) − E h*(v)|`.
    pub lhs: f64,
    /// `|E h(u) − E Ah(v)|`, `h` the restriction of `h*` to the lattice.
    pub rhs_main: f64,
}

/// Evaluates [`BridgeGap`] with quadrature tolerance `rel_tol`.
pub fn bridge_gap(
    u: &DistributionHandle,
    v: &DistributionHandle,
    hstar: impl Fn(f64) -> f64,
    rel_tol: f64,
) -> Result<BridgeGap> {
    let (DistributionHandle::Lattice { delta, lower, pmf }, DistributionHandle::Exponential { mean }) = (u, v) else {
        return Err(Error::InvalidArgument(
            "bridge_gap takes a lattice law and an exponential law".into(),
        ));
    };
    if *lower < 0 {
        return Err(Error::InvalidArgument(
            "lattice law must live on the non-negative half-line".into(),
        ));
    }
    let e_u: f64 = support(*delta, *lower, pmf).map(|(x, p)| p * hstar(x)).sum();
    let e_v = exponential_expectation(*mean, *delta, rel_tol, |y| Ok(hstar(y)))?;
    let top = (((TRUNCATION_MEANS * mean) / delta).ceil() as i64 + 6).max(lower + pmf.len() as i64);
    let spec = LatticeSpec::line(*delta, 0, top)?;
    let h = GridFunction::from_fn(spec, |k| hstar(delta * k[0] as f64))?;
    let ah = Interpolant::new(h);
    let e_ah = exponential_expectation(*mean, *delta, rel_tol, |y| ah.evaluate_1d(y))?;
    Ok(BridgeGap {
        lhs: (e_u - e_v).abs(),
        rhs_main: (e_u - e_ah).abs(),
    })
}
