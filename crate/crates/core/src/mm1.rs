//! The M/M/1 queue scaled by `δ` against its exponential (reflected
//! Brownian motion) limit.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ctmc::{birth_death_poisson, truncation_level, RateKernel, TRUNCATION_TOL};
use crate::error::{Error, Result};
use crate::interchange::Mm1Boundary;
use crate::interpolator::{split_coordinate, Interpolant};
use crate::lattice::{GridFunction, LatticeSpec, MultiIndex};
use crate::metrics::{wasserstein1, DistributionHandle};
use crate::quadrature::{exponential_expectation, gauss7, TRUNCATION_MEANS};

/// Relative tolerance of exponential-law quadrature.
pub const QUAD_REL_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mm1Params {
    pub lambda: f64,
    pub mu: f64,
    pub delta: f64,
}

impl Mm1Params {
    pub fn new(lambda: f64, mu: f64, delta: f64) -> Result<Self> {
        // λ = 0 (pure death) is allowed for the couplings.
        if !(lambda >= 0.0 && mu > 0.0 && delta > 0.0) || !(lambda.is_finite() && mu.is_finite() && delta.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "need lambda >= 0, mu > 0, delta > 0, all finite, got lambda={lambda}, mu={mu}, delta={delta}"
            )));
        }
        if lambda >= mu {
            return Err(Error::Stability { rho: lambda / mu });
        }
        Ok(Self { lambda, mu, delta })
    }

    /// Heavy-traffic scaling `δ = 1 − ρ`, `λ = ρμ`.
    pub fn heavy_traffic(rho: f64, mu: f64) -> Result<Self> {
        Self::new(rho * mu, mu, 1.0 - rho)
    }

    pub fn rho(&self) -> f64 {
        self.lambda / self.mu
    }

    /// Smallest box `{0..N}` with stationary mass beyond `N` below 1e−14.
    pub fn truncation(&self) -> i64 {
        if self.lambda == 0.0 {
            return 0;
        }
        truncation_level(self.rho(), TRUNCATION_TOL).expect("validated rho")
    }

    pub fn kernel(&self, n: i64) -> Result<RateKernel> {
        RateKernel::mm1(self.lambda, self.mu, self.delta, n)
    }
}

/// `P(X = δn) = (1−ρ)ρⁿ`.
pub fn geometric_stationary(p: &Mm1Params, n: u64) -> f64 {
    (1.0 - p.rho()) * p.rho().powf(n as f64)
}

/// `E X = δρ/(1−ρ) = δλ/(μ−λ)`.
pub fn geometric_mean(p: &Mm1Params) -> f64 {
    p.delta * p.lambda / (p.mu - p.lambda)
}

/// Stationary law of the limit: exponential with this mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RbmLaw {
    pub mean: f64,
}

/// `δ(λ+μ)/(2(μ−λ))`.
pub fn rbm_stationary_mean(p: &Mm1Params) -> f64 {
    p.delta * (p.lambda + p.mu) / (2.0 * (p.mu - p.lambda))
}

pub fn rbm_law(p: &Mm1Params) -> RbmLaw {
    RbmLaw {
        mean: rbm_stationary_mean(p),
    }
}

/// `δᵃ(k+1)/(μ−λ) + δ^{a−1}/(μ−λ)`.
pub fn stein_factor_bound(p: &Mm1Params, a: u32, k: i64) -> Result<f64> {
    if !(1..=3).contains(&a) || k < 0 {
        return Err(Error::InvalidArgument(format!(
            "need order in 1..=3 and k >= 0, got a={a}, k={k}"
        )));
    }
    let gap = p.mu - p.lambda;
    Ok(p.delta.powi(a as i32) * (k + 1) as f64 / gap + p.delta.powi(a as i32 - 1) / gap)
}

/// First-order bound without the additive term: `δ(k+1)/(μ−λ)`.
pub fn first_order_bound(p: &Mm1Params, k: i64) -> f64 {
    p.delta * (k + 1) as f64 / (p.mu - p.lambda)
}

/// Uniform third-order bound `2δ/λ`.
pub fn uniform_bound(p: &Mm1Params) -> f64 {
    2.0 * p.delta / p.lambda
}

/// Exact differences of `f_h` against the bounds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SteinFactorReport {
    pub order: u32,
    /// `|Δᵃf_h(δk)|`, `k = 0..exact.len()`.
    pub exact: Vec<f64>,
    pub bound: Vec<f64>,
    /// Order 1 only: `δ(k+1)/(μ−λ)`, the bound the violations are checked against.
    pub first_order_bound: Option<Vec<f64>>,
    pub uniform_bound: f64,
    /// States where the bound fails.
    pub violations: Vec<i64>,
    /// Order 3 only: states where `|Δ³f_h| > 2δ/λ`.
    pub uniform_violations: Vec<i64>,
}

/// Relative slack on bound comparisons (rounding only).
const BOUND_SLACK: f64 = 1e-12;

/// Checks `k = 0..=k_max` using the closed-form solution on `h`'s box.
pub fn stein_factor_report(p: &Mm1Params, h: &GridFunction, order: u32, k_max: i64) -> Result<SteinFactorReport> {
    let f = birth_death_poisson(p.lambda, p.mu, p.delta, h)?;
    let n = h.spec().upper()[0];
    if k_max < 0 || k_max + order as i64 > n {
        return Err(Error::InvalidArgument(format!(
            "k_max = {k_max} leaves the box {{0..{n}}} at order {order}"
        )));
    }
    let grid = f.grid();
    let a = MultiIndex::new(vec![order as usize]);
    let mut exact = Vec::new();
    let mut bound = Vec::new();
    let mut first = Vec::new();
    let mut violations = Vec::new();
    let mut uniform_violations = Vec::new();
    let uniform = uniform_bound(p);
    for k in 0..=k_max {
        let d = grid.forward_difference(&a, &[k])?.abs();
        let b = stein_factor_bound(p, order, k)?;
        let check = if order == 1 {
            let fb = first_order_bound(p, k);
            first.push(fb);
            fb
        } else {
            b
        };
        if d > check * (1.0 + BOUND_SLACK) {
            violations.push(k);
        }
        if order == 3 && d > uniform * (1.0 + BOUND_SLACK) {
            uniform_violations.push(k);
        }
        exact.push(d);
        bound.push(b);
    }
    Ok(SteinFactorReport {
        order,
        exact,
        bound,
        first_order_bound: (order == 1).then_some(first),
        uniform_bound: uniform,
        violations,
        uniform_violations,
    })
}

/// `|LHS − RHS|` of
/// `Δ²f(0) − Δf(0) = ((λ+μ)/μ)Δ³f(0) − Δ³h(0)/μ − (λ/μ)Δ³f(δ)`.
pub fn third_order_identity_residual(p: &Mm1Params, h: &GridFunction) -> Result<f64> {
    let f = birth_death_poisson(p.lambda, p.mu, p.delta, h)?.grid();
    let d = |g: &GridFunction, a: usize, k: i64| g.forward_difference(&MultiIndex::new(vec![a]), &[k]);
    let lhs = d(&f, 2, 0)? - d(&f, 1, 0)?;
    let rhs = (p.lambda + p.mu) / p.mu * d(&f, 3, 0)? - d(h, 3, 0)? / p.mu - p.lambda / p.mu * d(&f, 3, 1)?;
    Ok((lhs - rhs).abs())
}

/// Smallest box end `N` for [`error_decomposition`]: covers 40 means of the
/// limit law plus the stencil, and the truncation level.
pub fn decomposition_box(p: &Mm1Params) -> i64 {
    let cover = (TRUNCATION_MEANS * rbm_stationary_mean(p) / p.delta).ceil() as i64 + 6;
    cover.max(p.truncation())
}

/// Terms of `E h(X) − E Ah(Y)` with the Taylor remainders in integral form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorDecomposition {
    /// `λδ³ E ∫₀¹ (1−s)²/2 (Af̂)‴(Y+sδ) ds`.
    pub lambda_term: f64,
    /// `−μδ³ E ∫₀¹ (1−s)²/2 (Af̂)‴(Y−sδ) ds`.
    pub mu_term: f64,
    /// `−(Af)′(0) δ(μ−λ)`.
    pub boundary_term: f64,
    pub sum: f64,
    pub mean_h_x: f64,
    pub mean_ah_y: f64,
    /// `E h(X) − E Ah(Y)`, computed directly.
    pub gap: f64,
}

/// Decomposes the gap for `h` on `{0..N}`, `N ≥ decomposition_box(p)`.
pub fn error_decomposition(p: &Mm1Params, h: &GridFunction) -> Result<ErrorDecomposition> {
    let need = decomposition_box(p);
    let spec = h.spec();
    if spec.dim() != 1 || spec.lower()[0] != 0 || spec.upper()[0] < need {
        return Err(Error::InvalidArgument(format!(
            "h must live on {{0..N}} with N >= {need}"
        )));
    }
    let f = birth_death_poisson(p.lambda, p.mu, p.delta, h)?;
    let boundary = Mm1Boundary::new(p.lambda, p.mu, p.delta, &f.grid())?;
    let hat = boundary.hat();
    let third = MultiIndex::new(vec![3]);
    let g3 = |piece: i64, t: f64| hat.piece_derivative(&[piece], &[t], &third).unwrap_or(f64::NAN);
    let w = |s: f64| 0.5 * (1.0 - s) * (1.0 - s);
    let delta = p.delta;
    let m = rbm_stationary_mean(p);

    // y = δ(j + τ); y + sδ crosses the knot j+1 at s = 1 − τ, y − sδ crosses j at s = τ.
    let plus = |y: f64| -> Result<f64> {
        let (j, tau) = split_coordinate(&y, &delta);
        let v = gauss7(|s| w(s) * g3(j, tau + s), 0.0, 1.0 - tau)
            + gauss7(|s| w(s) * g3(j + 1, tau + s - 1.0), 1.0 - tau, 1.0);
        finite(v, y)
    };
    let minus = |y: f64| -> Result<f64> {
        let (j, tau) = split_coordinate(&y, &delta);
        let v = gauss7(|s| w(s) * g3(j, tau - s), 0.0, tau) + gauss7(|s| w(s) * g3(j - 1, tau - s + 1.0), tau, 1.0);
        finite(v, y)
    };
    let lambda_term = p.lambda * delta.powi(3) * exponential_expectation(m, delta, QUAD_REL_TOL, plus)?;
    let mu_term = -p.mu * delta.powi(3) * exponential_expectation(m, delta, QUAD_REL_TOL, minus)?;
    let boundary_term = -hat.derivative_1d(0.0, 1)? * delta * (p.mu - p.lambda);

    let ah = Interpolant::new(h.clone());
    let mean_ah_y = exponential_expectation(m, delta, QUAD_REL_TOL, |y| ah.evaluate_1d(y))?;
    let mean_h_x = f.mean();
    Ok(ErrorDecomposition {
        lambda_term,
        mu_term,
        boundary_term,
        sum: lambda_term + mu_term + boundary_term,
        mean_h_x,
        mean_ah_y,
        gap: mean_h_x - mean_ah_y,
    })
}

fn finite(v: f64, y: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Domain {
            point: vec![y],
            reason: "interpolant stencil left the box during quadrature".into(),
        })
    }
}

/// Twice-differentiable test function for the limit-generator identity.
#[derive(Debug, Clone)]
pub enum TestFunction<'a> {
    /// `Σᵢ cᵢ xⁱ`.
    Polynomial(Vec<f64>),
    Spline(&'a Interpolant),
}

impl TestFunction<'_> {
    fn derivative(&self, x: f64, a: usize) -> Result<f64> {
        match self {
            TestFunction::Polynomial(c) => Ok(c
                .iter()
                .enumerate()
                .skip(a)
                .map(|(i, ci)| ci * ((i - a + 1)..=i).product::<usize>() as f64 * x.powi((i - a) as i32))
                .sum()),
            TestFunction::Spline(itp) => itp.derivative_1d(x, a),
        }
    }
}

/// `|E(δ(λ−μ)f′(Y) + ½δ²(λ+μ)f″(Y)) + f′(0)δ(μ−λ)|` for `Y` exponential with
/// the limit mean.
pub fn rbmbar_residual(p: &Mm1Params, f: &TestFunction<'_>) -> Result<f64> {
    let m = rbm_stationary_mean(p);
    let (l, u, d) = (p.lambda, p.mu, p.delta);
    let e = exponential_expectation(m, d, QUAD_REL_TOL, |y| {
        Ok(d * (l - u) * f.derivative(y, 1)? + 0.5 * d * d * (l + u) * f.derivative(y, 2)?)
    })?;
    Ok((e + f.derivative(0.0, 1)? * d * (u - l)).abs())
}

/// `W₁` between the `δ`-scaled geometric law and the limit exponential.
pub fn convergence_gap(p: &Mm1Params) -> Result<f64> {
    let x = DistributionHandle::geometric(p.rho(), p.delta)?;
    let y = DistributionHandle::exponential(rbm_stationary_mean(p))?;
    wasserstein1(&x, &y, 1e-10)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub rho: f64,
    pub delta: f64,
    pub gap: f64,
    /// `δ(1 + 1/ρ)`.
    pub bound_rhs: f64,
}

/// Heavy-traffic sweep with the fitted constant and rate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceSweep {
    pub mu: f64,
    pub rows: Vec<ConvergenceRow>,
    /// `max gap / bound_rhs`.
    pub fitted_c: f64,
    /// Least-squares slope of `ln gap` on `ln δ` (NaN with fewer than two rows).
    pub slope: f64,
}

impl ConvergenceSweep {
    /// Columns `rho,delta,gap,bound_rhs,fitted_C,slope`, 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("rho,delta,gap,bound_rhs,fitted_C,slope\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                sig17(r.rho),
                sig17(r.delta),
                sig17(r.gap),
                sig17(r.bound_rhs),
                sig17(self.fitted_c),
                sig17(self.slope)
            ));
        }
        out
    }
}

/// Float formatted with 17 significant digits.
pub fn sig17(x: f64) -> String {
    format!("{x:.16e}")
}

/// Runs `δ = 1−ρ`, `λ = ρμ` for each `ρ` (in parallel, output in input order).
pub fn convergence_sweep(rhos: &[f64], mu: f64) -> Result<ConvergenceSweep> {
    let rows = rhos
        .par_iter()
        .map(|&rho| {
            let p = Mm1Params::heavy_traffic(rho, mu)?;
            Ok(ConvergenceRow {
                rho,
                delta: p.delta,
                gap: convergence_gap(&p)?,
                bound_rhs: p.delta * (1.0 + 1.0 / rho),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let fitted_c = rows.iter().map(|r| r.gap / r.bound_rhs).fold(0.0, f64::max);
    let slope = log_log_slope(&rows.iter().map(|r| (r.delta, r.gap)).collect::<Vec<_>>());
    Ok(ConvergenceSweep {
        mu,
        rows,
        fitted_c,
        slope,
    })
}

/// Ordinary least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    if points.len() < 2 {
        return f64::NAN;
    }
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Box `{0..n}` with `h(δk) = δk`.
pub fn identity_function(p: &Mm1Params, n: i64) -> Result<GridFunction> {
    GridFunction::from_fn(LatticeSpec::line(p.delta, 0, n)?, |k| p.delta * k[0] as f64)
}
