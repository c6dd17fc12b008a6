//! Time-integral representation of the Poisson solution,
//! `g(δk) = ∫₀^T (E_{δk} h(X(t)) − E h(X)) dt`, by uniformization.
//!
//! With `P = I + Q/Λ` and `N_s ~ Poisson(Λs)`,
//! `e^{Qs}u = Σₙ P(N_s = n) Pⁿu` and `∫₀^σ e^{Qs}u ds = Λ⁻¹ Σₙ P(N_σ > n) Pⁿu`,
//! so each segment of the time grid is integrated without discretization
//! error; the horizon is the only truncation.

use crate::ctmc::kernel::{RateKernel, SparseGenerator};
use crate::ctmc::poisson::{anchor_of, build_solution, PoissonSolution};
use crate::ctmc::stationary::stationary;
use crate::error::{Error, Result};
use crate::lattice::GridFunction;

/// Headroom over the largest exit rate.
pub const UNIFORMIZATION_FACTOR: f64 = 1.01;
/// Mean number of uniformized jumps per sub-segment.
const MAX_SEGMENT_JUMPS: f64 = 50.0;
/// Tail of `∫_T^∞` tolerated without a warning, relative to `1 + max|h − E h|`.
pub const TAIL_TOL: f64 = 1e-9;

/// Poisson solution from the integral over `[0, horizon]`, on a grid whose
/// `steps` segments double in length. Normalized to zero at the anchor.
pub fn poisson_via_integral(
    kernel: &RateKernel,
    h: &GridFunction,
    horizon: f64,
    steps: usize,
) -> Result<PoissonSolution> {
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "horizon must be finite and non-negative, got {horizon}"
        )));
    }
    if steps == 0 || steps > 60 {
        return Err(Error::InvalidArgument(format!("steps must be in 1..=60, got {steps}")));
    }
    let pi = stationary(kernel)?;
    let mean = pi.expectation(h)?;
    let q = kernel.sparse();
    let big = UNIFORMIZATION_FACTOR * q.exit.iter().fold(0.0f64, |m, &x| m.max(x));
    let big = if big > 0.0 { big } else { 1.0 };
    let n = q.len();

    let mut u: Vec<f64> = h.values().iter().map(|v| v - mean).collect();
    let scale = 1.0 + sup(&u);
    let mut g = vec![0.0; n];

    let denom = (2f64).powi(steps as i32) - 1.0;
    let times: Vec<f64> = (0..=steps)
        .map(|i| horizon * ((2f64).powi(i as i32) - 1.0) / denom)
        .collect();
    let mut prev_sup = sup(&u);
    let mut last_sup = prev_sup;
    let mut work = Workspace::new(n);
    for w in times.windows(2) {
        let tau = w[1] - w[0];
        if tau <= 0.0 {
            continue;
        }
        let pieces = ((big * tau) / MAX_SEGMENT_JUMPS).ceil().max(1.0) as usize;
        let sigma = tau / pieces as f64;
        for _ in 0..pieces {
            segment(&q, big, sigma, &mut u, &mut g, &mut work);
        }
        prev_sup = last_sup;
        last_sup = sup(&u);
    }

    let tail = if last_sup <= 1e-14 * scale {
        0.0
    } else {
        tail_estimate(prev_sup, last_sup, times[steps] - times[steps - 1])
    };
    let warning = (tail > TAIL_TOL * scale)
        .then(|| format!("horizon {horizon} too short: estimated remaining integral {tail:e} exceeds tolerance"));

    let spec = kernel.spec().clone();
    let a = spec.linear_index(&anchor_of(&spec))?;
    let ga = g[a];
    let values = g.iter().map(|v| v - ga).collect();
    Ok(build_solution(spec, values, mean, warning))
}

struct Workspace {
    p: Vec<f64>,
    next: Vec<f64>,
    qv: Vec<f64>,
    acc_u: Vec<f64>,
    acc_g: Vec<f64>,
}

impl Workspace {
    fn new(n: usize) -> Self {
        Self {
            p: vec![0.0; n],
            next: vec![0.0; n],
            qv: vec![0.0; n],
            acc_u: vec![0.0; n],
            acc_g: vec![0.0; n],
        }
    }
}

/// Advances `u ← e^{Qσ}u` and adds `∫₀^σ e^{Qs}u ds` to `g`.
fn segment(q: &SparseGenerator, big: f64, sigma: f64, u: &mut [f64], g: &mut [f64], ws: &mut Workspace) {
    let a = big * sigma;
    let nmax = (a + 12.0 * a.sqrt() + 40.0).ceil() as usize;
    let mut w = Vec::with_capacity(nmax + 1);
    let mut x = (-a).exp();
    w.push(x);
    for m in 1..=nmax {
        x *= a / m as f64;
        w.push(x);
    }
    // tail[m] = P(N > m)
    let mut tail = vec![0.0; nmax + 1];
    let mut s = 0.0;
    for m in (0..=nmax).rev() {
        tail[m] = s;
        s += w[m];
    }

    ws.p.copy_from_slice(u);
    ws.acc_u.iter_mut().for_each(|v| *v = 0.0);
    ws.acc_g.iter_mut().for_each(|v| *v = 0.0);
    for m in 0..=nmax {
        for i in 0..u.len() {
            ws.acc_u[i] += w[m] * ws.p[i];
            ws.acc_g[i] += tail[m] * ws.p[i];
        }
        if m < nmax {
            q.apply(&ws.p, &mut ws.qv);
            for i in 0..u.len() {
                ws.next[i] = ws.p[i] + ws.qv[i] / big;
            }
            std::mem::swap(&mut ws.p, &mut ws.next);
        }
    }
    u.copy_from_slice(&ws.acc_u);
    for (gi, a) in g.iter_mut().zip(&ws.acc_g) {
        *gi += a / big;
    }
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// `∫_T^∞ |u|` assuming exponential decay at the rate seen over the last segment.
fn tail_estimate(before: f64, after: f64, span: f64) -> f64 {
    if after == 0.0 {
        return 0.0;
    }
    if span <= 0.0 || before <= after {
        return f64::INFINITY;
    }
    let rate = (before / after).ln() / span;
    after / rate
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ctmc::poisson::birth_death_poisson;

    #[test]
    fn matches_closed_form_on_mm1() {
        let kern = RateKernel::mm1(1.0, 2.0, 1.0, 40).unwrap();
        let h = GridFunction::from_fn(kern.spec().clone(), |k| k[0] as f64).unwrap();
        let g = poisson_via_integral(&kern, &h, 400.0, 12).unwrap();
        assert!(g.warning().is_none(), "{:?}", g.warning());
        let f = birth_death_poisson(1.0, 2.0, 1.0, &h).unwrap();
        for k in 0..=40 {
            assert!((g.get(&[k]).unwrap() - f.get(&[k]).unwrap()).abs() < 1e-6, "k = {k}");
        }
    }

    #[test]
    fn constant_and_empty_horizon() {
        let kern = RateKernel::mm1(1.0, 2.0, 1.0, 20).unwrap();
        let c = GridFunction::constant(kern.spec().clone(), 3.0);
        let g = poisson_via_integral(&kern, &c, 50.0, 8).unwrap();
        assert!(g.values().iter().all(|v| v.abs() < 1e-12));
        assert!(g.warning().is_none());

        let h = GridFunction::from_fn(kern.spec().clone(), |k| k[0] as f64).unwrap();
        let z = poisson_via_integral(&kern, &h, 0.0, 8).unwrap();
        assert!(z.values().iter().all(|v| *v == 0.0));
        assert!(z.warning().is_some());
    }

    #[test]
    fn short_horizon_warns() {
        let kern = RateKernel::mm1(1.0, 2.0, 1.0, 20).unwrap();
        let h = GridFunction::from_fn(kern.spec().clone(), |k| k[0] as f64).unwrap();
        assert!(poisson_via_integral(&kern, &h, 2.0, 6).unwrap().warning().is_some());
    }
}
