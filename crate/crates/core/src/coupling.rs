//! Synchronous couplings of M/M/1 queues and the misaligned reflected
//! Brownian motion couplings.
//!
//! Systems `0..n` share arrivals and services. System `i+1` holds one extra
//! low-priority customer compared with system `i`, served only when nobody
//! else is present and preempted by arrivals. Levels are integers in units
//! of `δ`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::{GridFunction, MultiIndex};
use crate::mm1::Mm1Params;

/// Private stream for replication `rep`, attempt `attempt`.
pub fn replication_rng(seed: u64, rep: u64, attempt: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep | (attempt << 40));
    rng
}

/// Joint state of `n` coupled queues; `levels[i]` is system `i`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct JointChain {
    levels: Vec<i64>,
}

/// Transition row: 1 is an arrival, `2 + i` a service whose lowest
/// non-empty system is `i`.
pub type EventKind = usize;

impl JointChain {
    /// Systems start at `k0, k0+1, ..., k0+n−1`.
    pub fn new(k0: i64, n: usize) -> Result<Self> {
        if k0 < 0 || n < 2 {
            return Err(Error::InvalidArgument(format!(
                "need k0 >= 0 and at least two systems, got k0={k0}, n={n}"
            )));
        }
        Ok(Self {
            levels: (0..n as i64).map(|i| k0 + i).collect(),
        })
    }

    pub fn from_levels(levels: Vec<i64>) -> Result<Self> {
        let chain = Self { levels };
        chain.check()?;
        Ok(chain)
    }

    pub fn levels(&self) -> &[i64] {
        &self.levels
    }

    /// Systems 0 and 1 have met.
    pub fn coupled(&self) -> bool {
        self.levels[0] == self.levels[1]
    }

    /// `λ + μ·1(top system non-empty)`.
    pub fn total_rate(&self, p: &Mm1Params) -> f64 {
        p.lambda
            + if *self.levels.last().expect("non-empty") > 0 {
                p.mu
            } else {
                0.0
            }
    }

    /// Holding time and transition row, or `None` when no transition is possible.
    pub fn sample_event(&self, p: &Mm1Params, rng: &mut impl Rng) -> Option<(f64, EventKind)> {
        let total = self.total_rate(p);
        if total == 0.0 {
            return None;
        }
        let e: f64 = rng.sample(Exp1);
        let dt = e / total;
        let u: f64 = rng.random::<f64>() * total;
        if u < p.lambda {
            Some((dt, 1))
        } else {
            let low = self
                .levels
                .iter()
                .position(|&x| x > 0)
                .expect("service needs a non-empty system");
            Some((dt, 2 + low))
        }
    }

    pub fn apply(&mut self, kind: EventKind) {
        if kind == 1 {
            self.levels.iter_mut().for_each(|x| *x += 1);
        } else {
            self.levels[kind - 2..].iter_mut().for_each(|x| *x -= 1);
        }
        debug_assert!(self.check().is_ok());
    }

    /// Ordering with unit or zero gaps.
    pub fn check(&self) -> Result<()> {
        let ok = self.levels.first().is_some_and(|&x| x >= 0)
            && self.levels.windows(2).all(|w| w[1] - w[0] == 0 || w[1] - w[0] == 1);
        if ok {
            Ok(())
        } else {
            Err(Error::Solver(format!(
                "coupling ordering violated at levels {:?}",
                self.levels
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JointEvent {
    pub time: f64,
    pub kind: EventKind,
}

/// Full event record of a coupled run on `[0, horizon]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub delta: f64,
    /// Levels after each event, starting with the initial state.
    pub states: Vec<Vec<i64>>,
    /// `events[i]` leads from `states[i]` to `states[i+1]`.
    pub events: Vec<JointEvent>,
    /// First time systems 0 and 1 meet, if within the horizon.
    pub coupling_time: Option<f64>,
}

impl Trajectory {
    /// Gaps `x⁽ⁱ⁺¹⁾ − x⁽ⁱ⁾` after each event.
    pub fn gaps(&self) -> Vec<Vec<i64>> {
        self.states
            .iter()
            .map(|s| s.windows(2).map(|w| w[1] - w[0]).collect())
            .collect()
    }
}

fn simulate(p: &Mm1Params, k0: i64, n: usize, horizon: f64, seed: u64) -> Result<Trajectory> {
    let mut chain = JointChain::new(k0, n)?;
    let mut rng = replication_rng(seed, 0, 0);
    let mut t = 0.0;
    let mut out = Trajectory {
        delta: p.delta,
        states: vec![chain.levels.clone()],
        events: Vec::new(),
        coupling_time: None,
    };
    while let Some((dt, kind)) = chain.sample_event(p, &mut rng) {
        t += dt;
        if t > horizon {
            break;
        }
        let before = chain.levels.clone();
        chain.apply(kind);
        chain.check()?;
        // Gaps never grow.
        assert!(
            before
                .windows(2)
                .zip(chain.levels.windows(2))
                .all(|(a, b)| b[1] - b[0] <= a[1] - a[0]),
            "coupling gap grew: {before:?} -> {:?}",
            chain.levels
        );
        if out.coupling_time.is_none() && chain.coupled() {
            out.coupling_time = Some(t);
        }
        out.events.push(JointEvent { time: t, kind });
        out.states.push(chain.levels.clone());
    }
    Ok(out)
}

/// Systems 0 and 1 from `(δk0, δ(k0+1))`.
pub fn simulate_pair(p: &Mm1Params, k0: i64, horizon: f64, seed: u64) -> Result<Trajectory> {
    simulate(p, k0, 2, horizon, seed)
}

/// Systems 0 to 3 from `δ(k0 + i)`.
pub fn simulate_quadruple(p: &Mm1Params, k0: i64, horizon: f64, seed: u64) -> Result<Trajectory> {
    simulate(p, k0, 4, horizon, seed)
}

/// Time-integral of `g(X⁽⁰⁾)` until systems 0 and 1 meet, from `X⁽⁰⁾(0) = δk`.
///
/// Runs in chunks of length `horizon`; each chunk past the first is counted
/// as an extension.
fn integrate_to_coupling(
    p: &Mm1Params,
    k: i64,
    horizon: f64,
    rng: &mut impl Rng,
    mut g: impl FnMut(i64) -> Result<f64>,
) -> Result<(f64, f64, u64)> {
    let mut chain = JointChain::new(k, 2)?;
    let mut t = 0.0;
    let mut integral = 0.0;
    let mut limit = horizon;
    let mut extensions = 0;
    while !chain.coupled() {
        let (dt, kind) = chain
            .sample_event(p, rng)
            .expect("an uncoupled pair always has a service clock");
        integral += g(chain.levels[0])? * dt;
        t += dt;
        while t > limit {
            limit += horizon;
            extensions += 1;
        }
        chain.apply(kind);
        chain.check()?;
    }
    Ok((integral, t, extensions))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimeStats {
    pub mean: f64,
    pub stderr: f64,
}

/// Monte-Carlo estimate from i.i.d. replications.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CouplingEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub replications: u64,
    /// Horizon extensions summed over replications.
    pub extensions: u64,
    /// Coupling time from the starting level.
    pub coupling_time: Option<TimeStats>,
}

impl CouplingEstimate {
    /// `(mean − target)/stderr`; zero when both the error and the spread vanish.
    pub fn z_score(&self, target: f64) -> f64 {
        let d = self.mean - target;
        if self.stderr == 0.0 {
            if d == 0.0 {
                0.0
            } else {
                f64::INFINITY.copysign(d)
            }
        } else {
            d / self.stderr
        }
    }
}

fn mean_stderr(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    if x.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn check_mc(reps: u64, horizon: f64) -> Result<()> {
    if reps < 2 || !(horizon > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "need reps >= 2 and a positive horizon, got {reps} and {horizon}"
        )));
    }
    Ok(())
}

/// `E τ` for systems 0 and 1 started at `(δk, δ(k+1))`; the exact value is
/// `(k+1)/(μ−λ)`.
pub fn estimate_coupling_time(p: &Mm1Params, k: i64, reps: u64, horizon: f64, seed: u64) -> Result<CouplingEstimate> {
    check_mc(reps, horizon)?;
    let runs = (0..reps)
        .into_par_iter()
        .map(|r| {
            let mut rng = replication_rng(seed, r, 0);
            integrate_to_coupling(p, k, horizon, &mut rng, |_| Ok(0.0))
        })
        .collect::<Result<Vec<_>>>()?;
    let taus: Vec<f64> = runs.iter().map(|r| r.1).collect();
    let (mean, stderr) = mean_stderr(&taus);
    Ok(CouplingEstimate {
        mean,
        stderr,
        replications: reps,
        extensions: runs.iter().map(|r| r.2).sum(),
        coupling_time: Some(TimeStats { mean, stderr }),
    })
}

/// `Δᵃf_h(δk)` from
///
/// * `Δf(δk) = E_{δk} ∫₀^τ Δh(X⁽⁰⁾)`,
/// * `Δ²f(δk) = E_{δk} ∫₀^τ Δ²h(X⁽⁰⁾) + E_0 ∫₀^τ Δh(X⁽⁰⁾)`,
/// * `Δ³f(δk) = E_{δk} ∫₀^τ Δ³h(X⁽⁰⁾) + E_0 ∫₀^τ Δ²h(X⁽⁰⁾)`,
///
/// `τ` the meeting time of systems 0 and 1. The run from 0 reuses the
/// replication's random stream. `h` lives on a box starting at 0; leaving it
/// is a domain error.
pub fn estimate_delta(
    p: &Mm1Params,
    h: &GridFunction,
    k: i64,
    order: u32,
    reps: u64,
    horizon: f64,
    seed: u64,
) -> Result<CouplingEstimate> {
    check_mc(reps, horizon)?;
    if !(1..=3).contains(&order) {
        return Err(Error::InvalidArgument(format!("order must be 1, 2 or 3, got {order}")));
    }
    let spec = h.spec();
    if spec.dim() != 1 || spec.lower()[0] != 0 {
        return Err(Error::InvalidArgument(
            "h must live on a one-dimensional box starting at 0".into(),
        ));
    }
    let top = spec.upper()[0];
    let table = |a: u32| -> Result<Vec<f64>> {
        (0..=top - a as i64)
            .map(|j| h.forward_difference(&MultiIndex::new(vec![a as usize]), &[j]))
            .collect()
    };
    let main = table(order)?;
    let tail = if order > 1 { Some(table(order - 1)?) } else { None };
    let lookup = |t: &[f64], a: u32, level: i64| -> Result<f64> {
        t.get(level as usize).copied().ok_or_else(|| Error::Domain {
            point: vec![p.delta * level as f64],
            reason: format!(
                "the coupled queue left the box of h (order-{a} difference needs level <= {})",
                top - a as i64
            ),
        })
    };
    let runs = (0..reps)
        .into_par_iter()
        .map(|r| {
            let mut rng = replication_rng(seed, r, 0);
            let (v, tau, ext) = integrate_to_coupling(p, k, horizon, &mut rng, |x| lookup(&main, order, x))?;
            match &tail {
                None => Ok((v, tau, ext)),
                Some(t) => {
                    let mut rng = replication_rng(seed, r, 0);
                    let (w, _, ext0) = integrate_to_coupling(p, 0, horizon, &mut rng, |x| lookup(t, order - 1, x))?;
                    Ok((v + w, tau, ext + ext0))
                }
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let values: Vec<f64> = runs.iter().map(|r| r.0).collect();
    let taus: Vec<f64> = runs.iter().map(|r| r.1).collect();
    let (mean, stderr) = mean_stderr(&values);
    let (tm, ts) = mean_stderr(&taus);
    Ok(CouplingEstimate {
        mean,
        stderr,
        replications: reps,
        extensions: runs.iter().map(|r| r.2).sum(),
        coupling_time: Some(TimeStats { mean: tm, stderr: ts }),
    })
}

/// Settings of the reflected Brownian motion demonstration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MisalignmentConfig {
    pub eps: f64,
    /// `Y⁽⁰⁾(0)`; must exceed `eps`.
    pub x0: f64,
    /// Euler step; `eps²/100` by default.
    pub dt: f64,
    pub reps: u64,
    pub seed: u64,
    /// Simulated time per attempt before the replication is redrawn.
    pub horizon: f64,
}

impl MisalignmentConfig {
    /// `dt = ε²/100` and a horizon of 100 expected drift times to `ε/4`.
    pub fn new(p: &Mm1Params, eps: f64, x0: f64, reps: u64, seed: u64) -> Self {
        let drift = p.delta * (p.mu - p.lambda);
        Self {
            eps,
            x0,
            dt: eps * eps / 100.0,
            reps,
            seed,
            horizon: 100.0 * (x0 + eps) / drift.max(f64::MIN_POSITIVE),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MisalignmentReport {
    pub config: MisalignmentConfig,
    /// `3√dt·δ√(λ+μ)`.
    pub slack: f64,
    /// Fraction of replications with `D₃ ≤ −ε/4 + slack` on all of `[γ₁, γ₂]`.
    pub fraction_ok: f64,
    pub window_mean: f64,
    pub window_stderr: f64,
    /// `ε/(2δ(μ−λ))`.
    pub window_expected: f64,
    pub window_z: f64,
    /// Largest `|R⁽⁰⁾(γ₁) − ε/4|` over replications.
    pub r0_gamma1_error: f64,
    /// Largest `|R⁽⁰⁾(γ₂) − 3ε/4|`.
    pub r0_gamma2_error: f64,
    /// Largest `|D₃(t) + R⁽⁰⁾(t)|` on the windows.
    pub d3_identity_error: f64,
    /// Replications redrawn because the window was not seen within the horizon.
    pub resampled: u64,
}

struct Window {
    length: f64,
    ok: bool,
    r0_g1: f64,
    r0_g2: f64,
    identity: f64,
}

fn misalignment_path(p: &Mm1Params, c: &MisalignmentConfig, slack: f64, rng: &mut impl Rng) -> Option<Window> {
    let drift = p.delta * (p.lambda - p.mu) * c.dt;
    let vol = p.delta * (p.lambda + p.mu).sqrt() * c.dt.sqrt();
    let steps = (c.horizon / c.dt).ceil() as u64;
    let (hi, lo) = (0.75 * c.eps, 0.25 * c.eps);
    // Free path Z and its running minimum; R⁽ⁱ⁾ = max(0, −min(Y⁽ⁱ⁾(0) + Z)).
    let mut z = 0.0f64;
    let mut zmin = 0.0f64;
    let mut g1: Option<u64> = None;
    let mut w = Window {
        length: 0.0,
        ok: true,
        r0_g1: 0.0,
        r0_g2: 0.0,
        identity: 0.0,
    };
    for n in 1..=steps {
        let xi: f64 = rng.sample(StandardNormal);
        z += drift + vol * xi;
        zmin = zmin.min(z);
        let y = |i: f64| {
            let start = c.x0 + i * c.eps;
            let r = (-(start + zmin)).max(0.0);
            (start + z + r, r)
        };
        let (y0, r0) = y(0.0);
        let (y1, _) = y(1.0);
        if g1.is_none() && y1 <= hi {
            g1 = Some(n);
            w.r0_g1 = (r0 - 0.25 * c.eps).abs();
        }
        if let Some(start) = g1 {
            let d3 = y(3.0).0 - 3.0 * y(2.0).0 + 3.0 * y1 - y0;
            w.ok &= d3 <= -0.25 * c.eps + slack;
            w.identity = w.identity.max((d3 + r0).abs());
            if y1 <= lo {
                w.length = (n - start) as f64 * c.dt;
                w.r0_g2 = (r0 - 0.75 * c.eps).abs();
                return Some(w);
            }
        }
    }
    None
}

/// Simulates four reflected Brownian motions started `ε` apart on one
/// driving path and inspects the window between `Y⁽¹⁾` hitting `3ε/4` and
/// `ε/4`.
pub fn rbm_misalignment_demo(p: &Mm1Params, c: &MisalignmentConfig) -> Result<MisalignmentReport> {
    if !(c.eps > 0.0 && c.x0 > c.eps && c.dt > 0.0 && c.horizon > c.dt && c.reps >= 2) {
        return Err(Error::InvalidArgument(format!(
            "need eps > 0, x0 > eps, 0 < dt < horizon, reps >= 2; got {c:?}"
        )));
    }
    if p.lambda >= p.mu {
        return Err(Error::Stability { rho: p.rho() });
    }
    let slack = 3.0 * c.dt.sqrt() * p.delta * (p.lambda + p.mu).sqrt();
    const MAX_ATTEMPTS: u64 = 1000;
    let runs = (0..c.reps)
        .into_par_iter()
        .map(|r| {
            for attempt in 0..MAX_ATTEMPTS {
                let mut rng = replication_rng(c.seed, r, attempt);
                if let Some(w) = misalignment_path(p, c, slack, &mut rng) {
                    return Ok((w, attempt));
                }
            }
            Err(Error::Solver(format!(
                "replication {r}: window not observed in {MAX_ATTEMPTS} attempts"
            )))
        })
        .collect::<Result<Vec<_>>>()?;
    let lengths: Vec<f64> = runs.iter().map(|r| r.0.length).collect();
    let (window_mean, window_stderr) = mean_stderr(&lengths);
    let window_expected = c.eps / (2.0 * p.delta * (p.mu - p.lambda));
    let fold = |f: fn(&Window) -> f64| runs.iter().map(|r| f(&r.0)).fold(0.0, f64::max);
    Ok(MisalignmentReport {
        config: *c,
        slack,
        fraction_ok: runs.iter().filter(|r| r.0.ok).count() as f64 / c.reps as f64,
        window_mean,
        window_stderr,
        window_expected,
        window_z: (window_mean - window_expected) / window_stderr,
        r0_gamma1_error: fold(|w| w.r0_g1),
        r0_gamma2_error: fold(|w| w.r0_g2),
        d3_identity_error: fold(|w| w.identity),
        resampled: runs.iter().map(|r| r.1).sum(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::LatticeSpec;

    #[test]
    fn service_goes_to_lowest_nonempty_system() {
        let mut c = JointChain::from_levels(vec![0, 0, 1, 2]).unwrap();
        c.apply(4);
        assert_eq!(c.levels(), &[0, 0, 0, 1]);
        c.apply(1);
        assert_eq!(c.levels(), &[1, 1, 1, 2]);
        c.apply(2);
        assert_eq!(c.levels(), &[0, 0, 0, 1]);
        assert!(JointChain::from_levels(vec![0, 2]).is_err());
    }

    #[test]
    fn pure_death_couples_after_k_plus_one_services() {
        let p = Mm1Params::new(0.0, 1.5, 1.0).unwrap();
        for k in [0, 3, 7] {
            let t = simulate_pair(&p, k, 1e9, 11).unwrap();
            let before = t.events.iter().take_while(|e| Some(e.time) != t.coupling_time).count();
            assert_eq!(before + 1, k as usize + 1);
            assert_eq!(t.states.last().unwrap(), &vec![0, 0]);
        }
    }

    #[test]
    fn constant_h_gives_zero() {
        let p = Mm1Params::new(1.0, 2.0, 1.0).unwrap();
        let h = GridFunction::constant(LatticeSpec::line(1.0, 0, 60).unwrap(), 4.0f64);
        for order in 1..=3 {
            let e = estimate_delta(&p, &h, 2, order, 200, 10.0, 1).unwrap();
            assert_eq!((e.mean, e.stderr), (0.0, 0.0));
        }
    }

    #[test]
    fn deterministic_for_a_seed() {
        let p = Mm1Params::new(1.0, 2.0, 1.0).unwrap();
        let a = estimate_coupling_time(&p, 2, 300, 1.0, 9).unwrap();
        let b = estimate_coupling_time(&p, 2, 300, 1.0, 9).unwrap();
        assert_eq!(a, b);
        assert!(a.extensions > 0);
    }
}
