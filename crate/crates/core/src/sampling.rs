//! Seeded samplers for discrete test-function classes.
//!
//! * `dLip(1)`: `|Δ_j h(δk)| ≤ δ` for every axis `j`.
//! * higher-order class of order `a` (one dimension): `|Δᵛh(δk)| ≤ δᵛ`, `1 ≤ v ≤ a`.
//! * `M_disc(C)`: `|Δᵃh(δk)| ≤ C δ^{‖a‖₁}` for `1 ≤ ‖a‖₁ ≤ 3`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::lattice::{GridFunction, LatticeSpec, MultiIndex};

const MAX_ATTEMPTS: usize = 100;
/// Rescaling target, a hair inside the bound so rounding cannot push a
/// difference over it.
const SHRINK: f64 = 1.0 - 1e-12;

/// Random member of `dLip(1)` built from additive per-axis profiles with
/// increments uniform on `[-δ, δ]`.
pub fn sample_dlip(spec: &LatticeSpec, seed: u64) -> GridFunction {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let delta = spec.delta();
    let profiles: Vec<Vec<f64>> = spec
        .shape()
        .iter()
        .map(|&n| {
            let mut acc = 0.0;
            let mut p = Vec::with_capacity(n);
            p.push(acc);
            for _ in 1..n {
                acc += rng.random_range(-delta..=delta);
                p.push(acc);
            }
            p
        })
        .collect();
    additive(spec, &profiles)
}

/// Random one-dimensional `h` with `|Δᵛh| ≤ δᵛ` for `v = 1..=max_order`.
///
/// Third differences are drawn uniform on `[-δ³/4, δ³/4]` and summed up three
/// times from zero; the result is shrunk until every lower-order bound holds.
pub fn sample_dlip_higher(spec: &LatticeSpec, max_order: usize, seed: u64) -> Result<GridFunction> {
    if spec.dim() != 1 {
        return Err(Error::InvalidArgument(format!(
            "higher-order sampler is one-dimensional, got dimension {}",
            spec.dim()
        )));
    }
    if !(1..=3).contains(&max_order) {
        return Err(Error::InvalidArgument(format!(
            "max_order must be in 1..=3, got {max_order}"
        )));
    }
    let n = spec.len();
    let delta = spec.delta();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..MAX_ATTEMPTS {
        let profile = smooth_profile(n, delta, max_order, &mut rng);
        let h = GridFunction::from_values(spec.clone(), profile)?;
        if is_dlip_higher(&h, max_order, 0.0)? {
            return Ok(h);
        }
    }
    Err(Error::Sampling {
        seed,
        attempts: MAX_ATTEMPTS,
    })
}

/// Random member of `M_disc(c)` in any dimension (additive profiles, so mixed
/// differences vanish and pure ones inherit the one-dimensional bounds).
pub fn sample_mdisc(spec: &LatticeSpec, c: f64, seed: u64) -> Result<GridFunction> {
    if !(c > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "class constant must be positive, got {c}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let delta = spec.delta();
    let profiles: Vec<Vec<f64>> = spec
        .shape()
        .iter()
        .map(|&n| {
            smooth_profile(n, delta, 3, &mut rng)
                .into_iter()
                .map(|v| c * v)
                .collect()
        })
        .collect();
    Ok(additive(spec, &profiles))
}

/// Whether `h ∈ dLip(1)` up to `slack` (exhaustive scan).
pub fn is_dlip(h: &GridFunction, slack: f64) -> Result<bool> {
    let d = h.spec().dim();
    let bound = h.spec().delta() + slack;
    for axis in 0..d {
        if h.max_abs_difference(&MultiIndex::axis(d, axis, 1))? > bound {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Whether `|Δᵛh| ≤ δᵛ + slack` for `v = 1..=max_order` (one dimension).
pub fn is_dlip_higher(h: &GridFunction, max_order: usize, slack: f64) -> Result<bool> {
    let delta = h.spec().delta();
    for v in 1..=max_order {
        let m = h.max_abs_difference(&MultiIndex::new(vec![v]))?;
        if m > delta.powi(v as i32) + slack {
            return Ok(false);
        }
    }
    Ok(true)
}

fn smooth_profile(n: usize, delta: f64, max_order: usize, rng: &mut impl Rng) -> Vec<f64> {
    let b3 = delta.powi(3) / 4.0;
    let d3: Vec<f64> = (0..n).map(|_| rng.random_range(-b3..=b3)).collect();
    let d2 = cumulative(&d3);
    let d1 = cumulative(&d2);
    let mut h = cumulative(&d1);
    let mut scale = 1.0f64;
    for v in 1..=max_order.min(2) {
        let m = max_abs_diff(&h, v);
        let bound = delta.powi(v as i32);
        if m > bound {
            scale = scale.min(bound / m * SHRINK);
        }
    }
    if scale < 1.0 {
        h.iter_mut().for_each(|x| *x *= scale);
    }
    h
}

/// `out[0] = 0`, `out[i+1] = out[i] + incr[i]`.
fn cumulative(incr: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(incr.len());
    let mut acc = 0.0;
    for x in incr {
        out.push(acc);
        acc += x;
    }
    out
}

fn max_abs_diff(h: &[f64], order: usize) -> f64 {
    let mut d = h.to_vec();
    for _ in 0..order {
        d = d.windows(2).map(|w| w[1] - w[0]).collect();
    }
    d.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn additive(spec: &LatticeSpec, profiles: &[Vec<f64>]) -> GridFunction {
    let lower = spec.lower().to_vec();
    GridFunction::from_fn(spec.clone(), |k| {
        k.iter()
            .enumerate()
            .map(|(j, &c)| profiles[j][(c - lower[j]) as usize])
            .sum()
    })
    .expect("additive profile values are finite")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dlip_members_and_determinism() {
        let spec = LatticeSpec::new(0.1, vec![0, -3], vec![12, 7]).unwrap();
        for seed in 0..20 {
            let h = sample_dlip(&spec, seed);
            assert!(is_dlip(&h, 0.0).unwrap());
            assert_eq!(h, sample_dlip(&spec, seed));
        }
        assert_ne!(sample_dlip(&spec, 1), sample_dlip(&spec, 2));
    }

    #[test]
    fn linear_function_is_boundary_member() {
        let spec = LatticeSpec::line(0.5, 0, 20).unwrap();
        let h = GridFunction::from_fn(spec, |k| 0.5 * k[0] as f64).unwrap();
        assert!(is_dlip(&h, 1e-15).unwrap());
        for order in 1..=3 {
            assert!(is_dlip_higher(&h, order, 1e-15).unwrap());
        }
    }

    #[test]
    fn higher_order_members() {
        for &delta in &[1.0, 0.2, 0.01] {
            let spec = LatticeSpec::line(delta, 0, 300).unwrap();
            for order in 1..=3 {
                for seed in 0..10 {
                    let h = sample_dlip_higher(&spec, order, seed).unwrap();
                    assert!(is_dlip_higher(&h, order, 0.0).unwrap());
                }
            }
        }
    }

    #[test]
    fn higher_order_sampler_rejects_bad_input() {
        let spec2 = LatticeSpec::new(1.0, vec![0, 0], vec![3, 3]).unwrap();
        assert!(sample_dlip_higher(&spec2, 2, 0).is_err());
        let spec = LatticeSpec::line(1.0, 0, 10).unwrap();
        assert!(sample_dlip_higher(&spec, 0, 0).is_err());
        assert!(sample_dlip_higher(&spec, 4, 0).is_err());
    }

    #[test]
    fn sine_restriction_is_member() {
        // |Δᵛ sin(δk)| ≤ δᵛ sup|sin⁽ᵛ⁾| = δᵛ.
        let delta = 0.05;
        let spec = LatticeSpec::line(delta, -200, 200).unwrap();
        let h = GridFunction::from_fn(spec, |k| (delta * k[0] as f64).sin()).unwrap();
        assert!(is_dlip_higher(&h, 3, 1e-15).unwrap());
    }

    #[test]
    fn mdisc_bounds_in_two_dimensions() {
        let spec = LatticeSpec::new(0.25, vec![0, 0], vec![15, 15]).unwrap();
        let c = 2.5;
        let h = sample_mdisc(&spec, c, 9).unwrap();
        for a in [[1, 0], [0, 1], [2, 0], [1, 1], [0, 2], [3, 0], [2, 1], [1, 2], [0, 3]] {
            let order = a[0] + a[1];
            let m = h.max_abs_difference(&MultiIndex::new(a.to_vec())).unwrap();
            assert!(m <= c * 0.25f64.powi(order as i32) + 1e-15, "a = {a:?}: {m}");
        }
    }
}
