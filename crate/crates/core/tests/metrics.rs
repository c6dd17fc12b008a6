use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stein_prelimit::metrics::{wasserstein1, DistributionHandle};
use stein_prelimit::quadrature::exponential_expectation;

fn normalized(w: Vec<f64>) -> Vec<f64> {
    let s: f64 = w.iter().sum();
    w.into_iter().map(|x| x / s).collect()
}

fn law() -> impl Strategy<Value = DistributionHandle> {
    prop_oneof![
        (
            prop::collection::vec(0.01f64..1.0, 1..12),
            -3i64..3,
            prop_oneof![Just(0.5), Just(0.25)]
        )
            .prop_map(|(w, lo, d)| DistributionHandle::lattice(d, lo, normalized(w)).unwrap()),
        (0.1f64..3.0).prop_map(|m| DistributionHandle::exponential(m).unwrap()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn symmetric_and_triangle(u in law(), v in law(), w in law()) {
        let uv = wasserstein1(&u, &v, 1e-9).unwrap();
        let vu = wasserstein1(&v, &u, 1e-9).unwrap();
        prop_assert!((uv - vu).abs() <= 1e-9);
        let uw = wasserstein1(&u, &w, 1e-9).unwrap();
        let wv = wasserstein1(&w, &v, 1e-9).unwrap();
        prop_assert!(uv <= uw + wv + 1e-9);
    }
}

/// 1-Lipschitz piecewise-linear function with random slopes in [−1, 1].
fn random_lipschitz(rng: &mut ChaCha8Rng) -> impl Fn(f64) -> f64 {
    let knots: Vec<f64> = {
        let mut k: Vec<f64> = (0..8).map(|_| rng.random_range(-2.0..12.0)).collect();
        k.sort_by(f64::total_cmp);
        k
    };
    let slopes: Vec<f64> = (0..=8).map(|_| rng.random_range(-1.0..=1.0)).collect();
    move |x: f64| {
        let mut v = slopes[0] * (x - knots[0]).min(0.0);
        for (i, k) in knots.iter().enumerate() {
            let next = knots.get(i + 1).copied().unwrap_or(f64::INFINITY);
            v += slopes[i + 1] * (x.min(next) - k).max(0.0);
        }
        v
    }
}

#[test]
fn sampled_dual_never_exceeds_w1() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let u = DistributionHandle::geometric(0.6, 0.5).unwrap();
    let v = DistributionHandle::exponential(1.1).unwrap();
    let lattice_v = DistributionHandle::lattice(0.5, 0, normalized(vec![0.1, 0.4, 0.2, 0.3])).unwrap();
    let w_exp = wasserstein1(&u, &v, 1e-10).unwrap();
    let w_lat = wasserstein1(&u, &lattice_v, 1e-10).unwrap();
    let expect_lattice = |d: &DistributionHandle, g: &dyn Fn(f64) -> f64| match d {
        DistributionHandle::Lattice { delta, lower, pmf } => pmf
            .iter()
            .enumerate()
            .map(|(i, p)| p * g(delta * (lower + i as i64) as f64))
            .sum::<f64>(),
        _ => unreachable!(),
    };
    let mut best = 0.0f64;
    for i in 0..500 {
        let g = random_lipschitz(&mut rng);
        let eu = expect_lattice(&u, &g);
        let el = expect_lattice(&lattice_v, &g);
        assert!((eu - el).abs() <= w_lat + 1e-6);
        if i < 50 {
            let ev = exponential_expectation(1.1, 0.5, 1e-10, |y| Ok(g(y))).unwrap();
            assert!((eu - ev).abs() <= w_exp + 1e-6);
            best = best.max((eu - ev).abs());
        }
    }
    assert!(best > 0.0);
}

#[test]
fn ordered_laws_give_mean_gap() {
    // A point mass at 0 is stochastically below everything non-negative.
    let z = DistributionHandle::lattice(1.0, 0, vec![1.0]).unwrap();
    let g = DistributionHandle::geometric(0.3, 0.5).unwrap();
    let w = wasserstein1(&z, &g, 1e-12).unwrap();
    assert!((w - g.mean()).abs() < 1e-14);
}

#[test]
fn impossible_tolerance_is_reported() {
    let g = DistributionHandle::geometric(0.3, 0.5).unwrap();
    let e = DistributionHandle::exponential(0.4).unwrap();
    assert!(wasserstein1(&g, &e, 0.0).is_err());
}
