use statrs::distribution::{ChiSquared, ContinuousCDF};
use stein_prelimit::coupling::*;
use stein_prelimit::ctmc::birth_death_poisson;
use stein_prelimit::mm1::Mm1Params;
use stein_prelimit::sampling::sample_dlip_higher;
use stein_prelimit::{Grid, LatticeSpec};

fn params() -> Mm1Params {
    Mm1Params::new(1.0, 2.0, 1.0).unwrap()
}

#[test]
fn holding_times_pass_chi_square() {
    let p = params();
    let bins = 20;
    let n = 20_000;
    for levels in [vec![3, 4], vec![0, 0, 1, 2], vec![0, 0]] {
        let chain = JointChain::from_levels(levels.clone()).unwrap();
        let rate = chain.total_rate(&p);
        let mut rng = replication_rng(5, 0, 0);
        let mut counts = vec![0usize; bins];
        for _ in 0..n {
            let (dt, _) = chain.sample_event(&p, &mut rng).unwrap();
            // Equiprobable bins under Exp(rate).
            let u = 1.0 - (-rate * dt).exp();
            counts[((u * bins as f64) as usize).min(bins - 1)] += 1;
        }
        let e = n as f64 / bins as f64;
        let stat: f64 = counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum();
        let crit = ChiSquared::new((bins - 1) as f64).unwrap().inverse_cdf(0.99);
        assert!(stat < crit, "{levels:?}: {stat} >= {crit}");
    }
}

#[test]
fn dynkin_coupling_times() {
    let p = params();
    for k in [0, 3, 10] {
        let e = estimate_coupling_time(&p, k, 10_000, 50.0, 100 + k as u64).unwrap();
        let exact = (k + 1) as f64 / (p.mu - p.lambda);
        assert!(
            e.z_score(exact).abs() <= 3.0,
            "k={k}: {} ± {} vs {exact}",
            e.mean,
            e.stderr
        );
    }
}

#[test]
fn pair_gap_is_zero_or_one_and_absorbing() {
    let p = params();
    for seed in 0..50 {
        let t = simulate_pair(&p, 2, 30.0, seed).unwrap();
        let gaps: Vec<i64> = t.gaps().into_iter().map(|g| g[0]).collect();
        assert!(gaps.iter().all(|&g| g == 0 || g == 1));
        if let Some(first) = gaps.iter().position(|&g| g == 0) {
            assert!(gaps[first..].iter().all(|&g| g == 0));
            assert_eq!(t.states[first][1], 0);
            assert_eq!(t.coupling_time, Some(t.events[first - 1].time));
        }
    }
}

#[test]
fn quadruple_structure() {
    let p = params();
    for seed in 0..50 {
        let t = simulate_quadruple(&p, 4, 40.0, seed).unwrap();
        assert_eq!(t.states[0], vec![4, 5, 6, 7]);
        let gaps = t.gaps();
        for w in gaps.windows(2) {
            for (a, b) in w[0].iter().zip(&w[1]) {
                assert!(*a == 0 || *a == 1);
                assert!(b <= a);
            }
        }
        for (e, before) in t.events.iter().zip(&t.states) {
            // Row 5: only system 3 is served.
            if e.kind == 5 {
                assert!(before[2] == 0 && before[3] > 0, "{before:?}");
            }
            if e.kind == 2 {
                assert!(before[0] > 0);
            }
        }
    }
}

#[test]
fn identity_first_difference_is_one() {
    let p = params();
    let h = Grid::from_fn(LatticeSpec::line(1.0, 0, 80).unwrap(), |k| k[0] as f64).unwrap();
    let e = estimate_delta(&p, &h, 0, 1, 10_000, 50.0, 3).unwrap();
    assert!(e.z_score(1.0).abs() <= 3.0, "{e:?}");
}

#[test]
fn estimates_match_exact_solver() {
    let p = params();
    let spec = LatticeSpec::line(1.0, 0, 80).unwrap();
    let h = sample_dlip_higher(&spec, 3, 12).unwrap();
    let exact = birth_death_poisson(p.lambda, p.mu, p.delta, &h).unwrap();
    for order in 1..=3u32 {
        for k in [0, 5] {
            let e = estimate_delta(&p, &h, k, order, 10_000, 50.0, 40 + order as u64 * 10 + k as u64).unwrap();
            let want = exact.difference(order as usize, k).unwrap();
            assert!(
                e.z_score(want).abs() <= 3.0,
                "order {order}, k {k}: {} ± {} vs {want}",
                e.mean,
                e.stderr
            );
        }
    }
}

#[test]
fn leaving_the_box_is_an_error() {
    let p = params();
    let h = Grid::from_fn(LatticeSpec::line(1.0, 0, 3).unwrap(), |k| k[0] as f64).unwrap();
    assert!(estimate_delta(&p, &h, 1, 3, 200, 10.0, 1).is_err());
}

#[test]
fn misalignment_window() {
    let p = params();
    let c = MisalignmentConfig::new(&p, 0.1, 0.2, 1000, 8);
    let r = rbm_misalignment_demo(&p, &c).unwrap();
    assert!(r.fraction_ok >= 0.99, "{r:?}");
    assert!(r.window_z.abs() <= 3.0, "{r:?}");
    // Each error is one step's overshoot past a level. The slack is 3σ of a
    // step; a maximum over ~10⁶ steps stays under 6σ.
    let step = 2.0 * r.slack;
    assert!(r.r0_gamma1_error <= step && r.r0_gamma2_error <= step, "{r:?}");
    assert!(r.d3_identity_error <= step, "{r:?}");
}
