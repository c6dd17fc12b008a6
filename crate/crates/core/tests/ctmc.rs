use stein_prelimit::ctmc::{
    birth_death_poisson, poisson_via_integral, solve_poisson, stationary, truncation_level, Jump, KernelConfig,
    PoissonSolver, RateExpr, RateKernel,
};
use stein_prelimit::sampling::sample_dlip;
use stein_prelimit::{Error, Grid, LatticeSpec, MultiIndex};

const LAMBDA: f64 = 1.0;
const MU: f64 = 2.0;
const DELTA: f64 = 0.5;

fn mm1_box() -> (RateKernel, LatticeSpec) {
    let n = truncation_level(LAMBDA / MU, 1e-14).unwrap();
    let k = RateKernel::mm1(LAMBDA, MU, DELTA, n).unwrap();
    let spec = k.spec().clone();
    (k, spec)
}

#[test]
fn truncation_level_for_half() {
    assert_eq!(truncation_level(0.5, 1e-14).unwrap(), 46);
    assert!(truncation_level(1.0, 1e-14).is_err());
}

#[test]
fn stationary_matches_truncated_geometric() {
    let (k, spec) = mm1_box();
    let pi = stationary(&k).unwrap();
    let rho = LAMBDA / MU;
    let n = spec.upper()[0];
    let z = (1.0 - rho.powi(n as i32 + 1)) / (1.0 - rho);
    for j in 0..=n {
        assert!((pi.prob(&[j]).unwrap() - rho.powi(j as i32) / z).abs() < 1e-15);
    }
}

#[test]
fn direct_and_closed_form_agree_on_random_dlip() {
    let (kernel, spec) = mm1_box();
    let solver = PoissonSolver::new(&kernel).unwrap();
    let n = spec.upper()[0];
    for seed in 0..50 {
        let h = sample_dlip(&spec, seed);
        let direct = solver.solve(&h).unwrap();
        let closed = birth_death_poisson(LAMBDA, MU, DELTA, &h).unwrap();
        assert!((direct.mean() - closed.mean()).abs() < 1e-12);
        for a in 1..=3usize {
            for k in 0..=(n - a as i64) {
                let d = direct.difference(a, k).unwrap();
                let c = closed.difference(a, k).unwrap();
                assert!((d - c).abs() <= 1e-9, "seed {seed}, order {a}, k {k}: {d} vs {c}");
            }
        }
        assert!(direct.residual(&kernel, &h).unwrap() <= 1e-10);
        assert!(closed.residual(&kernel, &h).unwrap() <= 1e-10);
    }
}

#[test]
fn identity_has_unit_first_difference() {
    let spec = LatticeSpec::line(1.0, 0, 60).unwrap();
    let h = Grid::from_fn(spec, |k| k[0] as f64).unwrap();
    let f = birth_death_poisson(1.0, 2.0, 1.0, &h).unwrap();
    assert!((f.difference(1, 0).unwrap() - 1.0).abs() < 1e-12);
    // Constant h gives f ≡ 0.
    let c = Grid::constant(LatticeSpec::line(1.0, 0, 60).unwrap(), 2.5f64);
    assert!(birth_death_poisson(1.0, 2.0, 1.0, &c)
        .unwrap()
        .values()
        .iter()
        .all(|v| v.abs() < 1e-12));
}

#[test]
fn integral_solver_agrees_with_closed_form() {
    let (kernel, spec) = mm1_box();
    let n = spec.upper()[0];
    for seed in 0..5 {
        let h = sample_dlip(&spec, 500 + seed);
        let closed = birth_death_poisson(LAMBDA, MU, DELTA, &h).unwrap();
        let integ = poisson_via_integral(&kernel, &h, 400.0, 12).unwrap();
        assert!(integ.warning().is_none(), "{:?}", integ.warning());
        for a in 1..=3usize {
            for k in 0..=(n - a as i64) {
                let d = integ.difference(a, k).unwrap() - closed.difference(a, k).unwrap();
                assert!(d.abs() <= 1e-6, "seed {seed}, order {a}, k {k}: {d:e}");
            }
        }
    }
}

/// Two independent M/M/1-like queues with state-dependent service.
fn product_kernel() -> RateKernel {
    let cfg = KernelConfig {
        delta: 0.5,
        lower: vec![0, 0],
        upper: vec![7, 6],
        jumps: vec![
            Jump {
                offset: vec![1, 0],
                rate: RateExpr::Constant { c: 0.8 },
            },
            Jump {
                offset: vec![-1, 0],
                rate: RateExpr::Affine {
                    c0: 0.5,
                    c: vec![0.3, 0.0],
                },
            },
            Jump {
                offset: vec![0, 1],
                rate: RateExpr::Affine {
                    c0: 0.6,
                    c: vec![0.0, 0.05],
                },
            },
            Jump {
                offset: vec![0, -1],
                rate: RateExpr::Gated {
                    c: 1.5,
                    axis: 1,
                    min: Some(1),
                    max: None,
                },
            },
        ],
    };
    RateKernel::from_config(cfg).unwrap()
}

#[test]
fn two_dimensional_solvers_agree() {
    let kernel = product_kernel();
    assert!(!kernel.dropped().is_empty());
    let spec = kernel.spec().clone();
    let h = Grid::from_fn(spec.clone(), |k| (0.5 * k[0] as f64 - 0.25 * k[1] as f64).abs()).unwrap();
    let direct = solve_poisson(&kernel, &h).unwrap();
    assert!(direct.residual(&kernel, &h).unwrap() <= 1e-10);
    let integ = poisson_via_integral(&kernel, &h, 300.0, 14).unwrap();
    let worst = direct
        .values()
        .iter()
        .zip(integ.values())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(worst <= 1e-6, "{worst:e}");
    // Mixed differences agree as well.
    let dg = direct.grid();
    let ig = integ.grid();
    let a = MultiIndex::new(vec![1, 1]);
    for k in spec.points().filter(|k| k[0] < 7 && k[1] < 6) {
        let d = dg.forward_difference(&a, &k).unwrap() - ig.forward_difference(&a, &k).unwrap();
        assert!(d.abs() <= 1e-6);
    }
}

#[test]
fn stationary_balance_on_product_kernel() {
    let kernel = product_kernel();
    let pi = stationary(&kernel).unwrap();
    assert!((pi.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert!(pi.balance_residual(&kernel.sparse()) < 1e-12);
    // The axes decouple, so π is a product of the marginal birth-death laws.
    let marginal = |up: &dyn Fn(i64) -> f64, down: &dyn Fn(i64) -> f64, n: i64| {
        let mut p = vec![1.0];
        for k in 0..n {
            p.push(p[k as usize] * up(k) / down(k + 1));
        }
        let s: f64 = p.iter().sum();
        p.into_iter().map(|x| x / s).collect::<Vec<_>>()
    };
    let px = marginal(&|_| 0.8, &|k| 0.5 + 0.3 * k as f64, 7);
    let py = marginal(&|k| 0.6 + 0.05 * k as f64, &|_| 1.5, 6);
    for k in kernel.spec().points() {
        let want = px[k[0] as usize] * py[k[1] as usize];
        assert!((pi.prob(&k).unwrap() - want).abs() < 1e-12);
    }
}

#[test]
fn reducible_chain_is_rejected() {
    let spec = LatticeSpec::line(1.0, 0, 5).unwrap();
    let k = RateKernel::new(
        spec.clone(),
        vec![Jump {
            offset: vec![1],
            rate: RateExpr::Constant { c: 1.0 },
        }],
    )
    .unwrap();
    assert!(matches!(stationary(&k), Err(Error::Singular(_))));
    let h = Grid::constant(spec, 1.0f64);
    assert!(solve_poisson(&k, &h).is_err());
}

#[test]
fn kernel_config_round_trip() {
    let k = product_kernel();
    let s = serde_json::to_string(&k.to_config()).unwrap();
    assert!(s.contains("\"kind\":\"affine\""));
    let back: KernelConfig = serde_json::from_str(&s).unwrap();
    assert_eq!(back, k.to_config());
}

#[test]
fn unstable_closed_form_is_rejected() {
    let h = Grid::constant(LatticeSpec::line(1.0, 0, 10).unwrap(), 0.0f64);
    assert!(matches!(
        birth_death_poisson(2.0, 2.0, 1.0, &h),
        Err(Error::Stability { .. })
    ));
}
