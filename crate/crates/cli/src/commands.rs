use std::path::PathBuf;

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use stein_prelimit::coupling::{estimate_coupling_time, estimate_delta, rbm_misalignment_demo, MisalignmentConfig};
use stein_prelimit::ctmc::{birth_death_poisson, poisson_via_integral, solve_poisson, Jump, RateExpr, RateKernel};
use stein_prelimit::interchange::{Interchange, Mm1Boundary};
use stein_prelimit::mm1::{convergence_sweep, stein_factor_report, third_order_identity_residual, Mm1Params};
use stein_prelimit::sampling::sample_dlip_higher;
use stein_prelimit::weights::weight;
use stein_prelimit::{Grid, Interp, LatticeSpec, MultiIndex};

use crate::io::{report, require, resolve, to_json, usage, verdict, Check, Outcome};

/// Serialized report plus the overall verdict.
pub struct Rendered {
    pub body: String,
    pub verdict: Outcome<()>,
}

fn render<C: Serialize, R: Serialize>(command: &str, config: &C, result: R, checks: Vec<Check>) -> Rendered {
    let v = verdict(&checks);
    let mut body = to_json(&report(command, config, result, checks));
    body.push('\n');
    Rendered { body, verdict: v }
}

fn params(lambda: Option<f64>, mu: Option<f64>, delta: Option<f64>, defaults: (f64, f64, f64)) -> Outcome<Mm1Params> {
    Ok(Mm1Params::new(
        lambda.unwrap_or(defaults.0),
        mu.unwrap_or(defaults.1),
        delta.unwrap_or(defaults.2),
    )?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Demo {
    /// `x³` on the lattice.
    Cubic,
    /// The constant 2.5.
    Const,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TestFn {
    Const,
    Identity,
    /// Random function with `|Δᵃh| ≤ δ` for `a ≤ 3`; needs `--seed`.
    Sampled,
}

fn test_function(choice: TestFn, spec: &LatticeSpec, seed: Option<u64>) -> Outcome<Grid> {
    let delta = spec.delta();
    Ok(match choice {
        TestFn::Const => Grid::constant(spec.clone(), 1.0),
        TestFn::Identity => Grid::from_fn(spec.clone(), |k| delta * k[0] as f64)?,
        TestFn::Sampled => sample_dlip_higher(spec, 3, require(seed, "seed")?)?,
    })
}

// ---------------------------------------------------------------- interp

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct InterpArgs {
    /// Built-in grid on [0, 10] with δ = --delta.
    #[arg(long, value_enum)]
    pub demo: Option<Demo>,
    /// Grid function as JSON ({dim, delta, lower, upper, values}).
    #[arg(long, conflicts_with = "demo")]
    pub fixture: Option<PathBuf>,
    /// Lattice spacing of the demo grid (default 0.25).
    #[arg(long)]
    pub delta: Option<f64>,
    /// Evaluation point, comma separated in d > 1.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub x: Option<Vec<f64>>,
    /// Derivative order per axis (default 0).
    #[arg(long, value_delimiter = ',')]
    pub deriv: Option<Vec<usize>>,
}

pub fn interp(flags: InterpArgs, file: Option<&Value>) -> Outcome<Rendered> {
    let mut c = resolve(flags, file)?;
    let grid = match (&c.fixture, c.demo) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
            serde_json::from_str::<Grid>(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?
        }
        (None, Some(demo)) => {
            let delta = *c.delta.get_or_insert(0.25);
            let n = (10.0 / delta).round() as i64;
            let spec = LatticeSpec::line(delta, 0, n)?;
            match demo {
                Demo::Cubic => Grid::from_fn(spec, |k| (delta * k[0] as f64).powi(3))?,
                Demo::Const => Grid::constant(spec, 2.5),
            }
        }
        (None, None) => return Err(usage("one of --demo or --fixture is required")),
    };
    let itp = Interp::new(grid);
    let d = itp.dim();
    let x = require(c.x.clone(), "x")?;
    if x.len() != d {
        return Err(usage(format!("--x has {} coordinates, the grid has {d}", x.len())));
    }
    let order = c.deriv.get_or_insert_with(|| vec![0; d]).clone();
    if order.len() != d {
        return Err(usage(format!("--deriv has {} entries, the grid has {d}", order.len())));
    }
    let value = itp.evaluate(&x)?;
    let derivative = itp.derivative(&x, &MultiIndex::new(order.clone()))?;

    let (lo, hi) = itp.anchor_range();
    let knot_error = itp
        .spec()
        .points()
        .filter(|k| k.iter().zip(&lo).zip(&hi).all(|((k, l), h)| k >= l && *k <= h + 1))
        .map(|k| {
            let at: Vec<f64> = k.iter().map(|&i| itp.spec().delta() * i as f64).collect();
            let want = *itp.grid().get(&k).unwrap();
            (itp.evaluate(&at).unwrap() - want).abs() / want.abs().max(1.0)
        })
        .fold(0.0, f64::max);
    let (_, ts) = itp.locate(&x)?;
    let unity = ts
        .iter()
        .map(|&t| ((0..5).map(|i| weight(i, t.clamp(0.0, 1.0)).unwrap()).sum::<f64>() - 1.0).abs())
        .fold(0.0, f64::max);
    let mut checks = vec![
        Check::at_most("knot interpolation (relative)", knot_error, 1e-12),
        Check::at_most("partition of unity", unity, 1e-12),
    ];
    if c.demo == Some(Demo::Cubic) && c.fixture.is_none() {
        let want = match order[0] {
            0 => x[0].powi(3),
            1 => 3.0 * x[0] * x[0],
            2 => 6.0 * x[0],
            3 => 6.0,
            _ => f64::NAN,
        };
        if want.is_finite() {
            let rel = (derivative - want).abs() / want.abs().max(1.0);
            checks.push(Check::at_most("cubic reproduction", rel, 1e-9));
        }
    }
    let result = json!({ "value": value, "derivative": derivative, "order": order });
    Ok(render("interp", &c, result, checks))
}

// ---------------------------------------------------------------- convergence

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct ConvergenceArgs {
    /// Traffic intensities, each in (0, 1); δ = 1 − ρ.
    #[arg(long, value_delimiter = ',')]
    pub rhos: Option<Vec<f64>>,
    /// Service rate (default 1).
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

pub fn convergence(flags: ConvergenceArgs, file: Option<&Value>) -> Outcome<Rendered> {
    let mut c = resolve(flags, file)?;
    let rhos = c.rhos.get_or_insert_with(|| vec![0.5, 0.8, 0.9, 0.95, 0.99]).clone();
    if rhos.is_empty() {
        return Err(usage("--rhos is empty"));
    }
    let mu = *c.mu.get_or_insert(1.0);
    let format = *c.format.get_or_insert(Format::Csv);
    let s = convergence_sweep(&rhos, mu)?;
    let excess = s
        .rows
        .iter()
        .map(|r| r.gap / (s.fitted_c * r.bound_rhs) - 1.0)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut checks = vec![Check::at_most("gap above fitted bound (relative)", excess, 1e-12)];
    if s.rows.len() >= 2 {
        checks.push(Check::at_least("log-log slope lower", s.slope, 0.8));
        checks.push(Check::at_most("log-log slope upper", s.slope, 1.2));
    }
    Ok(match format {
        Format::Json => render("convergence", &c, &s, checks),
        Format::Csv => {
            let head = format!(
                "# stein-prelimit {}\n# config {}\n",
                stein_prelimit::VERSION,
                to_json(&c)
            );
            Rendered {
                body: head + &s.to_csv(),
                verdict: verdict(&checks),
            }
        }
    })
}

// ---------------------------------------------------------------- couple

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct CoupleArgs {
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    /// Lower start level; the other system starts one step above.
    #[arg(long)]
    pub k: Option<i64>,
    /// 0 estimates the coupling time, 1..=3 estimates Δᵃf_h(δk).
    #[arg(long)]
    pub order: Option<u32>,
    #[arg(long)]
    pub reps: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Simulated time per chunk before a replication is extended.
    #[arg(long)]
    pub horizon: Option<f64>,
    /// Test function for order ≥ 1 (default identity).
    #[arg(long, value_enum)]
    pub h: Option<TestFn>,
}

pub fn couple(flags: CoupleArgs, file: Option<&Value>) -> Outcome<Rendered> {
    let mut c = resolve(flags, file)?;
    let seed = require(c.seed, "seed")?;
    let p = params(c.lambda, c.mu, c.delta, (1.0, 2.0, 1.0))?;
    (c.lambda, c.mu, c.delta) = (Some(p.lambda), Some(p.mu), Some(p.delta));
    let k = *c.k.get_or_insert(0);
    let order = *c.order.get_or_insert(0);
    let reps = *c.reps.get_or_insert(10_000);
    let horizon = *c.horizon.get_or_insert(50.0);
    if k < 0 || order > 3 {
        return Err(usage("need --k >= 0 and --order in 0..=3"));
    }
    let (est, exact) = if order == 0 {
        c.h = None;
        let e = estimate_coupling_time(&p, k, reps, horizon, seed)?;
        (e, (k + 1) as f64 / (p.mu - p.lambda))
    } else {
        let choice = *c.h.get_or_insert(TestFn::Identity);
        let n = 2 * p.truncation() + k + 80;
        let spec = LatticeSpec::line(p.delta, 0, n)?;
        let h = test_function(choice, &spec, Some(seed))?;
        let exact = birth_death_poisson(p.lambda, p.mu, p.delta, &h)?.difference(order as usize, k)?;
        (estimate_delta(&p, &h, k, order, reps, horizon, seed)?, exact)
    };
    let z = est.z_score(exact);
    let result = json!({
        "estimate": est.mean,
        "stderr": est.stderr,
        "exact": exact,
        "z_score": if z.is_finite() { Some(z) } else { None },
        "replications": est.replications,
        "extensions": est.extensions,
        "coupling_time": est.coupling_time,
    });
    // A zero standard error is only consistent with an exact match.
    let dev = if est.stderr > 0.0 {
        z.abs()
    } else if est.mean == exact {
        0.0
    } else {
        f64::INFINITY
    };
    Ok(render(
        "couple",
        &c,
        result,
        vec![Check::at_most("|z| against exact value", dev, 3.0)],
    ))
}

// ---------------------------------------------------------------- stein

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct SteinArgs {
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    /// Number of sampled test functions (default 50).
    #[arg(long)]
    pub count: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Serialize)]
struct OrderSummary {
    order: u32,
    /// Largest `|Δᵃf_h| / bound` over functions and states.
    worst_ratio: f64,
    violations: usize,
}

pub fn stein(flags: SteinArgs, file: Option<&Value>) -> Outcome<Rendered> {
    let mut c = resolve(flags, file)?;
    let seed = require(c.seed, "seed")?;
    let p = params(c.lambda, c.mu, c.delta, (1.0, 2.0, 1.0))?;
    (c.lambda, c.mu, c.delta) = (Some(p.lambda), Some(p.mu), Some(p.delta));
    let count = *c.count.get_or_insert(50);
    // Checked on {0..N}, solved on {0..2N}.
    let n = p.truncation().max(4);
    let spec = LatticeSpec::line(p.delta, 0, 2 * n)?;
    let mut orders: Vec<OrderSummary> = (1..=3)
        .map(|order| OrderSummary {
            order,
            worst_ratio: 0.0,
            violations: 0,
        })
        .collect();
    let (mut uniform, mut uniform_violations, mut identity) = (0.0f64, 0usize, 0.0f64);
    for i in 0..count {
        let h = sample_dlip_higher(&spec, 3, seed.wrapping_add(i))?;
        for o in orders.iter_mut() {
            let r = stein_factor_report(&p, &h, o.order, n)?;
            let bound = r.first_order_bound.as_ref().unwrap_or(&r.bound);
            o.worst_ratio = r
                .exact
                .iter()
                .zip(bound)
                .map(|(e, b)| e / b)
                .fold(o.worst_ratio, f64::max);
            o.violations += r.violations.len();
            if o.order == 3 {
                uniform = r.exact.iter().map(|e| e / r.uniform_bound).fold(uniform, f64::max);
                uniform_violations += r.uniform_violations.len();
            }
        }
        identity = identity.max(third_order_identity_residual(&p, &h)?);
    }
    let mut checks: Vec<Check> = orders
        .iter()
        .map(|o| Check::at_most(&format!("order {} violations", o.order), o.violations as f64, 0.0))
        .collect();
    checks.push(Check::at_most(
        "uniform third-order bound violations",
        uniform_violations as f64,
        0.0,
    ));
    checks.push(Check::at_most("third-order identity residual", identity, 1e-10));
    let result = json!({
        "checked_levels": n + 1,
        "orders": orders,
        "uniform_worst_ratio": uniform,
        "identity_residual": identity,
    });
    Ok(render("stein", &c, result, checks))
}

// ---------------------------------------------------------------- interchange-check

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    /// Birth–death queue; f solves its Poisson equation.
    Mm1,
    /// Jumps +1, −2, −1 with affine rates.
    Affine,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct InterchangeArgs {
    #[arg(long, value_enum)]
    pub model: Option<Model>,
    #[arg(long)]
    pub x: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    /// Right-hand side of the Poisson equation that defines f (default identity).
    #[arg(long, value_enum)]
    pub h: Option<TestFn>,
    #[arg(long)]
    pub seed: Option<u64>,
}

fn affine_kernel(delta: f64, n: i64) -> Outcome<RateKernel> {
    Ok(RateKernel::new(
        LatticeSpec::line(delta, 0, n)?,
        vec![
            Jump {
                offset: vec![1],
                rate: RateExpr::Affine {
                    c0: 0.2,
                    c: vec![delta],
                },
            },
            Jump {
                offset: vec![-2],
                rate: RateExpr::Affine { c0: 0.5, c: vec![0.3] },
            },
            Jump {
                offset: vec![-1],
                rate: RateExpr::Constant { c: 0.7 },
            },
        ],
    )?)
}

pub fn interchange_check(flags: InterchangeArgs, file: Option<&Value>) -> Outcome<Rendered> {
    let mut c = resolve(flags, file)?;
    let model = require(c.model, "model")?;
    let x = require(c.x, "x")?;
    let choice = *c.h.get_or_insert(TestFn::Identity);
    let mut checks = Vec::new();
    let result = match model {
        Model::Mm1 => {
            let p = params(c.lambda, c.mu, c.delta, (1.0, 2.0, 0.5))?;
            (c.lambda, c.mu, c.delta) = (Some(p.lambda), Some(p.mu), Some(p.delta));
            let n = p.truncation().max((x / p.delta).ceil() as i64 + 10);
            let kernel = p.kernel(n)?;
            let h = test_function(choice, kernel.spec(), c.seed)?;
            let f = birth_death_poisson(p.lambda, p.mu, p.delta, &h)?.grid();
            let ic = Interchange::new(&kernel, &f)?;
            let lhs = ic.a_gx(&[x])?;
            let boundary = Mm1Boundary::new(p.lambda, p.mu, p.delta, &f)?.eval(x)?;
            checks.push(Check::at_most("extension form mismatch", (lhs - boundary).abs(), 1e-10));
            let rep = if x >= p.delta { Some(ic.report(&[x])?) } else { None };
            if let Some(r) = &rep {
                checks.push(Check::at_most("interchange residual", r.residual.abs(), 1e-10));
            }
            json!({ "a_gx": lhs, "extension_form": boundary, "report": rep })
        }
        Model::Affine => {
            let delta = *c.delta.get_or_insert(0.25);
            let n = ((x / delta).ceil() as i64 + 10).max(20);
            let kernel = affine_kernel(delta, n)?;
            let h = test_function(choice, kernel.spec(), c.seed)?;
            let f = solve_poisson(&kernel, &h)?.grid();
            let r = Interchange::new(&kernel, &f)?.report(&[x])?;
            checks.push(Check::at_most("interchange residual", r.residual.abs(), 1e-10));
            json!({ "report": r })
        }
    };
    Ok(render("interchange-check", &c, result, checks))
}

// ---------------------------------------------------------------- poisson

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Solver {
    Closed,
    Direct,
    Integral,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct PoissonArgs {
    #[arg(long, value_enum)]
    pub model: Option<Model>,
    #[arg(long, value_enum)]
    pub h: Option<TestFn>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    /// Top level of the truncated box (default from the tail bound).
    #[arg(long)]
    pub levels: Option<i64>,
    #[arg(long, value_enum)]
    pub solver: Option<Solver>,
    #[arg(long)]
    pub seed: Option<u64>,
}

pub fn poisson(flags: PoissonArgs, file: Option<&Value>) -> Outcome<Rendered> {
    let mut c = resolve(flags, file)?;
    if require(c.model, "model")? != Model::Mm1 {
        return Err(usage("poisson supports --model mm1"));
    }
    let p = params(c.lambda, c.mu, c.delta, (1.0, 2.0, 0.5))?;
    (c.lambda, c.mu, c.delta) = (Some(p.lambda), Some(p.mu), Some(p.delta));
    let n = *c.levels.get_or_insert(p.truncation().max(4));
    let solver = *c.solver.get_or_insert(Solver::Direct);
    let choice = require(c.h, "h")?;
    let kernel = p.kernel(n)?;
    let h = test_function(choice, kernel.spec(), c.seed)?;
    let closed = birth_death_poisson(p.lambda, p.mu, p.delta, &h)?;
    let (sol, agree) = match solver {
        Solver::Closed => (closed.clone(), 1e-9),
        Solver::Direct => (solve_poisson(&kernel, &h)?, 1e-9),
        Solver::Integral => (poisson_via_integral(&kernel, &h, 400.0, 12)?, 1e-6),
    };
    let mut gap = 0.0f64;
    for a in 1..=3usize {
        for k in 0..=(n - a as i64) {
            gap = gap.max((sol.difference(a, k)? - closed.difference(a, k)?).abs());
        }
    }
    let residual = sol.residual(&kernel, &h)?;
    let mut checks = vec![
        Check::at_most("differences against closed form", gap, agree),
        Check::at_most(
            "Poisson residual",
            residual,
            if solver == Solver::Integral { 1e-6 } else { 1e-10 },
        ),
    ];
    if choice == TestFn::Const {
        let worst = sol.values().iter().map(|v| v.abs()).fold(0.0, f64::max);
        checks.push(Check::at_most("constant h gives f = 0", worst, 1e-12));
    }
    let result = json!({
        "mean_h": sol.mean(),
        "residual": residual,
        "warning": sol.warning(),
        "f": sol.values(),
    });
    Ok(render("poisson", &c, result, checks))
}

// ---------------------------------------------------------------- misalign

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct MisalignArgs {
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    /// Spacing of the four starting points (default 0.1).
    #[arg(long)]
    pub eps: Option<f64>,
    /// Start of the lowest path (default 2ε).
    #[arg(long)]
    pub x0: Option<f64>,
    /// Euler step (default ε²/100).
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub reps: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

pub fn misalign(flags: MisalignArgs, file: Option<&Value>) -> Outcome<Rendered> {
    let mut c = resolve(flags, file)?;
    let seed = require(c.seed, "seed")?;
    let p = params(c.lambda, c.mu, c.delta, (1.0, 2.0, 1.0))?;
    (c.lambda, c.mu, c.delta) = (Some(p.lambda), Some(p.mu), Some(p.delta));
    let eps = *c.eps.get_or_insert(0.1);
    let x0 = *c.x0.get_or_insert(2.0 * eps);
    let reps = *c.reps.get_or_insert(1000);
    let mut cfg = MisalignmentConfig::new(&p, eps, x0, reps, seed);
    cfg.dt = *c.dt.get_or_insert(cfg.dt);
    let r = rbm_misalignment_demo(&p, &cfg)?;
    let checks = vec![
        Check::at_least("fraction of windows with D3 below -eps/4 + slack", r.fraction_ok, 0.99),
        Check::at_most("|z| of mean window length", r.window_z.abs(), 3.0),
    ];
    Ok(render("misalign", &c, r, checks))
}
