use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stein-prelimit"))
        .args(args)
        .output()
        .unwrap()
}

fn run_json(args: &[&str]) -> (i32, Value) {
    let out = run(args);
    let v =
        serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)));
    (out.status.code().unwrap(), v)
}

fn tmp(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join(name)
}

#[test]
fn cubic_demo_reproduces_x_cubed() {
    let (code, v) = run_json(&["interp", "--demo", "cubic", "--x", "1.25", "--deriv", "0"]);
    assert_eq!(code, 0);
    assert_eq!(v["result"]["value"].as_f64().unwrap(), 1.953125);
    assert_eq!(v["version"], stein_version());
    assert!(v["checks"].as_array().unwrap().iter().all(|c| c["pass"] == true));
    let (_, d) = run_json(&["interp", "--demo", "cubic", "--x", "2.3", "--deriv", "2"]);
    assert!((d["result"]["derivative"].as_f64().unwrap() - 13.8).abs() < 1e-9);
}

fn stein_version() -> &'static str {
    env!("CARGO_PKG_VERSION")
}

#[test]
fn const_demo_gives_the_constant() {
    let (code, v) = run_json(&["interp", "--demo", "const", "--x", "0.7"]);
    assert_eq!(code, 0);
    assert!((v["result"]["value"].as_f64().unwrap() - 2.5).abs() < 1e-13);
}

#[test]
fn fixture_in_two_dimensions_interpolates_knots() {
    let path = tmp("grid2.json");
    let values: Vec<f64> = (0..64).map(|i| ((i * 37) % 11) as f64 / 7.0).collect();
    let grid = serde_json::json!({ "dim": 2, "delta": 0.5, "lower": [0, 0], "upper": [7, 7], "values": values });
    std::fs::write(&path, grid.to_string()).unwrap();
    // Knot (1, 2): row-major index 1·8 + 2.
    let (code, v) = run_json(&[
        "interp",
        "--fixture",
        path.to_str().unwrap(),
        "--x",
        "0.5,1.0",
        "--deriv",
        "0,0",
    ]);
    assert_eq!(code, 0, "{v}");
    assert!((v["result"]["value"].as_f64().unwrap() - values[10]).abs() < 1e-12);
}

#[test]
fn domain_and_usage_errors() {
    assert_eq!(run(&["interp", "--demo", "cubic", "--x", "9.5"]).status.code(), Some(1));
    assert_eq!(run(&["interp", "--x", "1.0"]).status.code(), Some(2));
    assert_eq!(run(&["couple", "--k", "3"]).status.code(), Some(2));
    assert_eq!(run(&["misalign"]).status.code(), Some(2));
    assert_eq!(
        run(&["stein", "--lambda", "2", "--mu", "1", "--seed", "1"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(run(&["nonsense"]).status.code(), Some(2));
}

#[test]
fn coupling_time_from_three() {
    let (code, v) = run_json(&["couple", "--k", "3", "--reps", "10000", "--seed", "7"]);
    assert_eq!(code, 0);
    let r = &v["result"];
    assert_eq!(r["exact"].as_f64().unwrap(), 4.0);
    assert!(r["z_score"].as_f64().unwrap().abs() <= 3.0);
    assert_eq!(v["config"]["horizon"].as_f64().unwrap(), 50.0);
}

#[test]
fn config_file_is_overridden_by_flags() {
    let path = tmp("couple.json");
    std::fs::write(&path, r#"{"mu": 5.0, "k": 1, "seed": 3, "reps": 400}"#).unwrap();
    let (code, v) = run_json(&["--config", path.to_str().unwrap(), "couple", "--mu", "3"]);
    assert_eq!(code, 0);
    assert_eq!(v["config"]["mu"].as_f64().unwrap(), 3.0);
    assert_eq!(v["config"]["k"], 1);
    assert_eq!(v["result"]["exact"].as_f64().unwrap(), 1.0);
    std::fs::write(&path, r#"{"sed": 3}"#).unwrap();
    assert_eq!(
        run(&["--config", path.to_str().unwrap(), "couple"]).status.code(),
        Some(2)
    );
}

#[test]
fn output_is_identical_across_runs_and_thread_counts() {
    let args = [
        "couple", "--k", "2", "--order", "3", "--h", "sampled", "--reps", "3000", "--seed", "11",
    ];
    let a = Command::new(env!("CARGO_BIN_EXE_stein-prelimit"))
        .args(args)
        .env("STEIN_PRELIMIT_THREADS", "1")
        .output()
        .unwrap();
    let b = Command::new(env!("CARGO_BIN_EXE_stein-prelimit"))
        .args(args)
        .env("STEIN_PRELIMIT_THREADS", "4")
        .output()
        .unwrap();
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let bad = Command::new(env!("CARGO_BIN_EXE_stein-prelimit"))
        .args(args)
        .env("STEIN_PRELIMIT_THREADS", "x")
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn interchange_identity_at_half() {
    let (code, v) = run_json(&["interchange-check", "--model", "mm1", "--x", "0.5"]);
    assert_eq!(code, 0);
    assert!(v["result"]["report"]["residual"].as_f64().unwrap().abs() <= 1e-10);
    let (code, v) = run_json(&[
        "interchange-check",
        "--model",
        "mm1",
        "--x",
        "0.2",
        "--h",
        "sampled",
        "--seed",
        "4",
    ]);
    assert_eq!(code, 0);
    assert!(v["result"]["report"].is_null());
    let (code, _) = run_json(&["interchange-check", "--model", "affine", "--x", "1.3"]);
    assert_eq!(code, 0);
}

#[test]
fn constant_h_gives_zero_solution() {
    for solver in ["closed", "direct", "integral"] {
        let (code, v) = run_json(&["poisson", "--model", "mm1", "--h", "const", "--solver", solver]);
        assert_eq!(code, 0, "{solver}");
        assert!(v["result"]["f"]
            .as_array()
            .unwrap()
            .iter()
            .all(|x| x.as_f64().unwrap().abs() < 1e-12));
    }
}

/// `d.dddddddddddddddde±x`: 17 significant digits.
fn is_sig17(s: &str) -> bool {
    let (mant, exp) = s.split_once('e').unwrap_or((s, "x"));
    let mant = mant.trim_start_matches('-');
    exp.parse::<i32>().is_ok() && mant.len() == 18 && mant.as_bytes()[1] == b'.'
}

#[test]
fn convergence_csv() {
    let out = run(&["convergence"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(lines[0], "rho,delta,gap,bound_rhs,fitted_C,slope");
    assert_eq!(lines.len(), 6);
    for l in &lines[1..] {
        let cells: Vec<&str> = l.split(',').collect();
        assert!(cells.iter().all(|c| is_sig17(c)), "{l}");
        let slope: f64 = cells[5].parse().unwrap();
        assert!((0.8..=1.2).contains(&slope));
    }
    assert!(text.starts_with(&format!("# stein-prelimit {}", stein_version())));
    let one = String::from_utf8(run(&["convergence", "--rhos", "0.7"]).stdout).unwrap();
    assert_eq!(one.lines().filter(|l| !l.starts_with('#')).count(), 2);
}

#[test]
fn stein_and_misalign_reports() {
    let path = tmp("stein.json");
    let out = run(&[
        "--output",
        path.to_str().unwrap(),
        "stein",
        "--seed",
        "1",
        "--count",
        "10",
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(v["pass"], true);
    let (code, v) = run_json(&["misalign", "--seed", "2", "--reps", "200"]);
    assert_eq!(code, 0);
    assert!(v["result"]["fraction_ok"].as_f64().unwrap() >= 0.99);
}
