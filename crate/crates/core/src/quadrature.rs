//! Gauss–Kronrod (7/15) quadrature, fixed and adaptive.

use crate::error::{Error, Result};

// Kronrod nodes on [-1, 1], positive half, descending; the odd entries and 0
// are the 7-point Gauss nodes.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// 7-point Gauss–Legendre on `[a, b]`; exact for polynomials of degree ≤ 13.
pub fn gauss7(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut s = WG[3] * f(c);
    for j in 0..3 {
        let x = h * XGK[2 * j + 1];
        s += WG[j] * (f(c - x) + f(c + x));
    }
    s * h
}

/// 15-point Kronrod value and `|K15 − G7|` on `[a, b]`.
pub fn kronrod15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for j in 0..7 {
        let x = h * XGK[j];
        let pair = f(c - x) + f(c + x);
        k += WGK[j] * pair;
        if j % 2 == 1 {
            g += WG[j / 2] * pair;
        }
    }
    (k * h, ((k - g) * h).abs())
}

/// Adaptive bisection driven by the Kronrod error estimate.
///
/// Stops when the summed estimate is below `max(abs_tol, rel_tol·|I|)`.
pub fn adaptive(f: impl Fn(f64) -> f64, a: f64, b: f64, rel_tol: f64, abs_tol: f64) -> Result<f64> {
    const MAX_INTERVALS: usize = 4000;
    if a == b {
        return Ok(0.0);
    }
    let (v, e) = kronrod15(&f, a, b);
    let mut parts = vec![(a, b, v, e)];
    loop {
        let total: f64 = parts.iter().map(|p| p.2).sum();
        let err: f64 = parts.iter().map(|p| p.3).sum();
        if !total.is_finite() {
            return Err(Error::Tolerance(format!("non-finite integrand on [{a}, {b}]")));
        }
        if err <= abs_tol.max(rel_tol * total.abs()) {
            return Ok(total);
        }
        if parts.len() >= MAX_INTERVALS {
            return Err(Error::Tolerance(format!(
                "adaptive quadrature on [{a}, {b}] stuck at error {err:e} (value {total:e})"
            )));
        }
        let (i, _) = parts
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .expect("non-empty");
        let (lo, hi, _, _) = parts.swap_remove(i);
        let mid = 0.5 * (lo + hi);
        let (v1, e1) = kronrod15(&f, lo, mid);
        let (v2, e2) = kronrod15(&f, mid, hi);
        parts.push((lo, mid, v1, e1));
        parts.push((mid, hi, v2, e2));
    }
}

/// `E g(Y)` for `Y ~ Exp(mean)`, truncated at 40 means, integrating cell by
/// cell on `[jc, (j+1)c]` (so kinks on a grid of spacing `c` never straddle a
/// Kronrod panel).
pub fn exponential_expectation(mean: f64, cell: f64, rel_tol: f64, g: impl Fn(f64) -> Result<f64>) -> Result<f64> {
    if !(mean > 0.0 && cell > 0.0) {
        return Err(Error::InvalidArgument("mean and cell width must be positive".into()));
    }
    let end = TRUNCATION_MEANS * mean;
    let cells = (end / cell).ceil() as usize;
    let mut first_err: Option<Error> = None;
    let integrand = |y: f64| match g(y) {
        Ok(v) => v * (-y / mean).exp() / mean,
        Err(_) => f64::NAN,
    };
    let bounds = |j: usize| (j as f64 * cell, ((j + 1) as f64 * cell).min(end));
    // A cheap first pass fixes the scale, so that far cells whose values sit at
    // rounding level are not held to a relative tolerance of their own.
    let scale: f64 = (0..cells)
        .map(|j| {
            let (a, b) = bounds(j);
            kronrod15(&|y| integrand(y).abs(), a, b).0
        })
        .sum();
    let abs_tol = if scale.is_finite() {
        (rel_tol * scale / cells.max(1) as f64).max(1e-300)
    } else {
        1e-300
    };
    let mut total = 0.0;
    for j in 0..cells {
        let (a, b) = bounds(j);
        match adaptive(integrand, a, b, rel_tol, abs_tol) {
            Ok(v) => total += v,
            Err(e) => {
                // Surface the integrand's own error if it produced the NaN.
                if let Some(y) = (0..=16).map(|i| a + (b - a) * i as f64 / 16.0).find(|&y| g(y).is_err()) {
                    first_err = g(y).err();
                }
                return Err(first_err.unwrap_or(e));
            }
        }
    }
    Ok(total)
}

/// Upper limit of exponential-law integrals, in means (`e^{-40} < 5·10⁻¹⁸`).
pub const TRUNCATION_MEANS: f64 = 40.0;
