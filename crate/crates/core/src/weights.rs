//! Degree-7 weight polynomials of the forward-difference spline.
//!
//! On the piece anchored at `δk`, with `t = (x − δk)/δ`,
//!
//! ```text
//! P_k = f(δk) + t Δf + (t² − t)/2 Δ²f + (t³ − 3t² + 2t)/6 Δ³f
//!       + (−23/3 t⁴ + 41/2 t⁵ − 55/3 t⁶ + 11/2 t⁷) Δ⁴f,
//! ```
//!
//! all differences taken at `δk`. Expanding `Δʳf(δk) = Σᵢ (−1)^{r−i} C(r,i) f(δ(k+i))`
//! and collecting by node gives `P_k = Σᵢ Jᵢ(t) f(δ(k+i))`. The table holds the
//! coefficients of `J₀..J₄` as exact rationals.

use std::sync::OnceLock;

use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::{ratio, Scalar};

/// Number of nodes per piece.
pub const NODES: usize = 5;
/// Number of coefficients per weight polynomial (degree 7).
pub const COEFFS: usize = 8;
/// Highest derivative order the spline supports.
pub const MAX_DERIVATIVE: usize = 4;

/// Exact coefficients: row `i` holds `J_i(t) = Σ_p coeffs[i][p] tᵖ`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightTable {
    coeffs: Vec<Vec<BigRational>>,
}

impl WeightTable {
    /// Regroups the Newton-difference form into per-node weights.
    pub fn derive() -> Self {
        // Coefficient of Δʳf(δk) as a polynomial in t, r = 1..4.
        let newton: [Vec<BigRational>; 4] = [
            vec![ratio(0, 1), ratio(1, 1)],
            vec![ratio(0, 1), ratio(-1, 2), ratio(1, 2)],
            vec![ratio(0, 1), ratio(1, 3), ratio(-1, 2), ratio(1, 6)],
            vec![
                ratio(0, 1),
                ratio(0, 1),
                ratio(0, 1),
                ratio(0, 1),
                ratio(-23, 3),
                ratio(41, 2),
                ratio(-55, 3),
                ratio(11, 2),
            ],
        ];
        let mut coeffs = vec![vec![BigRational::zero(); COEFFS]; NODES];
        coeffs[0][0] = BigRational::one();
        for (idx, poly) in newton.iter().enumerate() {
            let r = idx + 1;
            for (i, row) in coeffs.iter_mut().enumerate().take(r + 1) {
                let sign = if (r - i) % 2 == 0 { 1 } else { -1 };
                let w = ratio(sign * binomial(r, i), 1);
                for (p, c) in poly.iter().enumerate() {
                    row[p] += w.clone() * c.clone();
                }
            }
        }
        Self { coeffs }
    }

    /// Shared instance.
    pub fn get() -> &'static WeightTable {
        static TABLE: OnceLock<WeightTable> = OnceLock::new();
        TABLE.get_or_init(WeightTable::derive)
    }

    pub fn coeff(&self, node: usize, power: usize) -> &BigRational {
        &self.coeffs[node][power]
    }

    pub fn rows(&self) -> &[Vec<BigRational>] {
        &self.coeffs
    }

    /// Coefficients converted to the scalar type, with derivative tables.
    pub fn to_scalar<T: Scalar>(&self) -> ScalarWeights<T> {
        let mut deriv = Vec::with_capacity(MAX_DERIVATIVE + 1);
        for a in 0..=MAX_DERIVATIVE {
            let rows = self
                .coeffs
                .iter()
                .map(|row| {
                    (a..COEFFS)
                        .map(|p| {
                            let falling: i64 = ((p - a + 1)..=p).map(|m| m as i64).product();
                            T::from_rational(&(row[p].clone() * ratio(falling, 1)))
                        })
                        .collect()
                })
                .collect();
            deriv.push(rows);
        }
        ScalarWeights { deriv }
    }

    /// Serializable form with numerator/denominator pairs.
    pub fn to_export(&self) -> WeightTableExport {
        WeightTableExport {
            degree: COEFFS - 1,
            nodes: NODES,
            coeffs: self
                .coeffs
                .iter()
                .map(|row| {
                    row.iter()
                        .map(|c| {
                            [
                                c.numer().to_i64().expect("small numerator"),
                                c.denom().to_i64().expect("small denominator"),
                            ]
                        })
                        .collect()
                })
                .collect(),
        }
    }

    /// Exact evaluation of `J_node(t)`.
    pub fn eval_exact(&self, node: usize, t: &BigRational) -> BigRational {
        self.coeffs[node]
            .iter()
            .rev()
            .fold(BigRational::zero(), |acc, c| acc * t.clone() + c.clone())
    }

    /// Largest |coefficient| (used for crude bounds in tests).
    pub fn max_abs_coeff(&self) -> f64 {
        self.coeffs
            .iter()
            .flatten()
            .map(|c| ToPrimitive::to_f64(&c.abs()).unwrap_or(f64::INFINITY))
            .fold(0.0, f64::max)
    }
}

/// JSON shape for cross-language conformance fixtures.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct WeightTableExport {
    pub degree: usize,
    pub nodes: usize,
    /// `coeffs[i][p] = [numerator, denominator]` of the `tᵖ` coefficient of `J_i`.
    pub coeffs: Vec<Vec<[i64; 2]>>,
}

/// Weight polynomials and their derivatives in a working scalar type.
#[derive(Debug, Clone)]
pub struct ScalarWeights<T> {
    /// `deriv[a][i][q]`: coefficient of `t^q` in `J_i^{(a)}(t)`.
    deriv: Vec<Vec<Vec<T>>>,
}

impl<T: Scalar> ScalarWeights<T> {
    /// `J_i^{(a)}(t)` by Horner's scheme (derivative in `t`, not `x`).
    pub fn eval(&self, node: usize, a: usize, t: &T) -> T {
        self.deriv[a][node]
            .iter()
            .rev()
            .fold(T::zero(), |acc, c| acc * t.clone() + c.clone())
    }

    /// `[J_0^{(a)}(t), ..., J_4^{(a)}(t)]`.
    pub fn eval_all(&self, a: usize, t: &T) -> [T; NODES] {
        std::array::from_fn(|i| self.eval(i, a, t))
    }
}

fn f64_weights() -> &'static ScalarWeights<f64> {
    static W: OnceLock<ScalarWeights<f64>> = OnceLock::new();
    W.get_or_init(|| WeightTable::get().to_scalar())
}

/// `J_i(t)`: weight of node `k+i` on the piece anchored at `k`, at offset `t`.
pub fn weight(i: usize, t: f64) -> Result<f64> {
    weight_derivative(i, 0, t)
}

/// `J_i^{(a)}(t)`.
pub fn weight_derivative(i: usize, a: usize, t: f64) -> Result<f64> {
    if i >= NODES {
        return Err(Error::InvalidArgument(format!(
            "weight index must be in 0..=4, got {i}"
        )));
    }
    if a > MAX_DERIVATIVE {
        return Err(Error::InvalidArgument(format!(
            "derivative order must be <= 4, got {a}"
        )));
    }
    Ok(f64_weights().eval(i, a, &t))
}

fn binomial(n: usize, k: usize) -> i64 {
    (0..k).fold(1i64, |acc, j| acc * (n - j) as i64 / (j as i64 + 1))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_row_matches_expanded_polynomial() {
        let t = WeightTable::derive();
        let expected = [
            ratio(1, 1),
            ratio(-11, 6),
            ratio(1, 1),
            ratio(-1, 6),
            ratio(-23, 3),
            ratio(41, 2),
            ratio(-55, 3),
            ratio(11, 2),
        ];
        for (p, e) in expected.iter().enumerate() {
            assert_eq!(t.coeff(0, p), e, "power {p}");
        }
    }

    #[test]
    fn columns_sum_to_unit_vector() {
        let t = WeightTable::derive();
        for p in 0..COEFFS {
            let s = (0..NODES).fold(BigRational::zero(), |acc, i| acc + t.coeff(i, p).clone());
            let expected = if p == 0 {
                BigRational::one()
            } else {
                BigRational::zero()
            };
            assert_eq!(s, expected, "power {p}");
        }
    }

    #[test]
    fn interpolation_at_zero() {
        let t = WeightTable::derive();
        assert_eq!(t.coeff(0, 0), &BigRational::one());
        for i in 1..NODES {
            assert!(t.coeff(i, 0).is_zero());
        }
        assert_eq!(weight(0, 0.0).unwrap(), 1.0);
        for i in 1..NODES {
            assert_eq!(weight(i, 0.0).unwrap(), 0.0);
        }
    }

    #[test]
    fn weight_at_half() {
        // 1 − 11/12 + 1/4 − 1/48 − 23/48 + 41/64 − 55/192 + 11/256 = 177/768.
        let t = WeightTable::derive();
        assert_eq!(t.eval_exact(0, &ratio(1, 2)), ratio(59, 256));
        assert!((weight(0, 0.5).unwrap() - 0.23046875).abs() < 1e-15);
    }

    #[test]
    fn index_out_of_range() {
        assert!(weight(5, 0.3).is_err());
        assert!(weight_derivative(0, 5, 0.3).is_err());
    }

    #[test]
    fn export_has_integer_pairs() {
        let e = WeightTable::get().to_export();
        assert_eq!(e.coeffs.len(), 5);
        assert_eq!(e.coeffs[0][1], [-11, 6]);
        assert_eq!(e.coeffs[0][7], [11, 2]);
        let json = serde_json::to_value(&e).unwrap();
        assert_eq!(json["degree"], 7);
    }

    #[test]
    fn derivative_table_matches_finite_difference() {
        let t = 0.37;
        let h = 1e-5;
        for i in 0..NODES {
            let fd = (weight(i, t + h).unwrap() - weight(i, t - h).unwrap()) / (2.0 * h);
            assert!((weight_derivative(i, 1, t).unwrap() - fd).abs() < 1e-8);
        }
    }
}
