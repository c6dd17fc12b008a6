use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::ctmc::kernel::{RateKernel, SparseGenerator};
use crate::error::{Error, Result};
use crate::lattice::{GridFunction, LatticeSpec};

/// Stationary law of a truncated chain.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StationaryDistribution {
    spec: LatticeSpec,
    probs: Vec<f64>,
}

impl StationaryDistribution {
    pub fn from_probs(spec: LatticeSpec, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != spec.len() {
            return Err(Error::InvalidArgument(
                "probability vector does not match the box".into(),
            ));
        }
        if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::InvalidArgument(
                "probabilities must be finite and non-negative".into(),
            ));
        }
        let s: f64 = probs.iter().sum();
        if (s - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!("probabilities sum to {s}")));
        }
        Ok(Self { spec, probs })
    }

    pub fn spec(&self) -> &LatticeSpec {
        &self.spec
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, k: &[i64]) -> Result<f64> {
        Ok(self.probs[self.spec.linear_index(k)?])
    }

    /// `E h(X)`; `h` must live on the same box.
    pub fn expectation(&self, h: &GridFunction) -> Result<f64> {
        if h.spec() != &self.spec {
            return Err(Error::InvalidArgument(
                "function and law live on different boxes".into(),
            ));
        }
        Ok(self.probs.iter().zip(h.values()).map(|(p, v)| p * v).sum())
    }

    /// `max_k |(πQ)_k|`.
    pub fn balance_residual(&self, q: &SparseGenerator) -> f64 {
        let n = self.probs.len();
        let mut flow = vec![0.0; n];
        for (i, row) in q.rows.iter().enumerate() {
            flow[i] -= self.probs[i] * q.exit[i];
            for &(j, r) in row {
                flow[j] += self.probs[i] * r;
            }
        }
        flow.iter().fold(0.0f64, |m, x| m.max(x.abs()))
    }
}

/// Solves `πQ = 0`, `Σπ = 1` for the truncated chain.
///
/// One-dimensional nearest-neighbour chains use the detailed-balance product;
/// everything else goes through a dense LU with one balance row replaced by
/// the normalization.
pub fn stationary(kernel: &RateKernel) -> Result<StationaryDistribution> {
    let q = kernel.sparse();
    let n = q.len();
    if !(q.reachable(0, true).iter().all(|&b| b) && q.reachable(0, false).iter().all(|&b| b)) {
        return Err(Error::Singular("truncated chain is reducible on the box".into()));
    }
    let probs = if kernel.is_birth_death() {
        birth_death_product(kernel)
    } else {
        dense_balance(&q)?
    };
    let dist = StationaryDistribution {
        spec: kernel.spec().clone(),
        probs,
    };
    let resid = dist.balance_residual(&q);
    let scale = q.exit.iter().fold(1.0f64, |m, &x| m.max(x));
    if resid > 1e-9 * scale || n == 0 {
        return Err(Error::Solver(format!("global balance residual {resid:e}")));
    }
    Ok(dist)
}

fn birth_death_product(kernel: &RateKernel) -> Vec<f64> {
    let spec = kernel.spec();
    let lo = spec.lower()[0];
    let hi = spec.upper()[0];
    let up = kernel.jumps().iter().position(|j| j.offset[0] == 1);
    let down = kernel.jumps().iter().position(|j| j.offset[0] == -1);
    let mut p = vec![1.0];
    for k in lo..hi {
        let b = up.map_or(0.0, |j| kernel.rate(j, &[k]));
        let d = down.map_or(0.0, |j| kernel.rate(j, &[k + 1]));
        p.push(p.last().expect("non-empty") * b / d);
    }
    let s: f64 = p.iter().sum();
    p.iter().map(|x| x / s).collect()
}

fn dense_balance(q: &SparseGenerator) -> Result<Vec<f64>> {
    let n = q.len();
    let mut a = DMatrix::<f64>::zeros(n, n);
    for (i, row) in q.rows.iter().enumerate() {
        a[(i, i)] -= q.exit[i];
        for &(j, r) in row {
            a[(j, i)] += r;
        }
    }
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut b = DVector::<f64>::zeros(n);
    b[n - 1] = 1.0;
    let pi = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::Singular("balance equations are singular".into()))?;
    if pi.iter().any(|p| *p < -1e-12) {
        return Err(Error::Solver("negative stationary mass".into()));
    }
    let clipped: Vec<f64> = pi.iter().map(|p| p.max(0.0)).collect();
    let s: f64 = clipped.iter().sum();
    Ok(clipped.iter().map(|p| p / s).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ctmc::kernel::{Jump, RateExpr};

    fn two_state(a: f64, b: f64) -> RateKernel {
        let spec = LatticeSpec::new(1.0, vec![0, 0], vec![1, 0]).unwrap();
        RateKernel::new(
            spec,
            vec![
                Jump {
                    offset: vec![1, 0],
                    rate: RateExpr::Constant { c: a },
                },
                Jump {
                    offset: vec![-1, 0],
                    rate: RateExpr::Constant { c: b },
                },
            ],
        )
        .unwrap()
    }

    #[test]
    fn two_state_chain() {
        let pi = stationary(&two_state(0.3, 1.7)).unwrap();
        assert!((pi.probs()[0] - 1.7 / 2.0).abs() < 1e-14);
        assert!((pi.probs()[1] - 0.3 / 2.0).abs() < 1e-14);
    }

    #[test]
    fn mm1_is_truncated_geometric() {
        let n = 60;
        let kern = RateKernel::mm1(1.0, 2.0, 1.0, n).unwrap();
        let pi = stationary(&kern).unwrap();
        for k in 0..=n {
            let g = 0.5 * 0.5f64.powi(k as i32);
            assert!((pi.prob(&[k]).unwrap() - g).abs() < 1e-15);
        }
        assert!(pi.balance_residual(&kern.sparse()) < 1e-15);
    }

    #[test]
    fn dense_and_product_forms_agree() {
        let kern = RateKernel::mm1(0.8, 1.1, 1.0, 40).unwrap();
        let a = stationary(&kern).unwrap();
        let b = dense_balance(&kern.sparse()).unwrap();
        for (x, y) in a.probs().iter().zip(&b) {
            assert!((x - y).abs() < 1e-13);
        }
    }

    #[test]
    fn symmetric_walk_is_uniform() {
        let spec = LatticeSpec::line(1.0, 0, 9).unwrap();
        let kern = RateKernel::new(
            spec,
            vec![
                Jump {
                    offset: vec![1],
                    rate: RateExpr::Constant { c: 1.5 },
                },
                Jump {
                    offset: vec![-1],
                    rate: RateExpr::Constant { c: 1.5 },
                },
            ],
        )
        .unwrap();
        for p in stationary(&kern).unwrap().probs() {
            assert!((p - 0.1).abs() < 1e-14);
        }
    }

    #[test]
    fn reducible_chain_is_singular() {
        let spec = LatticeSpec::line(1.0, 0, 5).unwrap();
        let kern = RateKernel::new(
            spec,
            vec![Jump {
                offset: vec![1],
                rate: RateExpr::Constant { c: 1.0 },
            }],
        )
        .unwrap();
        assert!(matches!(stationary(&kern), Err(Error::Singular(_))));
    }
}
