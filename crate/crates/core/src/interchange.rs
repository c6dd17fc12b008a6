//! Interpolated generator `A G_X f` against the interchanged form
//! `Σ_ℓ Aβ_ℓ(x)(Af(x+δℓ) − Af(x))`, with the exact error
//!
//! ```text
//! ε(x) = Σ_ℓ Σ_i Π_j J_{i_j}(t_j) (β_ℓ(δ(k+i)) − Aβ_ℓ(x))
//!             (f(δ(k+ℓ+i)) − f(δ(k+i)) − f(δ(k+ℓ)) + f(δk)),   k = k(x).
//! ```
//!
//! In one dimension the bracket telescopes into sums of `Δ²f`. Rates are the
//! kernel's untruncated `β_ℓ`; the function's own box decides the domain.

use serde::Serialize;

use crate::ctmc::RateKernel;
use crate::error::{Error, Result};
use crate::interpolator::{interpolate_nodes, Interpolant};
use crate::lattice::{GridFunction, LatticeSpec, MultiIndex};

/// The decomposition at one point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InterchangeReport {
    pub x: Vec<f64>,
    /// `A(G_X f)(x)`.
    pub lhs: f64,
    /// `Σ_ℓ Aβ_ℓ(x)(Af(x+δℓ) − Af(x))`.
    pub main_term: f64,
    pub epsilon: f64,
    /// `lhs − main_term − epsilon`.
    pub residual: f64,
}

/// Precomputed view of `(kernel, f)` for evaluation at many points.
#[derive(Debug, Clone)]
pub struct Interchange<'a> {
    kernel: &'a RateKernel,
    itp: Interpolant,
}

impl<'a> Interchange<'a> {
    pub fn new(kernel: &'a RateKernel, f: &GridFunction) -> Result<Self> {
        let d = f.spec().dim();
        if kernel.spec().dim() != d {
            return Err(Error::InvalidArgument("kernel and function dimensions differ".into()));
        }
        if (kernel.spec().delta() - f.spec().delta()).abs() > 1e-15 * f.spec().delta() {
            return Err(Error::InvalidArgument("kernel and function spacings differ".into()));
        }
        Ok(Self {
            kernel,
            itp: Interpolant::new(f.clone()),
        })
    }

    fn spec(&self) -> &LatticeSpec {
        self.itp.spec()
    }

    fn f(&self, k: &[i64]) -> Result<f64> {
        self.itp.grid().get(k).copied().map_err(|e| self.to_domain(k, e))
    }

    fn to_domain(&self, k: &[i64], e: Error) -> Error {
        match e {
            Error::IndexOutOfRange { .. } => Error::Domain {
                point: k.iter().map(|&c| c as f64 * self.spec().delta()).collect(),
                reason: format!("stencil needs lattice point {k:?} outside the function's box"),
            },
            other => other,
        }
    }

    fn zero(&self) -> MultiIndex {
        MultiIndex::zero(self.spec().dim())
    }

    /// `A(G_X f)(x)`: generator values at the stencil nodes, then interpolated.
    pub fn a_gx(&self, x: &[f64]) -> Result<f64> {
        let (k, t) = self.itp.locate(x)?;
        interpolate_nodes(self.spec().delta(), &k, &t, &self.zero(), |node| {
            self.kernel
                .generator_apply_raw(self.itp.grid(), node)
                .map_err(|e| self.to_domain(node, e))
        })
    }

    /// `Aβ_j(x)`.
    pub fn a_rate(&self, j: usize, x: &[f64]) -> Result<f64> {
        let (k, t) = self.itp.locate(x)?;
        self.a_rate_at(j, &k, &t)
    }

    fn a_rate_at(&self, j: usize, k: &[i64], t: &[f64]) -> Result<f64> {
        interpolate_nodes(self.spec().delta(), k, t, &self.zero(), |node| {
            Ok(self.kernel.raw_rate(j, node))
        })
    }

    /// `Σ_ℓ Aβ_ℓ(x)(Af(x+δℓ) − Af(x))`, with `Af(x+δℓ)` evaluated on piece
    /// `k(x)+ℓ` at the same offset.
    pub fn interchanged_main(&self, x: &[f64]) -> Result<f64> {
        let (k, t) = self.itp.locate(x)?;
        let zero = self.zero();
        let base = self.itp.piece_derivative(&k, &t, &zero)?;
        let mut s = 0.0;
        for (j, jump) in self.kernel.jumps().iter().enumerate() {
            let shifted: Vec<i64> = k.iter().zip(&jump.offset).map(|(a, b)| a + b).collect();
            let moved = self.itp.piece_derivative(&shifted, &t, &zero)?;
            s += self.a_rate_at(j, &k, &t)? * (moved - base);
        }
        Ok(s)
    }

    /// One-dimensional error in telescoped form:
    /// `Σ_ℓ Σ_{i=1..4} J_i(t)(β_ℓ(k+i) − Aβ_ℓ(x)) s_ℓ Σ_{j<i} Σ_{m∈M_ℓ} Δ²f(k+m+j)`
    /// with `M_ℓ = {0..ℓ−1}`, `s_ℓ = 1` for `ℓ > 0` and `M_ℓ = {ℓ..−1}`, `s_ℓ = −1`
    /// for `ℓ < 0`.
    pub fn epsilon_1d(&self, x: f64) -> Result<f64> {
        if self.spec().dim() != 1 {
            return Err(Error::InvalidArgument(
                "epsilon_1d needs a one-dimensional lattice".into(),
            ));
        }
        let (k, t) = self.itp.locate(&[x])?;
        let (k, t) = (k[0], t[0]);
        let d2 = |p: i64| -> Result<f64> { Ok(self.f(&[p + 2])? - 2.0 * self.f(&[p + 1])? + self.f(&[p])?) };
        let mut eps = 0.0;
        for (jn, jump) in self.kernel.jumps().iter().enumerate() {
            let l = jump.offset[0];
            let ab = self.a_rate_at(jn, &[k], &[t])?;
            let (ms, sign) = if l > 0 { (0..l, 1.0) } else { (l..0, -1.0) };
            for i in 1..=4i64 {
                let w = crate::weights::weight(i as usize, t)?;
                if w == 0.0 {
                    continue;
                }
                let dev = self.kernel.raw_rate(jn, &[k + i]) - ab;
                let mut inner = 0.0;
                for j in 0..i {
                    for m in ms.clone() {
                        inner += d2(k + m + j)?;
                    }
                }
                eps += w * dev * sign * inner;
            }
        }
        Ok(eps)
    }

    /// Error in product-weight form, any dimension.
    pub fn epsilon_nd(&self, x: &[f64]) -> Result<f64> {
        let (k, t) = self.itp.locate(x)?;
        let d = k.len();
        let zero = self.zero();
        let mut eps = 0.0;
        for (jn, jump) in self.kernel.jumps().iter().enumerate() {
            let l = &jump.offset;
            let ab = self.a_rate_at(jn, &k, &t)?;
            let kl: Vec<i64> = (0..d).map(|a| k[a] + l[a]).collect();
            let corner = self.f(&kl)? - self.f(&k)?;
            eps += interpolate_nodes(self.spec().delta(), &k, &t, &zero, |node| {
                let dev = self.kernel.raw_rate(jn, node) - ab;
                if dev == 0.0 {
                    return Ok(0.0);
                }
                let nl: Vec<i64> = (0..d).map(|a| node[a] + l[a]).collect();
                Ok(dev * (self.f(&nl)? - self.f(node)? - corner))
            })?;
        }
        Ok(eps)
    }

    /// Full decomposition at `x`; ε from the one-dimensional form when `d = 1`.
    pub fn report(&self, x: &[f64]) -> Result<InterchangeReport> {
        let lhs = self.a_gx(x)?;
        let main_term = self.interchanged_main(x)?;
        let epsilon = if x.len() == 1 {
            self.epsilon_1d(x[0])?
        } else {
            self.epsilon_nd(x)?
        };
        Ok(InterchangeReport {
            x: x.to_vec(),
            lhs,
            main_term,
            epsilon,
            residual: lhs - main_term - epsilon,
        })
    }
}

pub fn a_gx(kernel: &RateKernel, f: &GridFunction, x: &[f64]) -> Result<f64> {
    Interchange::new(kernel, f)?.a_gx(x)
}

pub fn interchanged_main(kernel: &RateKernel, f: &GridFunction, x: &[f64]) -> Result<f64> {
    Interchange::new(kernel, f)?.interchanged_main(x)
}

pub fn epsilon_1d(kernel: &RateKernel, f: &GridFunction, x: f64) -> Result<f64> {
    Interchange::new(kernel, f)?.epsilon_1d(x)
}

pub fn epsilon_nd(kernel: &RateKernel, f: &GridFunction, x: &[f64]) -> Result<f64> {
    Interchange::new(kernel, f)?.epsilon_nd(x)
}

pub fn interchange_report(kernel: &RateKernel, f: &GridFunction, x: &[f64]) -> Result<InterchangeReport> {
    Interchange::new(kernel, f)?.report(x)
}

/// `f̂` on `{−1, 0, ..., N}` with `f̂(−δ) = f(0)`.
pub fn extend_hat(f: &GridFunction) -> Result<GridFunction> {
    let spec = f.spec();
    if spec.dim() != 1 || spec.lower()[0] != 0 {
        return Err(Error::InvalidArgument(
            "extension needs a one-dimensional box starting at 0".into(),
        ));
    }
    let wide = spec.widened(&[1], &[0])?;
    let mut values = Vec::with_capacity(f.values().len() + 1);
    values.push(f.values()[0]);
    values.extend_from_slice(f.values());
    GridFunction::from_values(wide, values)
}

/// `λ(Af̂(x+δ) − Af̂(x)) + μ(Af̂(x−δ) − Af̂(x))` for `x ≥ 0`.
pub fn mm1_boundary_interchange(lambda: f64, mu: f64, delta: f64, f: &GridFunction, x: f64) -> Result<f64> {
    Mm1Boundary::new(lambda, mu, delta, f)?.eval(x)
}

/// [`mm1_boundary_interchange`] with the extension built once.
#[derive(Debug, Clone)]
pub struct Mm1Boundary {
    lambda: f64,
    mu: f64,
    hat: Interpolant,
}

impl Mm1Boundary {
    pub fn new(lambda: f64, mu: f64, delta: f64, f: &GridFunction) -> Result<Self> {
        if (f.spec().delta() - delta).abs() > 1e-15 * delta {
            return Err(Error::InvalidArgument(
                "spacing differs from the function's spacing".into(),
            ));
        }
        Ok(Self {
            lambda,
            mu,
            hat: Interpolant::new(extend_hat(f)?),
        })
    }

    /// Interpolant of `f̂`.
    pub fn hat(&self) -> &Interpolant {
        &self.hat
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        if !(x >= 0.0) {
            return Err(Error::Domain {
                point: vec![x],
                reason: "boundary interchange is defined for x >= 0".into(),
            });
        }
        let (k, t) = self.hat.locate(&[x])?;
        let z = MultiIndex::zero(1);
        let at = |shift: i64| self.hat.piece_derivative(&[k[0] + shift], &t, &z);
        let mid = at(0)?;
        Ok(self.lambda * (at(1)? - mid) + self.mu * (at(-1)? - mid))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ctmc::{Jump, RateExpr};

    fn affine_kernel(n: i64, delta: f64) -> RateKernel {
        RateKernel::new(
            LatticeSpec::line(delta, 0, n).unwrap(),
            vec![
                Jump {
                    offset: vec![1],
                    rate: RateExpr::Affine {
                        c0: 0.0,
                        c: vec![delta],
                    },
                },
                Jump {
                    offset: vec![-2],
                    rate: RateExpr::Affine { c0: 0.5, c: vec![0.3] },
                },
            ],
        )
        .unwrap()
    }

    #[test]
    fn affine_rate_square_at_half_step() {
        let delta = 0.5;
        let kern = affine_kernel(30, delta);
        let f = GridFunction::from_fn(kern.spec().clone(), |k| (delta * k[0] as f64).powi(2)).unwrap();
        let ic = Interchange::new(&kern, &f).unwrap();
        for &x in &[delta / 2.0 + 2.0, 4.3, 7.77] {
            let r = ic.report(&[x]).unwrap();
            assert!(r.residual.abs() < 1e-10, "{r:?}");
            assert!((ic.epsilon_nd(&[x]).unwrap() - r.epsilon).abs() < 1e-12);
        }
    }

    #[test]
    fn epsilon_vanishes_at_knots_and_constant_rates() {
        let kern = affine_kernel(30, 0.5);
        let f = GridFunction::from_fn(kern.spec().clone(), |k| (k[0] as f64 * 0.37).sin()).unwrap();
        let ic = Interchange::new(&kern, &f).unwrap();
        assert!(ic.epsilon_1d(3.0).unwrap().abs() < 1e-12);

        let mm1 = RateKernel::mm1(1.0, 2.0, 0.5, 30).unwrap();
        let ic = Interchange::new(&mm1, &f).unwrap();
        for &x in &[0.6, 1.3, 5.9] {
            assert!(ic.epsilon_1d(x).unwrap().abs() < 1e-12);
            assert!((ic.a_gx(&[x]).unwrap() - ic.interchanged_main(&[x]).unwrap()).abs() < 1e-10);
        }
    }

    #[test]
    fn extension_values() {
        let spec = LatticeSpec::line(1.0, 0, 8).unwrap();
        let f = GridFunction::from_fn(spec, |k| (k[0] as f64).powi(3) - 2.0 * k[0] as f64).unwrap();
        let g = extend_hat(&f).unwrap();
        assert_eq!(g.get(&[-1]).unwrap(), f.get(&[0]).unwrap());
        let d1 = MultiIndex::new(vec![1]);
        assert_eq!(g.forward_difference(&d1, &[-1]).unwrap(), 0.0);
        let d3 = g.forward_difference(&MultiIndex::new(vec![3]), &[-1]).unwrap();
        let want =
            f.forward_difference(&MultiIndex::new(vec![2]), &[0]).unwrap() - f.forward_difference(&d1, &[0]).unwrap();
        assert_eq!(d3, want);
    }

    #[test]
    fn boundary_interchange_matches_lhs() {
        let (lambda, mu, delta) = (1.0, 2.0, 0.5);
        let kern = RateKernel::mm1(lambda, mu, delta, 30).unwrap();
        let f = GridFunction::from_fn(kern.spec().clone(), |k| (0.3 * k[0] as f64).cos() * k[0] as f64).unwrap();
        let ic = Interchange::new(&kern, &f).unwrap();
        for &x in &[0.0, 0.1, 0.25, 0.49, 0.5, 1.7, 6.2] {
            let b = mm1_boundary_interchange(lambda, mu, delta, &f, x).unwrap();
            assert!((b - ic.a_gx(&[x]).unwrap()).abs() < 1e-10, "x = {x}");
        }
        assert!(mm1_boundary_interchange(lambda, mu, delta, &f, -0.1).is_err());
    }

    #[test]
    fn out_of_box_stencils_are_domain_errors() {
        let kern = affine_kernel(12, 1.0);
        let f = GridFunction::constant(kern.spec().clone(), 1.0);
        assert!(matches!(a_gx(&kern, &f, &[0.5]), Err(Error::Domain { .. })));
        assert!(matches!(
            interchanged_main(&kern, &f, &[8.5]),
            Err(Error::Domain { .. })
        ));
    }
}
