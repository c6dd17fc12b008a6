use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{GridFunction, LatticeSpec};

/// Rate of one jump as a function of the lattice index `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RateExpr {
    /// `c`.
    Constant { c: f64 },
    /// `c0 + Σ_j c[j]·k_j`.
    Affine { c0: f64, c: Vec<f64> },
    /// `c` when `min ≤ k_axis ≤ max` (open ends allowed), else 0.
    Gated {
        c: f64,
        axis: usize,
        #[serde(default)]
        min: Option<i64>,
        #[serde(default)]
        max: Option<i64>,
    },
}

impl RateExpr {
    pub fn eval(&self, k: &[i64]) -> f64 {
        match self {
            RateExpr::Constant { c } => *c,
            RateExpr::Affine { c0, c } => c0 + c.iter().zip(k).map(|(a, &kj)| a * kj as f64).sum::<f64>(),
            RateExpr::Gated { c, axis, min, max } => {
                let v = k[*axis];
                if min.is_none_or(|m| v >= m) && max.is_none_or(|m| v <= m) {
                    *c
                } else {
                    0.0
                }
            }
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, RateExpr::Constant { .. })
    }
}

/// One jump `k → k + offset` with its rate function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Jump {
    pub offset: Vec<i64>,
    pub rate: RateExpr,
}

/// JSON form of a kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub delta: f64,
    pub lower: Vec<i64>,
    pub upper: Vec<i64>,
    pub jumps: Vec<Jump>,
}

/// A positive-rate jump whose target lies outside the box and was removed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DroppedJump {
    pub state: Vec<i64>,
    pub offset: Vec<i64>,
    pub rate: f64,
}

/// Transition rates `β_ℓ(δk)` of a CTMC on a truncated box.
///
/// Jumps that would leave the box are dropped (their rate is treated as 0 by
/// the truncated generator) and listed in [`dropped`](Self::dropped).
#[derive(Debug, Clone)]
pub struct RateKernel {
    spec: LatticeSpec,
    jumps: Vec<Jump>,
    dropped: Vec<DroppedJump>,
}

impl RateKernel {
    pub fn new(spec: LatticeSpec, jumps: Vec<Jump>) -> Result<Self> {
        let d = spec.dim();
        for (i, jump) in jumps.iter().enumerate() {
            if jump.offset.len() != d {
                return Err(Error::InvalidSpec(format!(
                    "jump {i} offset has dimension {}",
                    jump.offset.len()
                )));
            }
            if jump.offset.iter().all(|&o| o == 0) {
                return Err(Error::InvalidSpec(format!("jump {i} has zero offset")));
            }
            if jumps[..i].iter().any(|other| other.offset == jump.offset) {
                return Err(Error::InvalidSpec(format!("offset {:?} listed twice", jump.offset)));
            }
            match &jump.rate {
                RateExpr::Affine { c, .. } if c.len() != d => {
                    return Err(Error::InvalidSpec(format!(
                        "jump {i} affine rate has {} coefficients",
                        c.len()
                    )));
                }
                RateExpr::Gated { axis, .. } if *axis >= d => {
                    return Err(Error::InvalidSpec(format!("jump {i} gate axis {axis} out of range")));
                }
                _ => {}
            }
        }
        let mut dropped = Vec::new();
        for k in spec.points() {
            for jump in &jumps {
                let r = jump.rate.eval(&k);
                if !(r.is_finite() && r >= 0.0) {
                    return Err(Error::InvalidSpec(format!(
                        "rate of offset {:?} at {k:?} is {r}, must be finite and non-negative",
                        jump.offset
                    )));
                }
                let target: Vec<i64> = k.iter().zip(&jump.offset).map(|(a, b)| a + b).collect();
                if r > 0.0 && !spec.contains(&target) {
                    dropped.push(DroppedJump {
                        state: k.clone(),
                        offset: jump.offset.clone(),
                        rate: r,
                    });
                }
            }
        }
        Ok(Self { spec, jumps, dropped })
    }

    pub fn from_config(cfg: KernelConfig) -> Result<Self> {
        Self::new(LatticeSpec::new(cfg.delta, cfg.lower, cfg.upper)?, cfg.jumps)
    }

    pub fn to_config(&self) -> KernelConfig {
        KernelConfig {
            delta: self.spec.delta(),
            lower: self.spec.lower().to_vec(),
            upper: self.spec.upper().to_vec(),
            jumps: self.jumps.clone(),
        }
    }

    /// M/M/1 queue length on `{0, ..., n}`: arrivals at rate λ, services at
    /// rate μ while the queue is non-empty.
    pub fn mm1(lambda: f64, mu: f64, delta: f64, n: i64) -> Result<Self> {
        Self::new(
            LatticeSpec::line(delta, 0, n)?,
            vec![
                Jump {
                    offset: vec![1],
                    rate: RateExpr::Constant { c: lambda },
                },
                Jump {
                    offset: vec![-1],
                    rate: RateExpr::Gated {
                        c: mu,
                        axis: 0,
                        min: Some(1),
                        max: None,
                    },
                },
            ],
        )
    }

    pub fn spec(&self) -> &LatticeSpec {
        &self.spec
    }

    pub fn jumps(&self) -> &[Jump] {
        &self.jumps
    }

    pub fn dropped(&self) -> &[DroppedJump] {
        &self.dropped
    }

    /// Untruncated `β_ℓ(δk)` for jump `j`.
    pub fn raw_rate(&self, j: usize, k: &[i64]) -> f64 {
        self.jumps[j].rate.eval(k)
    }

    /// Rate of jump `j` in the truncated chain (0 if the target leaves the box).
    pub fn rate(&self, j: usize, k: &[i64]) -> f64 {
        let jump = &self.jumps[j];
        let target: Vec<i64> = k.iter().zip(&jump.offset).map(|(a, b)| a + b).collect();
        if self.spec.contains(k) && self.spec.contains(&target) {
            jump.rate.eval(k)
        } else {
            0.0
        }
    }

    pub fn exit_rate(&self, k: &[i64]) -> f64 {
        (0..self.jumps.len()).map(|j| self.rate(j, k)).sum()
    }

    pub fn max_exit_rate(&self) -> f64 {
        self.spec.points().map(|k| self.exit_rate(&k)).fold(0.0, f64::max)
    }

    /// `G_X f(δk) = Σ_ℓ β_ℓ(δk)(f(δ(k+ℓ)) − f(δk))` over the retained jumps.
    pub fn generator_apply(&self, f: &GridFunction, k: &[i64]) -> Result<f64> {
        self.spec.check(k)?;
        self.apply_with(f, k, |j| self.rate(j, k))
    }

    /// Same sum with the untruncated rates; every target must lie in `f`'s box.
    pub fn generator_apply_raw(&self, f: &GridFunction, k: &[i64]) -> Result<f64> {
        self.apply_with(f, k, |j| self.raw_rate(j, k))
    }

    fn apply_with(&self, f: &GridFunction, k: &[i64], rate: impl Fn(usize) -> f64) -> Result<f64> {
        let fk = *f.get(k)?;
        let mut s = 0.0;
        for (j, jump) in self.jumps.iter().enumerate() {
            let r = rate(j);
            if r == 0.0 {
                continue;
            }
            let target: Vec<i64> = k.iter().zip(&jump.offset).map(|(a, b)| a + b).collect();
            s += r * (f.get(&target)? - fk);
        }
        Ok(s)
    }

    /// `k ↦ G_X f(δk)` over the kernel's box (`f` must share it).
    pub fn generator_grid(&self, f: &GridFunction) -> Result<GridFunction> {
        if f.spec() != &self.spec {
            return Err(Error::InvalidArgument(
                "function and kernel live on different boxes".into(),
            ));
        }
        let values = self
            .spec
            .points()
            .map(|k| self.generator_apply(f, &k))
            .collect::<Result<Vec<_>>>()?;
        GridFunction::from_values(self.spec.clone(), values)
    }

    /// Grid function `k ↦ β_j(δk)` (untruncated) on `spec`.
    pub fn rate_grid(&self, j: usize, spec: &LatticeSpec) -> Result<GridFunction> {
        GridFunction::from_fn(spec.clone(), |k| self.raw_rate(j, k))
    }

    /// Off-diagonal rates row by row, as `(target linear index, rate)`.
    pub fn sparse(&self) -> SparseGenerator {
        let n = self.spec.len();
        let mut rows = Vec::with_capacity(n);
        let mut exit = Vec::with_capacity(n);
        for k in self.spec.points() {
            let mut row = Vec::new();
            let mut total = 0.0;
            for (j, jump) in self.jumps.iter().enumerate() {
                let r = self.rate(j, &k);
                if r > 0.0 {
                    let target: Vec<i64> = k.iter().zip(&jump.offset).map(|(a, b)| a + b).collect();
                    row.push((self.spec.linear_index(&target).expect("retained target in box"), r));
                    total += r;
                }
            }
            rows.push(row);
            exit.push(total);
        }
        SparseGenerator { rows, exit }
    }

    /// Whether every jump is `±e_0` in one dimension.
    pub fn is_birth_death(&self) -> bool {
        self.spec.dim() == 1 && self.jumps.iter().all(|j| j.offset[0].abs() == 1)
    }
}

/// Row-compressed truncated generator.
#[derive(Debug, Clone)]
pub struct SparseGenerator {
    pub rows: Vec<Vec<(usize, f64)>>,
    pub exit: Vec<f64>,
}

impl SparseGenerator {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// `(Qv)_i = Σ_j q_ij (v_j − v_i)`.
    pub fn apply(&self, v: &[f64], out: &mut [f64]) {
        for (i, row) in self.rows.iter().enumerate() {
            out[i] = row.iter().map(|&(j, r)| r * (v[j] - v[i])).sum();
        }
    }

    /// States reachable from `start` (forward when `forward`, else backward).
    pub fn reachable(&self, start: usize, forward: bool) -> Vec<bool> {
        let n = self.len();
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, _) in row {
                if forward {
                    adj[i].push(j);
                } else {
                    adj[j].push(i);
                }
            }
        }
        let mut seen = vec![false; n];
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(i) = stack.pop() {
            for &j in &adj[i] {
                if !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen
    }
}
