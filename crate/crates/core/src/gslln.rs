//! Empirical harness for the generalized strong law of large numbers:
//! `S_{n+1} = (1 − tβ_n) S_n + tβ_n ζ_n W_{n+1}` should tend to zero for
//! every `t > 0` and every bounded adapted `ζ`.
//!
//! Also hosts two deterministic oracles: the Kronecker-type recursion
//! `s_{n+1} = (1 − τ_n)s_n + τ_n z_{n+1}` and the logarithmic inequality
//! `x/(ln(1+x))^δ ≤ y ⇒ ln(1+x) ≤ 3 ln(1+y)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::NoiseModel;
use crate::norm::Norm;
use crate::schedules::Schedule;

pub fn gslln_step_into(s: &mut [f64], t: f64, beta: f64, zeta: f64, w: &[f64]) {
    let keep = 1.0 - t * beta;
    let gain = t * beta * zeta;
    for (si, wi) in s.iter_mut().zip(w) {
        *si = keep * *si + gain * wi;
    }
}

pub fn gslln_step(s: &[f64], t: f64, beta: f64, zeta: f64, w: &[f64]) -> Vec<f64> {
    let mut out = s.to_vec();
    gslln_step_into(&mut out, t, beta, zeta, w);
    out
}

/// Bounded sequence `ζ_n` computed from past draws only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ZetaPolicy {
    Constant { value: f64 },
    /// `C (−1)^n`.
    SignedBounded { bound: f64 },
    /// Sign of the first coordinate of `W_n` (`+1` at `n = 0`).
    NoiseSign,
}

impl ZetaPolicy {
    pub fn bound(&self) -> f64 {
        match self {
            ZetaPolicy::Constant { value } => value.abs(),
            ZetaPolicy::SignedBounded { bound } => bound.abs(),
            ZetaPolicy::NoiseSign => 1.0,
        }
    }

    pub fn label(&self) -> String {
        match self {
            ZetaPolicy::Constant { value } => format!("constant({value})"),
            ZetaPolicy::SignedBounded { bound } => format!("signed({bound})"),
            ZetaPolicy::NoiseSign => "noise_sign".into(),
        }
    }

    /// `ζ_n` given `W_n` (absent at `n = 0`).
    pub fn value(&self, n: usize, prev_w: Option<&[f64]>) -> f64 {
        match self {
            ZetaPolicy::Constant { value } => *value,
            ZetaPolicy::SignedBounded { bound } => {
                if n.is_multiple_of(2) {
                    *bound
                } else {
                    -bound
                }
            }
            ZetaPolicy::NoiseSign => match prev_w {
                Some(w) if w[0] < 0.0 => -1.0,
                _ => 1.0,
            },
        }
    }
}

pub fn default_t_grid() -> Vec<f64> {
    vec![0.5, 1.0, 2.0, 5.0]
}

fn default_threshold() -> f64 {
    0.02
}

#[derive(Clone, Debug)]
pub struct GsllnTestSpec {
    pub noise: NoiseModel,
    pub rate: Schedule,
    pub t_grid: Vec<f64>,
    pub zeta_policies: Vec<ZetaPolicy>,
    pub trials: usize,
    pub horizon: usize,
    /// Indices at which `‖S_n‖` is recorded; the horizon is always added.
    pub checkpoints: Vec<usize>,
    /// Final-median threshold for the "consistent" verdict.
    pub threshold: f64,
    pub base_seed: u64,
}

impl GsllnTestSpec {
    pub fn new(noise: NoiseModel, rate: Schedule, horizon: usize) -> Self {
        GsllnTestSpec {
            noise,
            rate,
            t_grid: default_t_grid(),
            zeta_policies: vec![ZetaPolicy::Constant { value: 1.0 }],
            trials: 100,
            horizon,
            checkpoints: Vec::new(),
            threshold: default_threshold(),
            base_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::invalid("trials", "must be at least 1"));
        }
        if self.horizon == 0 {
            return Err(Error::invalid("horizon", "must be at least 1"));
        }
        if self.t_grid.is_empty() || self.t_grid.iter().any(|&t| !(t > 0.0 && t.is_finite())) {
            return Err(Error::invalid("t_grid", "must be a nonempty list of positive numbers"));
        }
        if self.zeta_policies.is_empty() {
            return Err(Error::invalid("zeta_policies", "must be nonempty"));
        }
        if self.checkpoints.windows(2).any(|w| w[0] >= w[1]) || self.checkpoints.last().is_some_and(|&n| n > self.horizon) {
            return Err(Error::invalid("checkpoints", "must be strictly increasing and not exceed the horizon"));
        }
        self.rate.validate()
    }

    fn checkpoint_list(&self) -> Vec<usize> {
        let mut c = self.checkpoints.clone();
        if c.last() != Some(&self.horizon) {
            c.push(self.horizon);
        }
        c
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
/// Per-cell verdict: inconsistent when the final median of `‖S_N‖`
/// exceeds the threshold, consistent when it is also below the median at
/// the first checkpoint, inconclusive otherwise.
#[serde(rename_all = "snake_case")]
pub enum GsllnVerdict {
    ConsistentWithGslln,
    Inconsistent,
    Inconclusive,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointQuantiles {
    pub n: usize,
    pub q10: f64,
    pub q50: f64,
    pub q90: f64,
}

/// One `(t, ζ, trial)` observation at a checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GsllnRow {
    pub cell: usize,
    pub t: f64,
    pub zeta_policy: String,
    pub trial: usize,
    pub seed: u64,
    pub n: usize,
    pub abs_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GsllnCell {
    pub cell: usize,
    pub t: f64,
    pub zeta_policy: String,
    pub checkpoints: Vec<CheckpointQuantiles>,
    /// Median across trials of `sup_{n ≥ N/2} ‖S_n‖`.
    pub tail_sup_median: f64,
    pub verdict: GsllnVerdict,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GsllnReport {
    pub cells: Vec<GsllnCell>,
    pub rows: Vec<GsllnRow>,
}

/// Order statistic `v[⌊q(m−1)⌋]` of a sorted slice.
pub fn lower_quantile(sorted: &[f64], q: f64) -> f64 {
    sorted[((q * (sorted.len() - 1) as f64).floor() as usize).min(sorted.len() - 1)]
}

struct TrialPath {
    at_checkpoints: Vec<f64>,
    tail_sup: f64,
}

fn run_trial(spec: &GsllnTestSpec, t: f64, zeta: &ZetaPolicy, seed: u64, checkpoints: &[usize]) -> TrialPath {
    let d = spec.noise.dim();
    let mut stream = spec.noise.stream(seed);
    let mut s = vec![0.0; d];
    let mut w = vec![0.0; d];
    let mut prev: Option<Vec<f64>> = None;
    let mut at_checkpoints = Vec::with_capacity(checkpoints.len());
    let mut next_cp = 0;
    let mut tail_sup = 0.0f64;
    let half = spec.horizon / 2;
    for n in 0..=spec.horizon {
        let size = Norm::L2.of(&s);
        if n >= half {
            tail_sup = tail_sup.max(size);
        }
        if next_cp < checkpoints.len() && checkpoints[next_cp] == n {
            at_checkpoints.push(size);
            next_cp += 1;
        }
        if n == spec.horizon {
            break;
        }
        let z = zeta.value(n, prev.as_deref());
        stream.fill_sa_noise(&mut w);
        gslln_step_into(&mut s, t, spec.rate.eval(n), z, &w);
        if matches!(zeta, ZetaPolicy::NoiseSign) {
            prev = Some(w.clone());
        }
    }
    TrialPath { at_checkpoints, tail_sup }
}

/// Runs every `(t, ζ)` cell over `trials` seeded trials (seed
/// `base_seed ^ trial`) in parallel on the current rayon pool.
pub fn gslln_empirical_test(spec: &GsllnTestSpec) -> Result<GsllnReport> {
    spec.validate()?;
    let checkpoints = spec.checkpoint_list();
    let mut cells = Vec::new();
    let mut rows = Vec::new();
    let grid: Vec<(f64, &ZetaPolicy)> =
        spec.t_grid.iter().flat_map(|&t| spec.zeta_policies.iter().map(move |z| (t, z))).collect();
    for (cell, (t, zeta)) in grid.into_iter().enumerate() {
        let paths: Vec<TrialPath> = (0..spec.trials)
            .into_par_iter()
            .map(|trial| run_trial(spec, t, zeta, spec.base_seed ^ trial as u64, &checkpoints))
            .collect();
        let label = zeta.label();
        for (trial, p) in paths.iter().enumerate() {
            for (k, &n) in checkpoints.iter().enumerate() {
                rows.push(GsllnRow {
                    cell,
                    t,
                    zeta_policy: label.clone(),
                    trial,
                    seed: spec.base_seed ^ trial as u64,
                    n,
                    abs_s: p.at_checkpoints[k],
                });
            }
        }
        let quantiles: Vec<CheckpointQuantiles> = checkpoints
            .iter()
            .enumerate()
            .map(|(k, &n)| {
                let mut v: Vec<f64> = paths.iter().map(|p| p.at_checkpoints[k]).collect();
                v.sort_by(f64::total_cmp);
                CheckpointQuantiles { n, q10: lower_quantile(&v, 0.1), q50: lower_quantile(&v, 0.5), q90: lower_quantile(&v, 0.9) }
            })
            .collect();
        let mut sups: Vec<f64> = paths.iter().map(|p| p.tail_sup).collect();
        sups.sort_by(f64::total_cmp);
        let final_median = quantiles.last().unwrap().q50;
        let first_median = quantiles[0].q50;
        let verdict = if !final_median.is_finite() || final_median > spec.threshold {
            GsllnVerdict::Inconsistent
        } else if final_median < first_median {
            GsllnVerdict::ConsistentWithGslln
        } else {
            GsllnVerdict::Inconclusive
        };
        cells.push(GsllnCell {
            cell,
            t,
            zeta_policy: label,
            checkpoints: quantiles,
            tail_sup_median: lower_quantile(&sups, 0.5),
            verdict,
        });
    }
    Ok(GsllnReport { cells, rows })
}

/// Result of the Kronecker-type recursion.
#[derive(Clone, Debug, PartialEq)]
pub struct KroneckerTrace {
    pub s_final: f64,
    /// `(n, s_n)` at the requested indices.
    pub trace: Vec<(usize, f64)>,
}

/// Runs `s_0 = 0`, `s_{n+1} = (1 − τ_n)s_n + τ_n z_{n+1}` to `n = horizon`.
pub fn kronecker_oracle(
    tau: impl Fn(usize) -> f64,
    z: impl Fn(usize) -> f64,
    horizon: usize,
    trace_at: &[usize],
) -> KroneckerTrace {
    let mut s = 0.0;
    let mut trace = Vec::new();
    let mut k = 0;
    for n in 0..=horizon {
        while k < trace_at.len() && trace_at[k] < n {
            k += 1;
        }
        if k < trace_at.len() && trace_at[k] == n {
            trace.push((n, s));
        }
        if n < horizon {
            let t = tau(n);
            s = (1.0 - t) * s + t * z(n + 1);
        }
    }
    KroneckerTrace { s_final: s, trace }
}

/// `∏_{j=m}^{n}(1 − τ_j) + Σ_{k=m}^{n} τ_k ∏_{j=k+1}^{n}(1 − τ_j) − 1`.
pub fn partition_of_unity_residual(tau: impl Fn(usize) -> f64, m: usize, n: usize) -> f64 {
    assert!(m <= n, "need m <= n");
    let mut tail = 1.0;
    let mut weights = 0.0;
    for k in (m..=n).rev() {
        weights += tau(k) * tail;
        tail *= 1.0 - tau(k);
    }
    tail + weights - 1.0
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LogInequality {
    /// The hypothesis `x/(ln(1+x))^δ ≤ y` is false.
    NotApplicable,
    /// `slack = 3 ln(1+y) − ln(1+x) ≥ 0`.
    Holds { slack: f64 },
    Violated { slack: f64 },
}

/// Checks `ln(1+x) ≤ 3 ln(1+y)` under `x/(ln(1+x))^δ ≤ y`. The hypothesis
/// is tested with relative tolerance `1e-12` so that `y` computed at the
/// boundary qualifies.
pub fn log_inequality_check(x: f64, y: f64, delta: f64) -> Result<LogInequality> {
    if !(x > 0.0) || !(y > 0.0) {
        return Err(Error::invalid("x", "x and y must be positive"));
    }
    if !(0.0..=1.0).contains(&delta) {
        return Err(Error::invalid("delta", format!("must lie in [0, 1], got {delta}")));
    }
    let lx = x.ln_1p();
    if x / lx.powf(delta) > y * (1.0 + 1e-12) {
        return Ok(LogInequality::NotApplicable);
    }
    let slack = 3.0 * y.ln_1p() - lx;
    Ok(if slack >= 0.0 { LogInequality::Holds { slack } } else { LogInequality::Violated { slack } })
}
