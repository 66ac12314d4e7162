//! The stochastic-approximation recursion
//! `X_{n+1} = X_n − β_n (G(X_n) + λ_n W_{n+1})`.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::NoiseModel;
use crate::norm::Norm;
use crate::problems::SaProblem;
use crate::schedules::{Multiplier, MultiplierState, Schedule};

/// Which states of a run are kept.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RecordPolicy {
    /// Every index, with iterates.
    Full,
    /// Every index, error norms only.
    #[default]
    ErrorsOnly,
    /// Every k-th index plus the last.
    Thinned { every: usize },
    /// The listed indices (and the last).
    Checkpoints { at: Vec<usize> },
}

impl RecordPolicy {
    pub fn validate(&self, horizon: usize) -> Result<()> {
        match self {
            RecordPolicy::Thinned { every } if *every == 0 => Err(Error::invalid("every", "must be at least 1")),
            RecordPolicy::Checkpoints { at } => {
                if at.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(Error::invalid("checkpoints", "must be strictly increasing"));
                }
                if at.last().is_some_and(|&n| n > horizon) {
                    return Err(Error::invalid("checkpoints", format!("must not exceed the horizon {horizon}")));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn keeps_iterates(&self) -> bool {
        matches!(self, RecordPolicy::Full)
    }

    pub(crate) fn wants(&self, n: usize, horizon: usize, cursor: &mut usize) -> bool {
        if n == horizon {
            return true;
        }
        match self {
            RecordPolicy::Full | RecordPolicy::ErrorsOnly => true,
            RecordPolicy::Thinned { every } => n.is_multiple_of(*every),
            RecordPolicy::Checkpoints { at } => {
                while *cursor < at.len() && at[*cursor] < n {
                    *cursor += 1;
                }
                *cursor < at.len() && at[*cursor] == n
            }
        }
    }
}

/// State of a run at index `n`, with the quantities used to step from it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub n: usize,
    /// `β_n` (or `η_n`).
    pub step: f64,
    /// `c_n` for zeroth-order runs.
    pub increment: Option<f64>,
    /// Active coordinates at step `n` for zeroth-order runs.
    pub active: Option<usize>,
    /// `‖X_n − x*‖` in the problem norm.
    pub err: f64,
    /// `1 + max_{k ≤ n} ‖X_k‖`.
    pub phi: f64,
    /// `λ_n`; absent at the final index, where no step is taken.
    pub lambda: Option<f64>,
    pub x: Option<Vec<f64>>,
}

/// One seeded run.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub run_id: u64,
    pub seed: u64,
    pub horizon: usize,
    pub records: Vec<StepRecord>,
    /// Last finite iterate.
    pub final_state: Vec<f64>,
    /// Index of `final_state`.
    pub final_n: usize,
    pub phi: f64,
    /// Set when an iterate became non-finite; the run stops there.
    pub diverged: bool,
    pub diverged_at: Option<usize>,
    /// Calls to `G` (or `F`).
    pub evaluations: u64,
    pub warnings: Vec<String>,
    pub wall_time: Duration,
}

impl Trajectory {
    pub fn final_error(&self) -> f64 {
        self.records.last().map_or(f64::NAN, |r| r.err)
    }

    /// Error recorded at index `n`, if any.
    pub fn error_at(&self, n: usize) -> Option<f64> {
        self.records.binary_search_by_key(&n, |r| r.n).ok().map(|i| self.records[i].err)
    }
}

#[derive(Clone, Debug)]
pub struct SaRunConfig {
    pub problem: SaProblem,
    pub schedule: Schedule,
    pub multiplier: Multiplier,
    pub noise: NoiseModel,
    pub seed: u64,
    pub x0: Vec<f64>,
    pub horizon: usize,
    pub record: RecordPolicy,
    pub run_id: u64,
}

impl SaRunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::invalid("horizon", "must be at least 1"));
        }
        if self.x0.len() != self.problem.dim() {
            return Err(Error::invalid("x0", format!("expected {} entries, got {}", self.problem.dim(), self.x0.len())));
        }
        if self.x0.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("x0", "must be finite"));
        }
        if self.noise.dim() != self.problem.dim() {
            return Err(Error::invalid("noise.dim", "must match the problem dimension"));
        }
        if self.multiplier.needs_history() && !self.record.keeps_iterates() {
            return Err(Error::invalid("multiplier", "history-dependent multipliers need the full record policy"));
        }
        self.schedule.validate()?;
        self.multiplier.validate()?;
        self.record.validate(self.horizon)
    }
}

/// `x − β (G(x) + λ w)` written into `out`; `g` is scratch space.
pub fn sa_step_into(problem: &SaProblem, x: &[f64], beta: f64, lambda: f64, w: &[f64], g: &mut [f64], out: &mut [f64]) {
    problem.eval_into(x, g);
    for i in 0..x.len() {
        out[i] = x[i] - beta * (g[i] + lambda * w[i]);
    }
}

pub fn sa_step(problem: &SaProblem, x: &[f64], beta: f64, lambda: f64, w: &[f64]) -> Vec<f64> {
    let mut g = vec![0.0; x.len()];
    let mut out = vec![0.0; x.len()];
    sa_step_into(problem, x, beta, lambda, w, &mut g, &mut out);
    out
}

pub fn sa_run(cfg: &SaRunConfig) -> Result<Trajectory> {
    cfg.validate()?;
    let start = Instant::now();
    let d = cfg.problem.dim();
    let norm = cfg.problem.norm();
    let keep_x = cfg.record.keeps_iterates();
    let mut stream = cfg.noise.stream(cfg.seed);
    let mut mult = MultiplierState::new(cfg.multiplier.clone());
    let (mut x, mut next) = (cfg.x0.clone(), vec![0.0; d]);
    let (mut w, mut g) = (vec![0.0; d], vec![0.0; d]);
    let mut max_norm = norm.of(&x);
    let mut records = Vec::new();
    let mut cursor = 0;
    let mut evaluations = 0;
    let mut diverged_at = None;
    let mut n = 0;
    while n < cfg.horizon {
        mult.observe(&x);
        let lambda = mult.value();
        stream.fill_sa_noise(&mut w);
        let beta = cfg.schedule.eval(n);
        if cfg.record.wants(n, cfg.horizon, &mut cursor) {
            records.push(StepRecord {
                n,
                step: beta,
                increment: None,
                active: None,
                err: cfg.problem.error(&x),
                phi: 1.0 + max_norm,
                lambda: Some(lambda),
                x: keep_x.then(|| x.clone()),
            });
        }
        sa_step_into(&cfg.problem, &x, beta, lambda, &w, &mut g, &mut next);
        evaluations += 1;
        if next.iter().any(|v| !v.is_finite()) {
            diverged_at = Some(n + 1);
            break;
        }
        std::mem::swap(&mut x, &mut next);
        max_norm = max_norm.max(norm.of(&x));
        n += 1;
    }
    if diverged_at.is_none() {
        records.push(StepRecord {
            n,
            step: cfg.schedule.eval(n),
            increment: None,
            active: None,
            err: cfg.problem.error(&x),
            phi: 1.0 + max_norm,
            lambda: None,
            x: keep_x.then(|| x.clone()),
        });
    }
    Ok(Trajectory {
        run_id: cfg.run_id,
        seed: cfg.seed,
        horizon: cfg.horizon,
        records,
        final_state: x,
        final_n: n,
        phi: 1.0 + max_norm,
        diverged: diverged_at.is_some(),
        diverged_at,
        evaluations,
        warnings: Vec::new(),
        wall_time: start.elapsed(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct AuditOutcome {
    pub passed: bool,
    /// First index with `|λ_n| > C₁ (1 + max_{k≤n} ‖X_k‖)`.
    pub first_violation: Option<usize>,
    /// Largest `|λ_n| / (C₁ (1 + max ‖X_k‖))` seen.
    pub max_ratio: f64,
}

/// Replays the recorded `λ_n` against `C₁ (1 + max_{k≤n} ‖X_k‖)`.
pub fn multiplier_audit(traj: &Trajectory, c1: f64, norm: Norm) -> Result<AuditOutcome> {
    let mut max_norm = 0.0f64;
    let mut max_ratio = 0.0f64;
    let mut first_violation = None;
    for (k, r) in traj.records.iter().enumerate() {
        let x = r.x.as_ref().filter(|_| r.n == k).ok_or_else(|| {
            Error::Unsupported("multiplier audit needs a trajectory recorded with the full policy".into())
        })?;
        max_norm = max_norm.max(norm.of(x));
        if let Some(lambda) = r.lambda {
            let bound = c1 * (1.0 + max_norm);
            max_ratio = max_ratio.max(lambda.abs() / bound);
            if lambda.abs() > bound && first_violation.is_none() {
                first_violation = Some(r.n);
            }
        }
    }
    Ok(AuditOutcome { passed: first_violation.is_none(), first_violation, max_ratio })
}
