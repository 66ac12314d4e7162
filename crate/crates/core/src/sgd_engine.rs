//! Zeroth-order block-coordinate SGD with two-point central differences:
//! for each active coordinate `i`,
//! `Y_{n+1,i} = Y_{n,i} − η_n [(F(Y_n + c_n e_i) + ξ_n M'_{n+1,i}) − (F(Y_n − c_n e_i) + ξ_n M''_{n+1,i})] / (2c_n)`.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::{NoiseModel, NoiseStream};
use crate::norm::Norm;
use crate::problems::SgdProblem;
use crate::sa_engine::{RecordPolicy, StepRecord, Trajectory};
use crate::schedules::{IncrementSchedule, Multiplier, MultiplierState, Rate, Schedule};

fn default_gap() -> usize {
    8
}

/// Coordinate-selection rule `ψ_{n,i}`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MaskPolicy {
    #[default]
    AllOnes,
    /// Coordinates split into consecutive blocks of `bsz`; block `n mod B`
    /// is active at step `n`.
    RoundRobinBlocks { bsz: usize },
    /// `ψ_{n,i} = 1` iff the running parity of `#{k ≤ n : M_{k,i} > 0}` is
    /// odd, or coordinate `i` has been idle for `max_gap` steps.
    NoiseDriven {
        #[serde(default = "default_gap")]
        max_gap: usize,
    },
    /// The same row at every step.
    Fixed { active: Vec<bool> },
}

impl MaskPolicy {
    pub fn validate(&self, dim: usize) -> Result<()> {
        match self {
            MaskPolicy::RoundRobinBlocks { bsz } if *bsz == 0 => Err(Error::invalid("bsz", "must be at least 1")),
            MaskPolicy::NoiseDriven { max_gap } if *max_gap == 0 => Err(Error::invalid("max_gap", "must be at least 1")),
            MaskPolicy::Fixed { active } if active.len() != dim => {
                Err(Error::invalid("active", format!("expected {dim} entries, got {}", active.len())))
            }
            _ => Ok(()),
        }
    }

    fn blocks(bsz: usize, dim: usize) -> usize {
        dim.div_ceil(bsz)
    }
}

/// Per-run mask state; only the noise-driven rule carries history.
#[derive(Clone, Debug)]
pub struct MaskState {
    policy: MaskPolicy,
    parity: Vec<bool>,
    idle: Vec<usize>,
}

impl MaskState {
    pub fn new(policy: MaskPolicy, dim: usize) -> Self {
        MaskState { policy, parity: vec![true; dim], idle: vec![0; dim] }
    }

    /// Writes `ψ_n` into `row` and returns the number of active coordinates.
    pub fn row(&mut self, n: usize, row: &mut [bool]) -> usize {
        let d = row.len();
        match &self.policy {
            MaskPolicy::AllOnes => row.fill(true),
            MaskPolicy::RoundRobinBlocks { bsz } => {
                let block = n % MaskPolicy::blocks(*bsz, d);
                for (i, r) in row.iter_mut().enumerate() {
                    *r = i / bsz == block;
                }
            }
            MaskPolicy::NoiseDriven { max_gap } => {
                for ((r, &odd), idle) in row.iter_mut().zip(&self.parity).zip(&mut self.idle) {
                    *r = odd || *idle >= *max_gap;
                    *idle = if *r { 0 } else { *idle + 1 };
                }
            }
            MaskPolicy::Fixed { active } => row.copy_from_slice(active),
        }
        row.iter().filter(|&&a| a).count()
    }

    /// Feeds `M_{n+1}`, which the row at step `n + 1` may depend on.
    pub fn observe_noise(&mut self, m: &[f64]) {
        if matches!(self.policy, MaskPolicy::NoiseDriven { .. }) {
            for (p, &v) in self.parity.iter_mut().zip(m) {
                *p ^= v > 0.0;
            }
        }
    }
}

/// `(M' − M'') / (2c)`, the noise seen by the recursion.
pub fn effective_noise(m_plus: &[f64], m_minus: &[f64], c: f64) -> Vec<f64> {
    m_plus.iter().zip(m_minus).map(|(a, b)| (a - b) / (2.0 * c)).collect()
}

/// One step written into `out`; returns the number of `F` evaluations
/// (two per active coordinate). `probe` is scratch space.
#[allow(clippy::too_many_arguments)]
pub fn sgd_step_into(
    problem: &SgdProblem,
    y: &[f64],
    mask: &[bool],
    eta: f64,
    c: f64,
    xi: f64,
    m_plus: &[f64],
    m_minus: &[f64],
    probe: &mut [f64],
    out: &mut [f64],
) -> u64 {
    probe.copy_from_slice(y);
    out.copy_from_slice(y);
    let mut evals = 0;
    for i in 0..y.len() {
        if !mask[i] {
            continue;
        }
        probe[i] = y[i] + c;
        let f_plus = problem.objective(probe) + xi * m_plus[i];
        probe[i] = y[i] - c;
        let f_minus = problem.objective(probe) + xi * m_minus[i];
        probe[i] = y[i];
        evals += 2;
        out[i] = y[i] - eta * (f_plus - f_minus) / (2.0 * c);
    }
    evals
}

#[allow(clippy::too_many_arguments)]
pub fn sgd_step(
    problem: &SgdProblem,
    y: &[f64],
    mask: &[bool],
    eta: f64,
    c: f64,
    xi: f64,
    m_plus: &[f64],
    m_minus: &[f64],
) -> (Vec<f64>, u64) {
    let mut probe = vec![0.0; y.len()];
    let mut out = vec![0.0; y.len()];
    let evals = sgd_step_into(problem, y, mask, eta, c, xi, m_plus, m_minus, &mut probe, &mut out);
    (out, evals)
}

#[derive(Clone, Debug)]
pub struct SgdRunConfig {
    pub problem: SgdProblem,
    pub eta: Schedule,
    pub c: IncrementSchedule,
    pub mask: MaskPolicy,
    pub multiplier: Multiplier,
    pub noise: NoiseModel,
    pub seed: u64,
    pub y0: Vec<f64>,
    pub horizon: usize,
    pub record: RecordPolicy,
    pub run_id: u64,
}

impl SgdRunConfig {
    pub fn validate(&self) -> Result<()> {
        let d = self.problem.dim();
        if self.horizon == 0 {
            return Err(Error::invalid("horizon", "must be at least 1"));
        }
        if self.y0.len() != d {
            return Err(Error::invalid("y0", format!("expected {d} entries, got {}", self.y0.len())));
        }
        if self.y0.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("y0", "must be finite"));
        }
        if self.noise.dim() != d {
            return Err(Error::invalid("noise.dim", "must match the problem dimension"));
        }
        if self.multiplier.needs_history() && !self.record.keeps_iterates() {
            return Err(Error::invalid("multiplier", "history-dependent multipliers need the full record policy"));
        }
        self.eta.validate()?;
        self.c.validate()?;
        self.mask.validate(d)?;
        self.multiplier.validate()?;
        self.record.validate(self.horizon)
    }

    /// Warnings about increments outside the certified range.
    pub fn audit_increments(&self) -> Vec<String> {
        let Some(c_max) = self.problem.c_max() else {
            return vec![format!("problem `{}` is uncertified", self.problem.name())];
        };
        match (0..self.horizon).find(|&n| self.c.eval(n) <= c_max) {
            Some(0) => Vec::new(),
            Some(n0) => vec![format!("c_n exceeds c_max = {c_max} before n = {n0}")],
            None => vec![format!("c_n exceeds c_max = {c_max} over the whole horizon")],
        }
    }
}

pub fn sgd_run(cfg: &SgdRunConfig) -> Result<Trajectory> {
    cfg.validate()?;
    let start = Instant::now();
    let d = cfg.problem.dim();
    let keep_x = cfg.record.keeps_iterates();
    let mut stream = cfg.noise.stream(cfg.seed);
    let mut mult = MultiplierState::new(cfg.multiplier.clone());
    let mut mask = MaskState::new(cfg.mask.clone(), d);
    let (mut y, mut next, mut probe) = (cfg.y0.clone(), vec![0.0; d], vec![0.0; d]);
    let (mut m_plus, mut m_minus, mut m) = (vec![0.0; d], vec![0.0; d], vec![0.0; d]);
    let mut row = vec![false; d];
    let mut max_norm = Norm::LInf.of(&y);
    let mut records = Vec::new();
    let mut cursor = 0;
    let mut evaluations = 0;
    let mut diverged_at = None;
    let mut n = 0;
    while n < cfg.horizon {
        mult.observe(&y);
        let xi = mult.value();
        let active = mask.row(n, &mut row);
        stream.fill_sgd_noise_pair(&mut m_plus, &mut m_minus);
        let (eta, c) = (cfg.eta.eval(n), cfg.c.eval(n));
        if cfg.record.wants(n, cfg.horizon, &mut cursor) {
            records.push(StepRecord {
                n,
                step: eta,
                increment: Some(c),
                active: Some(active),
                err: cfg.problem.error(&y),
                phi: 1.0 + max_norm,
                lambda: Some(xi),
                x: keep_x.then(|| y.clone()),
            });
        }
        evaluations += sgd_step_into(&cfg.problem, &y, &row, eta, c, xi, &m_plus, &m_minus, &mut probe, &mut next);
        for i in 0..d {
            m[i] = 0.5 * (m_plus[i] - m_minus[i]);
        }
        mask.observe_noise(&m);
        if next.iter().any(|v| !v.is_finite()) {
            diverged_at = Some(n + 1);
            break;
        }
        std::mem::swap(&mut y, &mut next);
        max_norm = max_norm.max(Norm::LInf.of(&y));
        n += 1;
    }
    if diverged_at.is_none() {
        records.push(StepRecord {
            n,
            step: cfg.eta.eval(n),
            increment: Some(cfg.c.eval(n)),
            active: None,
            err: cfg.problem.error(&y),
            phi: 1.0 + max_norm,
            lambda: None,
            x: keep_x.then(|| y.clone()),
        });
    }
    Ok(Trajectory {
        run_id: cfg.run_id,
        seed: cfg.seed,
        horizon: cfg.horizon,
        records,
        final_state: y,
        final_n: n,
        phi: 1.0 + max_norm,
        diverged: diverged_at.is_some(),
        diverged_at,
        evaluations,
        warnings: cfg.audit_increments(),
        wall_time: start.elapsed(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskVerdict {
    /// `Σ_n ψ_{n,i} η_n = ∞`, decided analytically.
    Diverges,
    /// The sum is finite.
    Fails,
    /// Only empirical partial sums are available.
    Empirical,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MaskAudit {
    pub horizon: usize,
    /// Per coordinate, `Σ_{n<N} ψ_{n,i} η_n`.
    pub sums: Vec<f64>,
    pub verdicts: Vec<MaskVerdict>,
}

impl MaskAudit {
    pub fn all_diverge(&self) -> bool {
        self.verdicts.iter().all(|v| *v == MaskVerdict::Diverges)
    }
}

/// Partial sums of `ψ_{n,i} η_n` with a divergence verdict per coordinate.
///
/// Deterministic masks are active on arithmetic progressions `n ≡ k mod B`,
/// whose subsequence `η_{Bm+k}` has the same asymptotic exponents as `η`, so
/// the verdict is that of `Σ η_n`. Noise-driven masks need `replay`, a
/// noise model and seed to regenerate the row sequence, and only get
/// empirical verdicts.
pub fn mask_divergence_audit(
    mask: &MaskPolicy,
    eta: &Schedule,
    dim: usize,
    horizon: usize,
    replay: Option<(&NoiseModel, u64)>,
) -> Result<MaskAudit> {
    mask.validate(dim)?;
    let mut state = MaskState::new(mask.clone(), dim);
    let mut stream: Option<NoiseStream> = match mask {
        MaskPolicy::NoiseDriven { .. } => {
            let (model, seed) = replay
                .ok_or_else(|| Error::Unsupported("noise-driven masks can only be audited by replay".into()))?;
            Some(model.stream(seed))
        }
        _ => None,
    };
    let (mut a, mut b, mut m) = (vec![0.0; dim], vec![0.0; dim], vec![0.0; dim]);
    let mut row = vec![false; dim];
    let mut sums = vec![0.0; dim];
    for n in 0..horizon {
        state.row(n, &mut row);
        let e = eta.eval(n);
        for i in 0..dim {
            if row[i] {
                sums[i] += e;
            }
        }
        if let Some(s) = stream.as_mut() {
            s.fill_sgd_noise_pair(&mut a, &mut b);
            for i in 0..dim {
                m[i] = 0.5 * (a[i] - b[i]);
            }
            state.observe_noise(&m);
        }
    }
    let eta_diverges = !eta.asymptotic().series_converges();
    let verdicts = (0..dim)
        .map(|i| match mask {
            MaskPolicy::NoiseDriven { .. } => MaskVerdict::Empirical,
            MaskPolicy::Fixed { active } if !active[i] => MaskVerdict::Fails,
            _ if eta_diverges => MaskVerdict::Diverges,
            _ => MaskVerdict::Fails,
        })
        .collect();
    Ok(MaskAudit { horizon, sums, verdicts })
}
