//! Seeded parallel experiment execution, persistence and summaries.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::conditions::{check_a1, check_g_numeric, check_h, check_k, kwb_report, rm_report, ConditionReport, Verdict};
use crate::config::{ExperimentConfig, Mode, OutputFormat};
use crate::error::{Error, Result};
use crate::gslln::{gslln_empirical_test, lower_quantile, GsllnTestSpec};
use crate::sa_engine::{sa_run, RecordPolicy, SaRunConfig, Trajectory};
use crate::sgd_engine::{sgd_run, SgdRunConfig};

/// Seed of trial `i`.
pub fn trial_seed(base_seed: u64, trial: usize) -> u64 {
    base_seed ^ trial as u64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SaRow {
    pub experiment_id: String,
    pub trial: usize,
    pub seed: u64,
    pub checkpoint_n: usize,
    pub err: f64,
    pub phi_n: f64,
    pub diverged: bool,
    pub beta_n: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SgdRow {
    pub experiment_id: String,
    pub trial: usize,
    pub seed: u64,
    pub checkpoint_n: usize,
    pub err: f64,
    pub phi_n: f64,
    pub diverged: bool,
    pub eta_n: f64,
    /// Empty at the horizon, where no step is taken.
    pub c_n: Option<f64>,
    pub active_count: Option<usize>,
}

/// One `|S_n|` observation; `err` repeats `abs_S` and `phi_n` is empty.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GsllnDataRow {
    pub experiment_id: String,
    pub trial: usize,
    pub seed: u64,
    pub checkpoint_n: usize,
    pub err: f64,
    pub phi_n: Option<f64>,
    pub diverged: bool,
    pub cell: usize,
    pub t: f64,
    pub zeta_policy: String,
    #[serde(rename = "abs_S")]
    pub abs_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionRow {
    pub experiment_id: String,
    pub family: String,
    pub verdict: Verdict,
    pub clause: Option<String>,
    pub value: Option<f64>,
}

/// Fields the summary is computed from.
pub trait DataRow {
    fn cell(&self) -> Option<usize>;
    fn trial(&self) -> usize;
    fn checkpoint(&self) -> usize;
    fn err(&self) -> f64;
    fn diverged(&self) -> bool;
}

macro_rules! data_row {
    ($t:ty, $cell:expr) => {
        impl DataRow for $t {
            fn cell(&self) -> Option<usize> {
                #[allow(clippy::redundant_closure_call)]
                ($cell)(self)
            }
            fn trial(&self) -> usize {
                self.trial
            }
            fn checkpoint(&self) -> usize {
                self.checkpoint_n
            }
            fn err(&self) -> f64 {
                self.err
            }
            fn diverged(&self) -> bool {
                self.diverged
            }
        }
    };
}

data_row!(SaRow, |_: &SaRow| None);
data_row!(SgdRow, |_: &SgdRow| None);
data_row!(GsllnDataRow, |r: &GsllnDataRow| Some(r.cell));

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointSummary {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub cell: Option<usize>,
    pub n: usize,
    /// Non-diverged runs contributing to the quantiles.
    pub count: usize,
    pub q10: Option<f64>,
    pub q50: Option<f64>,
    pub q90: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRecord {
    pub experiment_id: String,
    /// Distinct runs (trials, or trial × cell for gslln).
    pub runs: usize,
    /// Runs flagged as diverged; excluded from the quantiles.
    pub diverged: usize,
    pub checkpoints: Vec<CheckpointSummary>,
    pub wall_time_s: f64,
    pub config_hash: String,
    /// Mode-specific details (verdicts, evaluation counts, condition reports).
    #[serde(default)]
    pub extra: serde_json::Value,
}

impl SummaryRecord {
    /// Checkpoint summaries of `cell` (`None` outside gslln mode).
    pub fn series(&self, cell: Option<usize>) -> impl Iterator<Item = &CheckpointSummary> {
        self.checkpoints.iter().filter(move |c| c.cell == cell)
    }

    pub fn median_at(&self, cell: Option<usize>, n: usize) -> Option<f64> {
        self.series(cell).find(|c| c.n == n).and_then(|c| c.q50)
    }

    pub fn cells(&self) -> Vec<Option<usize>> {
        self.checkpoints.iter().map(|c| c.cell).collect::<BTreeSet<_>>().into_iter().collect()
    }

    /// Same data, ignoring wall time, hash and mode-specific details.
    pub fn same_statistics(&self, other: &SummaryRecord) -> bool {
        self.experiment_id == other.experiment_id
            && self.runs == other.runs
            && self.diverged == other.diverged
            && self.checkpoints == other.checkpoints
    }
}

/// Per-checkpoint 10/50/90% quantiles (lower order statistics) over runs
/// not flagged as diverged, with the number of flagged runs.
pub fn summarize<R: DataRow>(experiment_id: &str, rows: &[R]) -> Result<SummaryRecord> {
    if rows.is_empty() {
        return Err(Error::invalid("rows", "cannot summarise an empty experiment"));
    }
    let mut runs: BTreeMap<(Option<usize>, usize), bool> = BTreeMap::new();
    for r in rows {
        *runs.entry((r.cell(), r.trial())).or_insert(false) |= r.diverged();
    }
    let mut groups: BTreeMap<(Option<usize>, usize), Vec<f64>> = BTreeMap::new();
    for r in rows {
        let values = groups.entry((r.cell(), r.checkpoint())).or_default();
        if !runs[&(r.cell(), r.trial())] {
            values.push(r.err());
        }
    }
    let checkpoints = groups
        .into_iter()
        .map(|((cell, n), mut v)| {
            v.sort_by(f64::total_cmp);
            let q = |p| (!v.is_empty()).then(|| lower_quantile(&v, p));
            CheckpointSummary { cell, n, count: v.len(), q10: q(0.1), q50: q(0.5), q90: q(0.9) }
        })
        .collect();
    Ok(SummaryRecord {
        experiment_id: experiment_id.to_string(),
        runs: runs.len(),
        diverged: runs.values().filter(|&&d| d).count(),
        checkpoints,
        wall_time_s: 0.0,
        config_hash: String::new(),
        extra: serde_json::Value::Null,
    })
}

/// Rows of one experiment, typed by mode.
#[derive(Clone, Debug, PartialEq)]
pub enum Rows {
    Sa(Vec<SaRow>),
    Sgd(Vec<SgdRow>),
    Gslln(Vec<GsllnDataRow>),
    Conditions(Vec<ConditionRow>),
}

impl Rows {
    pub fn len(&self) -> usize {
        match self {
            Rows::Sa(r) => r.len(),
            Rows::Sgd(r) => r.len(),
            Rows::Gslln(r) => r.len(),
            Rows::Conditions(r) => r.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn summarize(&self, id: &str) -> Result<SummaryRecord> {
        match self {
            Rows::Sa(r) => summarize(id, r),
            Rows::Sgd(r) => summarize(id, r),
            Rows::Gslln(r) => summarize(id, r),
            Rows::Conditions(_) => Ok(SummaryRecord {
                experiment_id: id.to_string(),
                runs: 0,
                diverged: 0,
                checkpoints: Vec::new(),
                wall_time_s: 0.0,
                config_hash: String::new(),
                extra: serde_json::Value::Null,
            }),
        }
    }

    /// Serialised rows in `format`.
    pub fn to_bytes(&self, format: OutputFormat) -> Result<Vec<u8>> {
        match self {
            Rows::Sa(r) => encode(r, format),
            Rows::Sgd(r) => encode(r, format),
            Rows::Gslln(r) => encode(r, format),
            Rows::Conditions(r) => encode(r, format),
        }
    }
}

fn encode<T: Serialize>(rows: &[T], format: OutputFormat) -> Result<Vec<u8>> {
    match format {
        OutputFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            for r in rows {
                w.serialize(r)?;
            }
            w.into_inner().map_err(|e| Error::Io(e.into_error()))
        }
        OutputFormat::Jsonl => {
            let mut out = Vec::new();
            for r in rows {
                serde_json::to_writer(&mut out, r)?;
                out.push(b'\n');
            }
            Ok(out)
        }
    }
}

/// Reads rows written by [`write_outputs`].
pub fn read_rows<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let bytes = fs::read(path)?;
    if path.extension().is_some_and(|e| e == "jsonl") {
        return bytes
            .split(|&b| b == b'\n')
            .filter(|l| !l.is_empty())
            .map(|l| serde_json::from_slice(l).map_err(Error::from))
            .collect();
    }
    csv::Reader::from_reader(bytes.as_slice()).deserialize().map(|r| r.map_err(Error::from)).collect()
}

/// Outcome of one experiment.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub config: ExperimentConfig,
    pub rows: Rows,
    pub summary: SummaryRecord,
    pub reports: Vec<ConditionReport>,
}

fn trials_in_pool<T: Send>(workers: Option<usize>, job: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(job()),
        Some(0) => Err(Error::invalid("workers", "must be at least 1")),
        Some(w) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(w)
                .build()
                .map_err(|e| Error::Unsupported(format!("thread pool: {e}")))?;
            Ok(pool.install(job))
        }
    }
}

fn checkpoint_rows<R>(traj: &Trajectory, checkpoints: &[usize], mut make: impl FnMut(&crate::sa_engine::StepRecord, bool) -> R) -> Vec<R> {
    traj.records.iter().filter(|r| checkpoints.binary_search(&r.n).is_ok()).map(|r| make(r, traj.diverged)).collect()
}

fn run_sa(cfg: &ExperimentConfig) -> Result<(Rows, serde_json::Value)> {
    let spec = cfg.problem.as_ref().expect("resolved");
    let base = SaRunConfig {
        problem: spec.build_sa()?,
        schedule: cfg.schedule.clone().expect("resolved"),
        multiplier: cfg.multiplier.clone().expect("resolved"),
        noise: cfg.noise_model()?,
        seed: 0,
        x0: cfg.x0.clone().expect("resolved"),
        horizon: cfg.horizon(),
        record: RecordPolicy::Checkpoints { at: cfg.checkpoints.clone() },
        run_id: 0,
    };
    let trajs: Vec<Trajectory> = (0..cfg.trials)
        .into_par_iter()
        .map(|trial| {
            let mut c = base.clone();
            c.seed = trial_seed(cfg.base_seed, trial);
            c.run_id = trial as u64;
            sa_run(&c)
        })
        .collect::<Result<_>>()?;
    let rows = trajs
        .iter()
        .enumerate()
        .flat_map(|(trial, t)| {
            checkpoint_rows(t, &cfg.checkpoints, |r, diverged| SaRow {
                experiment_id: cfg.id.clone(),
                trial,
                seed: t.seed,
                checkpoint_n: r.n,
                err: r.err,
                phi_n: r.phi,
                diverged,
                beta_n: r.step,
            })
        })
        .collect();
    Ok((Rows::Sa(rows), engine_extra(&trajs)))
}

fn engine_extra(trajs: &[Trajectory]) -> serde_json::Value {
    let diverged_at: Vec<(usize, usize)> =
        trajs.iter().enumerate().filter_map(|(i, t)| t.diverged_at.map(|n| (i, n))).collect();
    let warnings: BTreeSet<&String> = trajs.iter().flat_map(|t| &t.warnings).collect();
    serde_json::json!({
        "evaluations_per_trial": trajs.iter().map(|t| t.evaluations).collect::<Vec<_>>(),
        "diverged_at": diverged_at,
        "warnings": warnings,
    })
}

fn run_sgd(cfg: &ExperimentConfig) -> Result<(Rows, serde_json::Value)> {
    let spec = cfg.problem.as_ref().expect("resolved");
    let base = SgdRunConfig {
        problem: spec.build_sgd()?,
        eta: cfg.eta.clone().expect("resolved"),
        c: cfg.c.clone().expect("resolved"),
        mask: cfg.mask.clone().expect("resolved"),
        multiplier: cfg.multiplier.clone().expect("resolved"),
        noise: cfg.noise_model()?,
        seed: 0,
        y0: cfg.x0.clone().expect("resolved"),
        horizon: cfg.horizon(),
        record: RecordPolicy::Checkpoints { at: cfg.checkpoints.clone() },
        run_id: 0,
    };
    let trajs: Vec<Trajectory> = (0..cfg.trials)
        .into_par_iter()
        .map(|trial| {
            let mut c = base.clone();
            c.seed = trial_seed(cfg.base_seed, trial);
            c.run_id = trial as u64;
            sgd_run(&c)
        })
        .collect::<Result<_>>()?;
    let rows = trajs
        .iter()
        .enumerate()
        .flat_map(|(trial, t)| {
            checkpoint_rows(t, &cfg.checkpoints, |r, diverged| SgdRow {
                experiment_id: cfg.id.clone(),
                trial,
                seed: t.seed,
                checkpoint_n: r.n,
                err: r.err,
                phi_n: r.phi,
                diverged,
                eta_n: r.step,
                c_n: r.increment,
                active_count: r.active,
            })
        })
        .collect();
    Ok((Rows::Sgd(rows), engine_extra(&trajs)))
}

fn run_gslln(cfg: &ExperimentConfig) -> Result<(Rows, serde_json::Value)> {
    let spec = GsllnTestSpec {
        noise: cfg.noise_model()?,
        rate: cfg.schedule.clone().expect("resolved"),
        t_grid: cfg.t_grid.clone().expect("resolved"),
        zeta_policies: cfg.zeta_policies.clone().expect("resolved"),
        trials: cfg.trials,
        horizon: cfg.horizon(),
        checkpoints: cfg.checkpoints.clone(),
        threshold: cfg.threshold.expect("resolved"),
        base_seed: cfg.base_seed,
    };
    let report = gslln_empirical_test(&spec)?;
    let rows = report
        .rows
        .iter()
        .map(|r| GsllnDataRow {
            experiment_id: cfg.id.clone(),
            trial: r.trial,
            seed: r.seed,
            checkpoint_n: r.n,
            err: r.abs_s,
            phi_n: None,
            diverged: !r.abs_s.is_finite(),
            cell: r.cell,
            t: r.t,
            zeta_policy: r.zeta_policy.clone(),
            abs_s: r.abs_s,
        })
        .collect();
    let cells: Vec<serde_json::Value> = report
        .cells
        .iter()
        .map(|c| {
            serde_json::json!({
                "cell": c.cell, "t": c.t, "zeta_policy": c.zeta_policy,
                "verdict": c.verdict, "tail_sup_median": c.tail_sup_median,
            })
        })
        .collect();
    Ok((Rows::Gslln(rows), serde_json::json!({ "cells": cells })))
}

/// Condition reports for a conditions-mode config.
pub fn condition_reports(cfg: &ExperimentConfig) -> Result<Vec<ConditionReport>> {
    let model = cfg.noise_model()?;
    let mut out = Vec::new();
    if let Some(rate) = &cfg.schedule {
        out.push(rm_report(rate, 1_000_000));
        out.extend(check_h(&model, rate));
        if let Some(scheme) = cfg.truncation {
            out.push(check_g_numeric(&model, rate, scheme, cfg.horizon())?.report);
        }
    }
    if let (Some(eta), Some(c)) = (&cfg.eta, &cfg.c) {
        out.push(check_a1(eta, c));
        out.push(kwb_report(eta, c, 1_000_000));
        out.extend(check_k(&model, eta, c));
    }
    Ok(out)
}

fn run_conditions(cfg: &ExperimentConfig) -> Result<(Rows, Vec<ConditionReport>, serde_json::Value)> {
    let reports = condition_reports(cfg)?;
    let rows = reports
        .iter()
        .map(|r| ConditionRow {
            experiment_id: cfg.id.clone(),
            family: r.family.clone(),
            verdict: r.verdict,
            clause: r.clause.clone(),
            value: r.clause.as_deref().and_then(|c| r.evidence(c)).map(|e| e.value),
        })
        .collect();
    let extra = serde_json::to_value(&reports)?;
    Ok((Rows::Conditions(rows), reports, serde_json::json!({ "reports": extra })))
}

/// Runs a resolved, non-sweep config with `workers` threads (the global
/// pool if `None`). Trial `i` uses seed `base_seed ^ i`; rows are ordered
/// by trial whatever the worker count.
pub fn run_experiment(cfg: &ExperimentConfig, workers: Option<usize>) -> Result<RunOutput> {
    let start = Instant::now();
    let (rows, reports, extra) = trials_in_pool(workers, || -> Result<_> {
        Ok(match cfg.mode() {
            Mode::Sa => {
                let (r, e) = run_sa(cfg)?;
                (r, Vec::new(), e)
            }
            Mode::Sgd => {
                let (r, e) = run_sgd(cfg)?;
                (r, Vec::new(), e)
            }
            Mode::Gslln => {
                let (r, e) = run_gslln(cfg)?;
                (r, Vec::new(), e)
            }
            Mode::Conditions => run_conditions(cfg)?,
            Mode::Sweep => return Err(Error::Unsupported("sweeps run through run_sweep".into())),
        })
    })??;
    let mut summary = rows.summarize(&cfg.id)?;
    summary.wall_time_s = start.elapsed().as_secs_f64();
    summary.config_hash = cfg.hash();
    summary.extra = extra;
    Ok(RunOutput { config: cfg.clone(), rows, summary, reports })
}

/// Paths written for one experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputPaths {
    pub rows: PathBuf,
    pub summary: PathBuf,
}

fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension(format!("{}.tmp", path.extension().and_then(|e| e.to_str()).unwrap_or("")));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

pub fn partial_marker(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.PARTIAL"))
}

/// Writes `<id>.rows.<ext>` and `<id>.summary.json` (each via a temporary
/// file and a rename). On failure a `<id>.PARTIAL` marker holding the
/// error is left behind.
pub fn write_outputs(out: &RunOutput, dir: &Path, format: OutputFormat) -> Result<OutputPaths> {
    let id = &out.config.id;
    let paths = OutputPaths {
        rows: dir.join(format!("{id}.rows.{}", format.extension())),
        summary: dir.join(format!("{id}.summary.json")),
    };
    let result = (|| -> Result<()> {
        fs::create_dir_all(dir)?;
        write_atomic(&paths.rows, &out.rows.to_bytes(format)?)?;
        let summary = serde_json::json!({ "summary": out.summary, "config": out.config });
        write_atomic(&paths.summary, &serde_json::to_vec_pretty(&summary)?)?;
        Ok(())
    })();
    let marker = partial_marker(dir, id);
    match result {
        Ok(()) => {
            if marker.exists() {
                fs::remove_file(&marker)?;
            }
            Ok(paths)
        }
        Err(e) => {
            let _ = fs::write(&marker, format!("{e}\n"));
            Err(e)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub id: String,
    pub value: serde_json::Value,
    pub config_hash: String,
    pub rows: PathBuf,
    pub summary: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepIndex {
    pub sweep_id: String,
    pub parameter: String,
    pub children: Vec<SweepEntry>,
}

/// Runs every child of a sweep, writes their outputs and the joint
/// `<id>.index.json`.
pub fn run_sweep(
    cfg: &ExperimentConfig,
    workers: Option<usize>,
    dir: &Path,
    format: OutputFormat,
) -> Result<(SweepIndex, Vec<RunOutput>)> {
    let mut children = Vec::new();
    let mut outputs = Vec::new();
    for (child, value) in cfg.sweep_children()?.into_iter().zip(&cfg.values) {
        let out = run_experiment(&child, workers)?;
        let paths = write_outputs(&out, dir, format)?;
        children.push(SweepEntry {
            id: child.id.clone(),
            value: value.clone(),
            config_hash: out.summary.config_hash.clone(),
            rows: paths.rows,
            summary: paths.summary,
        });
        outputs.push(out);
    }
    let index = SweepIndex { sweep_id: cfg.id.clone(), parameter: cfg.parameter.clone().unwrap_or_default(), children };
    write_atomic(&dir.join(format!("{}.index.json", cfg.id)), &serde_json::to_vec_pretty(&index)?).map_err(|e| {
        let _ = fs::write(partial_marker(dir, &cfg.id), format!("{e}\n"));
        Error::Io(e)
    })?;
    Ok((index, outputs))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssertionOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Evaluates the config's `assert` block against a finished run. Median
/// checks apply to every cell.
pub fn check_assertions(out: &RunOutput) -> Vec<AssertionOutcome> {
    let Some(a) = &out.config.assertions else {
        return Vec::new();
    };
    let s = &out.summary;
    let mut res = Vec::new();
    let mut push = |name: String, passed: bool, detail: String| res.push(AssertionOutcome { name, passed, detail });
    if let Some(max) = a.max_diverged {
        push("max_diverged".into(), s.diverged <= max, format!("{} diverged runs (limit {max})", s.diverged));
    }
    let horizon = out.config.horizon();
    for cell in s.cells() {
        let tag = cell.map(|c| format!(" [cell {c}]")).unwrap_or_default();
        let med = |n| s.median_at(cell, n);
        if let Some(r) = a.median_ratio {
            let (m0, m1) = (med(r.from), med(r.to));
            let ratio = match (m0, m1) {
                (Some(a), Some(b)) => a / b,
                _ => f64::NAN,
            };
            push(
                format!("median_ratio{tag}"),
                ratio >= r.at_least,
                format!("median({}) / median({}) = {ratio:.4} (need >= {})", r.from, r.to, r.at_least),
            );
        }
        if let Some(sp) = a.median_decreases {
            let (m0, m1) = (med(sp.from), med(sp.to));
            let ok = matches!((m0, m1), (Some(a), Some(b)) if b < a);
            push(format!("median_decreases{tag}"), ok, format!("median({}) = {m0:?}, median({}) = {m1:?}", sp.from, sp.to));
        }
        if let Some(lim) = a.final_median_at_most {
            let m = med(horizon);
            push(format!("final_median_at_most{tag}"), m.is_some_and(|m| m <= lim), format!("median({horizon}) = {m:?} (limit {lim})"));
        }
        if let Some(lim) = a.final_median_above {
            let m = med(horizon);
            push(format!("final_median_above{tag}"), m.is_some_and(|m| m > lim), format!("median({horizon}) = {m:?} (must exceed {lim})"));
        }
    }
    for (names, want) in [(&a.holds, Verdict::Holds), (&a.fails, Verdict::Fails)] {
        for f in names {
            let got = out.reports.iter().find(|r| &r.family == f).map(|r| r.verdict);
            push(format!("{f} {want:?}").to_lowercase(), got == Some(want), format!("{f}: {got:?}"));
        }
    }
    res
}
