//! Experiment configuration: strict JSON parsing, defaults and validation.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::conditions::TruncationScheme;
use crate::error::{Error, Result};
use crate::gslln::{default_t_grid, ZetaPolicy};
use crate::noise::{NoiseFamily, NoiseModel};
use crate::problems::{
    builtin_contraction, builtin_diagonal_quadratic, builtin_quartic, builtin_strongly_convex_quadratic, Mixing, SaProblem,
    SgdProblem,
};
use crate::schedules::{IncrementSchedule, Multiplier, Schedule};
use crate::sgd_engine::MaskPolicy;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Sa,
    Sgd,
    Gslln,
    Conditions,
    Sweep,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Sa => "sa",
            Mode::Sgd => "sgd",
            Mode::Gslln => "gslln",
            Mode::Conditions => "conditions",
            Mode::Sweep => "sweep",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Csv,
    Jsonl,
}

impl OutputFormat {
    pub fn extension(self) -> &'static str {
        match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Jsonl => "jsonl",
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default)]
    pub dir: Option<PathBuf>,
    #[serde(default)]
    pub format: OutputFormat,
}

/// Built-in test problems.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemSpec {
    Contraction {
        dim: usize,
        rho0: f64,
        #[serde(default)]
        target: Option<Vec<f64>>,
        #[serde(default)]
        mixing: Mixing,
    },
    /// `F(x) = ½ xᵀQx − pᵀx` with a dense symmetric positive definite `Q`.
    Quadratic { q: Vec<Vec<f64>>, p: Vec<f64> },
    DiagonalQuadratic { q: Vec<f64>, p: Vec<f64> },
    /// `Σ_i ½ q_i x_i² − p_i x_i + ε x_i⁴`, certified on a box.
    Quartic { q: Vec<f64>, p: Vec<f64>, epsilon: f64, box_radius: f64, c_max: f64 },
}

impl ProblemSpec {
    pub fn dim(&self) -> usize {
        match self {
            ProblemSpec::Contraction { dim, .. } => *dim,
            ProblemSpec::Quadratic { p, .. } | ProblemSpec::DiagonalQuadratic { p, .. } | ProblemSpec::Quartic { p, .. } => p.len(),
        }
    }

    fn quadratic(&self) -> Result<Option<crate::problems::Quadratic>> {
        match self {
            ProblemSpec::Quadratic { q, p } => {
                let d = p.len();
                if q.len() != d || q.iter().any(|r| r.len() != d) {
                    return Err(Error::invalid("q", format!("must be a {d}x{d} matrix")));
                }
                let m = nalgebra::DMatrix::from_fn(d, d, |i, j| q[i][j]);
                builtin_strongly_convex_quadratic(&m, p).map(Some)
            }
            ProblemSpec::DiagonalQuadratic { q, p } => builtin_diagonal_quadratic(q, p).map(Some),
            _ => Ok(None),
        }
    }

    pub fn build_sa(&self) -> Result<SaProblem> {
        if let ProblemSpec::Contraction { dim, rho0, target, mixing } = self {
            let target = target.clone().unwrap_or_else(|| vec![0.0; *dim]);
            return builtin_contraction(*dim, *rho0, &target, *mixing);
        }
        match self.quadratic()? {
            Some(q) => Ok(q.sa),
            None => Err(Error::invalid("kind", "quartic problems are only available in sgd mode")),
        }
    }

    pub fn build_sgd(&self) -> Result<SgdProblem> {
        if let ProblemSpec::Quartic { q, p, epsilon, box_radius, c_max } = self {
            return builtin_quartic(q, p, *epsilon, *box_radius, *c_max);
        }
        match self.quadratic()? {
            Some(q) => Ok(q.sgd),
            None => Err(Error::invalid("kind", "contraction problems are only available in sa mode")),
        }
    }
}

/// Checks evaluated by `--assert` after a run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Assertions {
    /// Largest admissible number of diverged runs.
    #[serde(default)]
    pub max_diverged: Option<usize>,
    /// `median(from) / median(to) ≥ at_least`.
    #[serde(default)]
    pub median_ratio: Option<MedianRatio>,
    /// `median(to) < median(from)`.
    #[serde(default)]
    pub median_decreases: Option<Span>,
    #[serde(default)]
    pub final_median_at_most: Option<f64>,
    #[serde(default)]
    pub final_median_above: Option<f64>,
    /// Condition families expected to hold.
    #[serde(default)]
    pub holds: Vec<String>,
    /// Condition families expected to fail.
    #[serde(default)]
    pub fails: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MedianRatio {
    pub from: usize,
    pub to: usize,
    pub at_least: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Span {
    pub from: usize,
    pub to: usize,
}

fn default_id() -> String {
    "experiment".into()
}

fn one() -> usize {
    1
}

/// One experiment. Blocks that the mode does not use must be absent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub mode: Option<Mode>,
    #[serde(default = "default_id")]
    pub id: String,
    #[serde(default = "one")]
    pub trials: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default)]
    pub horizon: Option<usize>,
    #[serde(default)]
    pub checkpoints: Vec<usize>,
    /// Noise dimension when there is no problem block.
    #[serde(default)]
    pub dim: Option<usize>,
    #[serde(default)]
    pub problem: Option<ProblemSpec>,
    #[serde(default)]
    pub noise: Option<NoiseFamily>,
    /// `β_n` (sa, gslln, conditions).
    #[serde(default)]
    pub schedule: Option<Schedule>,
    /// `η_n` (sgd, conditions).
    #[serde(default)]
    pub eta: Option<Schedule>,
    /// `c_n` (sgd, conditions).
    #[serde(default)]
    pub c: Option<IncrementSchedule>,
    #[serde(default)]
    pub mask: Option<MaskPolicy>,
    #[serde(default)]
    pub multiplier: Option<Multiplier>,
    /// Initial state; defaults to `x* + 1` in every coordinate.
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
    #[serde(default)]
    pub t_grid: Option<Vec<f64>>,
    #[serde(default)]
    pub zeta_policies: Option<Vec<ZetaPolicy>>,
    /// Final-median threshold of the gslln verdict.
    #[serde(default)]
    pub threshold: Option<f64>,
    #[serde(default)]
    pub truncation: Option<TruncationScheme>,
    /// Sweep: the experiment being varied.
    #[serde(default)]
    pub base: Option<serde_json::Value>,
    /// Sweep: dotted path of the varied field, e.g. `schedule.delta`.
    #[serde(default)]
    pub parameter: Option<String>,
    #[serde(default)]
    pub values: Vec<serde_json::Value>,
    #[serde(default)]
    pub output: OutputSpec,
    #[serde(default, rename = "assert")]
    pub assertions: Option<Assertions>,
}

/// Parses and validates a config whose text names its mode.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    parse_config_as(text, None)
}

/// Parses a config for `mode`; a config naming a different mode is rejected.
pub fn parse_config_as(text: &str, mode: Option<Mode>) -> Result<ExperimentConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let mut cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Error::Config { path, message: e.into_inner().to_string() }
    })?;
    match (cfg.mode, mode) {
        (Some(a), Some(b)) if a != b => {
            return Err(config_err("mode", format!("config is for `{}`, not `{}`", a.name(), b.name())));
        }
        (None, None) => return Err(config_err("mode", "missing")),
        (None, Some(b)) => cfg.mode = Some(b),
        _ => {}
    }
    cfg.resolve()?;
    Ok(cfg)
}

fn config_err(path: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Config { path: path.into(), message: message.into() }
}

/// Re-roots parameter errors under `prefix`.
fn within<T>(prefix: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::InvalidParameter { field, reason } => config_err(format!("{prefix}.{field}"), reason),
        Error::Config { path, message } => config_err(format!("{prefix}.{path}"), message),
        other => config_err(prefix, other.to_string()),
    })
}

/// Decades up to `horizon` and the horizon itself.
pub fn default_checkpoints(horizon: usize) -> Vec<usize> {
    let mut c: Vec<usize> = std::iter::successors(Some(1usize), |k| k.checked_mul(10)).take_while(|&k| k < horizon).collect();
    c.push(horizon);
    c
}

impl ExperimentConfig {
    pub fn mode(&self) -> Mode {
        self.mode.expect("resolved config has a mode")
    }

    pub fn horizon(&self) -> usize {
        self.horizon.unwrap_or(0)
    }

    /// Noise dimension.
    pub fn noise_dim(&self) -> usize {
        self.problem.as_ref().map(ProblemSpec::dim).or(self.dim).unwrap_or(1)
    }

    pub fn noise_model(&self) -> Result<NoiseModel> {
        let family = self.noise.clone().ok_or_else(|| config_err("noise", "missing"))?;
        within("noise", NoiseModel::new(family, self.noise_dim()))
    }

    /// SHA-256 of the canonical JSON of the resolved config, output block
    /// excluded.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output = OutputSpec::default();
        let bytes = serde_json::to_vec(&c).expect("config serialises");
        hex::encode(Sha256::digest(&bytes))
    }

    fn forbid(&self, mode: Mode, fields: &[(&str, bool)]) -> Result<()> {
        match fields.iter().find(|(_, present)| *present) {
            Some((name, _)) => Err(config_err(*name, format!("not used in {} mode", mode.name()))),
            None => Ok(()),
        }
    }

    /// Fills defaults and validates every block.
    fn resolve(&mut self) -> Result<()> {
        let mode = self.mode();
        if self.id.is_empty() || self.id.contains(['/', '\\']) {
            return Err(config_err("id", "must be a nonempty file-name-safe string"));
        }
        if mode == Mode::Sweep {
            return self.resolve_sweep();
        }
        self.forbid(
            mode,
            &[("base", self.base.is_some()), ("parameter", self.parameter.is_some()), ("values", !self.values.is_empty())],
        )?;
        if self.trials == 0 {
            return Err(config_err("trials", "must be a positive integer"));
        }
        if let Some(d) = self.dim {
            if d == 0 {
                return Err(config_err("dim", "must be at least 1"));
            }
            if self.problem.as_ref().is_some_and(|p| p.dim() != d) {
                return Err(config_err("dim", "does not match the problem dimension"));
            }
        }
        if mode == Mode::Conditions {
            return self.resolve_conditions();
        }
        let horizon = match self.horizon {
            Some(0) | None => return Err(config_err("horizon", "must be a positive integer")),
            Some(n) => n,
        };
        if self.checkpoints.is_empty() {
            self.checkpoints = default_checkpoints(horizon);
        }
        if self.checkpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(config_err("checkpoints", "must be strictly increasing"));
        }
        if self.checkpoints.last().is_some_and(|&n| n > horizon) {
            return Err(config_err("checkpoints", format!("must not exceed the horizon {horizon}")));
        }
        if self.checkpoints.last() != Some(&horizon) {
            self.checkpoints.push(horizon);
        }
        self.noise_model()?;
        self.forbid(mode, &[("truncation", self.truncation.is_some())])?;
        match mode {
            Mode::Sa => self.resolve_sa(),
            Mode::Sgd => self.resolve_sgd(),
            Mode::Gslln => self.resolve_gslln(),
            Mode::Conditions | Mode::Sweep => unreachable!(),
        }
    }

    fn resolve_x0(&mut self, x_star: &[f64]) -> Result<()> {
        let x0 = self.x0.get_or_insert_with(|| x_star.iter().map(|v| v + 1.0).collect());
        if x0.len() != x_star.len() {
            return Err(config_err("x0", format!("expected {} entries, got {}", x_star.len(), x0.len())));
        }
        if x0.iter().any(|v| !v.is_finite()) {
            return Err(config_err("x0", "must be finite"));
        }
        Ok(())
    }

    fn resolve_multiplier(&mut self) -> Result<()> {
        let m = self.multiplier.get_or_insert(Multiplier::Constant { value: 1.0 });
        within("multiplier", m.validate())
    }

    fn resolve_sa(&mut self) -> Result<()> {
        self.forbid(
            Mode::Sa,
            &[
                ("eta", self.eta.is_some()),
                ("c", self.c.is_some()),
                ("mask", self.mask.is_some()),
                ("t_grid", self.t_grid.is_some()),
                ("zeta_policies", self.zeta_policies.is_some()),
                ("threshold", self.threshold.is_some()),
            ],
        )?;
        let spec = self.problem.as_ref().ok_or_else(|| config_err("problem", "missing"))?;
        let problem = within("problem", spec.build_sa())?;
        let schedule = self.schedule.as_ref().ok_or_else(|| config_err("schedule", "missing"))?;
        within("schedule", schedule.validate())?;
        self.resolve_x0(problem.x_star())?;
        self.resolve_multiplier()
    }

    fn resolve_sgd(&mut self) -> Result<()> {
        self.forbid(
            Mode::Sgd,
            &[
                ("schedule", self.schedule.is_some()),
                ("t_grid", self.t_grid.is_some()),
                ("zeta_policies", self.zeta_policies.is_some()),
                ("threshold", self.threshold.is_some()),
            ],
        )?;
        let spec = self.problem.as_ref().ok_or_else(|| config_err("problem", "missing"))?;
        let problem = within("problem", spec.build_sgd())?;
        let eta = self.eta.as_ref().ok_or_else(|| config_err("eta", "missing"))?;
        within("eta", eta.validate())?;
        let c = self.c.as_ref().ok_or_else(|| config_err("c", "missing"))?;
        within("c", c.validate())?;
        let mask = self.mask.get_or_insert_with(MaskPolicy::default);
        within("mask", mask.validate(problem.dim()))?;
        self.resolve_x0(problem.x_star())?;
        self.resolve_multiplier()
    }

    fn resolve_gslln(&mut self) -> Result<()> {
        self.forbid(
            Mode::Gslln,
            &[
                ("problem", self.problem.is_some()),
                ("eta", self.eta.is_some()),
                ("c", self.c.is_some()),
                ("mask", self.mask.is_some()),
                ("multiplier", self.multiplier.is_some()),
                ("x0", self.x0.is_some()),
            ],
        )?;
        self.dim.get_or_insert(1);
        let schedule = self.schedule.as_ref().ok_or_else(|| config_err("schedule", "missing"))?;
        within("schedule", schedule.validate())?;
        let t_grid = self.t_grid.get_or_insert_with(default_t_grid);
        if t_grid.is_empty() || t_grid.iter().any(|&t| !(t > 0.0 && t.is_finite())) {
            return Err(config_err("t_grid", "must be a nonempty list of positive numbers"));
        }
        let zetas = self.zeta_policies.get_or_insert_with(|| vec![ZetaPolicy::Constant { value: 1.0 }]);
        if zetas.is_empty() {
            return Err(config_err("zeta_policies", "must be nonempty"));
        }
        let threshold = *self.threshold.get_or_insert(0.02);
        if !(threshold > 0.0) {
            return Err(config_err("threshold", "must be positive"));
        }
        Ok(())
    }

    fn resolve_conditions(&mut self) -> Result<()> {
        self.forbid(
            Mode::Conditions,
            &[
                ("problem", self.problem.is_some()),
                ("mask", self.mask.is_some()),
                ("multiplier", self.multiplier.is_some()),
                ("x0", self.x0.is_some()),
                ("t_grid", self.t_grid.is_some()),
                ("zeta_policies", self.zeta_policies.is_some()),
                ("threshold", self.threshold.is_some()),
            ],
        )?;
        self.dim.get_or_insert(1);
        self.noise_model()?;
        if let Some(s) = &self.schedule {
            within("schedule", s.validate())?;
        }
        match (&self.eta, &self.c) {
            (Some(eta), Some(c)) => {
                within("eta", eta.validate())?;
                within("c", c.validate())?;
            }
            (None, None) => {}
            (None, Some(_)) => return Err(config_err("eta", "missing (needed with `c`)")),
            (Some(_), None) => return Err(config_err("c", "missing (needed with `eta`)")),
        }
        if self.schedule.is_none() && self.eta.is_none() {
            return Err(config_err("schedule", "missing (give `schedule`, or `eta` and `c`)"));
        }
        if self.truncation.is_some() {
            if self.schedule.is_none() {
                return Err(config_err("truncation", "needs `schedule`"));
            }
            let h = *self.horizon.get_or_insert(1_000_000);
            if h < 1000 {
                return Err(config_err("horizon", "truncation series need a horizon of at least 1000"));
            }
        }
        Ok(())
    }

    fn resolve_sweep(&mut self) -> Result<()> {
        let parameter = self.parameter.clone().ok_or_else(|| config_err("parameter", "missing"))?;
        if self.base.is_none() {
            return Err(config_err("base", "missing"));
        }
        if self.values.is_empty() {
            return Err(config_err("values", "must be nonempty"));
        }
        if parameter.split('.').any(str::is_empty) {
            return Err(config_err("parameter", "must be a dotted field path"));
        }
        let children = self.sweep_children()?;
        if let Some(c) = children.iter().find(|c| c.mode() == Mode::Sweep) {
            return Err(config_err("base.mode", format!("child `{}` cannot itself be a sweep", c.id)));
        }
        Ok(())
    }

    /// Child configs of a sweep, one per value, ids `<id>-<field>-<value>`.
    pub fn sweep_children(&self) -> Result<Vec<ExperimentConfig>> {
        let parameter = self.parameter.as_deref().unwrap_or_default();
        let base = self.base.clone().unwrap_or_default();
        let field = parameter.rsplit('.').next().unwrap_or(parameter);
        let mut out = Vec::with_capacity(self.values.len());
        for (i, v) in self.values.iter().enumerate() {
            let mut child = base.clone();
            set_path(&mut child, parameter, v.clone()).map_err(|m| config_err(format!("values[{i}]"), m))?;
            let value_label = match v {
                serde_json::Value::String(s) => s.clone(),
                other => other.to_string(),
            };
            if let serde_json::Value::Object(map) = &mut child {
                map.insert("id".into(), format!("{}-{field}-{value_label}", self.id).into());
            }
            let text = serde_json::to_string(&child)?;
            let parsed = parse_config(&text).map_err(|e| match e {
                Error::Config { path, message } => config_err(format!("values[{i}]: {path}"), message),
                other => other,
            })?;
            out.push(parsed);
        }
        Ok(out)
    }
}

fn set_path(root: &mut serde_json::Value, path: &str, value: serde_json::Value) -> std::result::Result<(), String> {
    let mut node = root;
    let parts: Vec<&str> = path.split('.').collect();
    for (k, part) in parts.iter().enumerate() {
        let map = node.as_object_mut().ok_or_else(|| format!("`{}` is not an object", parts[..k].join(".")))?;
        if k + 1 == parts.len() {
            map.insert((*part).to_string(), value);
            return Ok(());
        }
        node = map.entry(*part).or_insert_with(|| serde_json::Value::Object(Default::default()));
    }
    Ok(())
}
