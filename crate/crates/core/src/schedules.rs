//! Step-size sequences, finite-difference increments, noise multipliers,
//! and series verdicts (Robbins–Monro and Kiefer–Wolfowitz–Blum checks).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::norm::Norm;
use crate::quad;

const EXP_TOL: f64 = 1e-12;

fn one() -> f64 {
    1.0
}

/// Leading-order behaviour `coeff · n^{-power} · (ln n)^{-log_power}` of a
/// positive sequence as `n → ∞`.
///
/// Every verdict in this module is decided from this form (a limit
/// comparison with a Bertrand series), never from truncated sums.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Asymptotic {
    pub coeff: f64,
    pub power: f64,
    pub log_power: f64,
}

impl Asymptotic {
    pub fn pow(self, k: f64) -> Self {
        Asymptotic { coeff: self.coeff.powf(k), power: self.power * k, log_power: self.log_power * k }
    }

    pub fn times(self, o: Self) -> Self {
        Asymptotic {
            coeff: self.coeff * o.coeff,
            power: self.power + o.power,
            log_power: self.log_power + o.log_power,
        }
    }

    pub fn over(self, o: Self) -> Self {
        self.times(o.pow(-1.0))
    }

    /// Bertrand test: `Σ n^{-a} (ln n)^{-b}` converges iff `a > 1`, or
    /// `a = 1` and `b > 1`.
    pub fn series_converges(&self) -> bool {
        self.power > 1.0 + EXP_TOL || ((self.power - 1.0).abs() <= EXP_TOL && self.log_power > 1.0 + EXP_TOL)
    }

    pub fn tends_to_zero(&self) -> bool {
        self.power > EXP_TOL || (self.power.abs() <= EXP_TOL && self.log_power > EXP_TOL)
    }

    /// `sup_n n^{1/α} · term` is finite iff `a > 1/α`, or `a = 1/α` and `b ≥ 0`.
    pub fn bounded_after_scaling(&self, power: f64, log_power: f64) -> bool {
        let a = self.power - power;
        let b = self.log_power - log_power;
        a > EXP_TOL || (a.abs() <= EXP_TOL && b >= -EXP_TOL)
    }

    /// Integral estimate of `Σ_{n ≥ N}` of the leading term (finite only
    /// for convergent series).
    pub fn tail_integral(&self, from: usize) -> f64 {
        if !self.series_converges() {
            return f64::INFINITY;
        }
        let l = (from.max(3) as f64).ln();
        let (a, b) = (self.power, self.log_power);
        if (a - 1.0).abs() <= EXP_TOL {
            return self.coeff * l.powf(1.0 - b) / (b - 1.0);
        }
        // ∫_{ln N}^∞ e^{(1-a)v} v^{-b} dv
        let h = |v: f64| ((1.0 - a) * v - b * v.ln()).exp();
        let span = 60.0 / (a - 1.0);
        self.coeff * quad::integrate_with_breaks(h, &[l, l + span / 64.0, l + span / 8.0, l + span], 1e-10)
    }
}

/// A positive sequence with closed-form evaluation.
pub trait Rate {
    fn at(&self, n: usize) -> f64;
    fn asymptotic(&self) -> Asymptotic;
    fn label(&self) -> String;
}

/// Step-size sequence `β_n` (or `η_n`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Schedule {
    /// `D / (n + 1)`.
    Harmonic {
        #[serde(rename = "D", default = "one")]
        d: f64,
    },
    /// `D · n^{-γ}`, with `β_0 = D`.
    PowerLaw {
        #[serde(rename = "D", default = "one")]
        d: f64,
        gamma: f64,
    },
    /// `D / (n (ln(1 + n))^δ)`, with `β_0 = D`.
    LogTempered {
        #[serde(rename = "D", default = "one")]
        d: f64,
        delta: f64,
    },
    /// Fixed step; violates `β_n → 0` and is meant for negative controls.
    Constant { value: f64 },
}

impl Schedule {
    pub fn harmonic(d: f64) -> Self {
        Schedule::Harmonic { d }
    }

    pub fn power_law(d: f64, gamma: f64) -> Self {
        Schedule::PowerLaw { d, gamma }
    }

    pub fn log_tempered(d: f64, delta: f64) -> Self {
        Schedule::LogTempered { d, delta }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |field: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::invalid(field, format!("must be positive, got {v}")))
            }
        };
        match *self {
            Schedule::Harmonic { d } => positive("D", d),
            Schedule::PowerLaw { d, gamma } => {
                positive("D", d)?;
                if !(gamma > 0.0 && gamma <= 1.0) {
                    return Err(Error::invalid("gamma", format!("must lie in (0, 1], got {gamma}")));
                }
                Ok(())
            }
            Schedule::LogTempered { d, delta } => {
                positive("D", d)?;
                if !(delta > 0.0 && delta <= 1.0) {
                    return Err(Error::invalid("delta", format!("must lie in (0, 1], got {delta}")));
                }
                Ok(())
            }
            Schedule::Constant { value } => positive("value", value),
        }
    }

    /// Value at index `n`.
    pub fn eval(&self, n: usize) -> f64 {
        let x = n as f64;
        match *self {
            Schedule::Harmonic { d } => d / (x + 1.0),
            Schedule::PowerLaw { d, gamma } => {
                if n == 0 {
                    d
                } else {
                    d * x.powf(-gamma)
                }
            }
            Schedule::LogTempered { d, delta } => {
                if n == 0 {
                    d
                } else {
                    d / (x * x.ln_1p().powf(delta))
                }
            }
            Schedule::Constant { value } => value,
        }
    }
}

impl Rate for Schedule {
    fn at(&self, n: usize) -> f64 {
        self.eval(n)
    }

    fn asymptotic(&self) -> Asymptotic {
        match *self {
            Schedule::Harmonic { d } => Asymptotic { coeff: d, power: 1.0, log_power: 0.0 },
            Schedule::PowerLaw { d, gamma } => Asymptotic { coeff: d, power: gamma, log_power: 0.0 },
            Schedule::LogTempered { d, delta } => Asymptotic { coeff: d, power: 1.0, log_power: delta },
            Schedule::Constant { value } => Asymptotic { coeff: value, power: 0.0, log_power: 0.0 },
        }
    }

    fn label(&self) -> String {
        match *self {
            Schedule::Harmonic { d } => format!("{d}/(n+1)"),
            Schedule::PowerLaw { d, gamma } => format!("{d}*n^-{gamma}"),
            Schedule::LogTempered { d, delta } => format!("{d}/(n*ln(1+n)^{delta})"),
            Schedule::Constant { value } => format!("{value}"),
        }
    }
}

/// Finite-difference half-width `c_n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum IncrementSchedule {
    /// `1 / (ln(2 + n))^κ`.
    LogPower { kappa: f64 },
    /// `n^{-γ}`, with `c_0 = 1`.
    PowerLaw { gamma: f64 },
    Constant { value: f64 },
}

impl IncrementSchedule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            IncrementSchedule::LogPower { kappa } if !(kappa > 0.0 && kappa <= 1.0) => {
                Err(Error::invalid("kappa", format!("must lie in (0, 1], got {kappa}")))
            }
            IncrementSchedule::PowerLaw { gamma } if !(gamma > 0.0 && gamma.is_finite()) => {
                Err(Error::invalid("gamma", format!("must be positive, got {gamma}")))
            }
            IncrementSchedule::Constant { value } if !(value > 0.0 && value.is_finite()) => {
                Err(Error::invalid("value", format!("must be positive, got {value}")))
            }
            _ => Ok(()),
        }
    }

    pub fn eval(&self, n: usize) -> f64 {
        match *self {
            IncrementSchedule::LogPower { kappa } => (n as f64 + 2.0).ln().powf(-kappa),
            IncrementSchedule::PowerLaw { gamma } => {
                if n == 0 {
                    1.0
                } else {
                    (n as f64).powf(-gamma)
                }
            }
            IncrementSchedule::Constant { value } => value,
        }
    }
}

impl Rate for IncrementSchedule {
    fn at(&self, n: usize) -> f64 {
        self.eval(n)
    }

    fn asymptotic(&self) -> Asymptotic {
        match *self {
            IncrementSchedule::LogPower { kappa } => Asymptotic { coeff: 1.0, power: 0.0, log_power: kappa },
            IncrementSchedule::PowerLaw { gamma } => Asymptotic { coeff: 1.0, power: gamma, log_power: 0.0 },
            IncrementSchedule::Constant { value } => Asymptotic { coeff: value, power: 0.0, log_power: 0.0 },
        }
    }

    fn label(&self) -> String {
        match *self {
            IncrementSchedule::LogPower { kappa } => format!("ln(2+n)^-{kappa}"),
            IncrementSchedule::PowerLaw { gamma } => format!("n^-{gamma}"),
            IncrementSchedule::Constant { value } => format!("{value}"),
        }
    }
}

/// `θ_n = η_n / c_n`.
#[derive(Clone, Copy, Debug)]
pub struct StepRatio<'a> {
    pub eta: &'a Schedule,
    pub c: &'a IncrementSchedule,
}

impl Rate for StepRatio<'_> {
    fn at(&self, n: usize) -> f64 {
        self.eta.eval(n) / self.c.eval(n)
    }

    fn asymptotic(&self) -> Asymptotic {
        self.eta.asymptotic().over(self.c.asymptotic())
    }

    fn label(&self) -> String {
        format!("({})/({})", self.eta.label(), self.c.label())
    }
}

/// Rate scaled by a constant, e.g. `η_n / c₀`.
#[derive(Clone, Copy, Debug)]
pub struct Scaled<'a, R: Rate + ?Sized> {
    pub rate: &'a R,
    pub factor: f64,
}

impl<R: Rate + ?Sized> Rate for Scaled<'_, R> {
    fn at(&self, n: usize) -> f64 {
        self.factor * self.rate.at(n)
    }

    fn asymptotic(&self) -> Asymptotic {
        let mut a = self.rate.asymptotic();
        a.coeff *= self.factor;
        a
    }

    fn label(&self) -> String {
        format!("{}*{}", self.factor, self.rate.label())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeriesVerdict {
    Diverges,
    Converges,
    Inconclusive,
}

/// Partial sum to the horizon plus the analytic verdict.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SeriesEvidence {
    pub partial_sum: f64,
    /// Integral estimate of the remainder; infinite for divergent series.
    pub tail_estimate: f64,
    pub verdict: SeriesVerdict,
}

impl SeriesEvidence {
    fn from_terms<F: Fn(usize) -> f64>(term: F, asym: Asymptotic, horizon: usize) -> Self {
        let partial_sum = (0..horizon).map(term).sum();
        let verdict = if asym.series_converges() { SeriesVerdict::Converges } else { SeriesVerdict::Diverges };
        SeriesEvidence { partial_sum, tail_estimate: asym.tail_integral(horizon), verdict }
    }
}

/// Series evidence for `Σ_{n<N} rate_n^k`.
pub fn power_series<R: Rate + ?Sized>(rate: &R, k: f64, horizon: usize) -> SeriesEvidence {
    SeriesEvidence::from_terms(|n| rate.at(n).powf(k), rate.asymptotic().pow(k), horizon)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RmReport {
    pub horizon: usize,
    pub tends_to_zero: bool,
    /// `Σ β_n` (must diverge).
    pub sum: SeriesEvidence,
    /// `Σ β_n²` (Robbins–Monro also asks this to converge).
    pub sum_sq: SeriesEvidence,
}

impl RmReport {
    /// `β_n → 0` and `Σ β_n = ∞`.
    pub fn rate_condition_holds(&self) -> bool {
        self.tends_to_zero && self.sum.verdict == SeriesVerdict::Diverges
    }

    pub fn robbins_monro_holds(&self) -> bool {
        self.rate_condition_holds() && self.sum_sq.verdict == SeriesVerdict::Converges
    }
}

pub fn check_rm_conditions<R: Rate + ?Sized>(rate: &R, horizon: usize) -> RmReport {
    RmReport {
        horizon,
        tends_to_zero: rate.asymptotic().tends_to_zero(),
        sum: power_series(rate, 1.0, horizon),
        sum_sq: power_series(rate, 2.0, horizon),
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KwbReport {
    pub increment_to_zero: bool,
    /// `Σ (η_n / c_n)²`, must converge.
    pub ratio_sq: SeriesEvidence,
    /// `Σ η_n c_n`, must converge.
    pub product: SeriesEvidence,
    /// `Σ η_n`, must diverge.
    pub step_sum: SeriesEvidence,
}

impl KwbReport {
    pub fn holds(&self) -> bool {
        self.increment_to_zero
            && self.ratio_sq.verdict == SeriesVerdict::Converges
            && self.product.verdict == SeriesVerdict::Converges
            && self.step_sum.verdict == SeriesVerdict::Diverges
    }

    /// Name of the first failing clause, if any.
    pub fn first_failure(&self) -> Option<&'static str> {
        if !self.increment_to_zero {
            Some("c_n -> 0")
        } else if self.ratio_sq.verdict != SeriesVerdict::Converges {
            Some("sum (eta/c)^2 < inf")
        } else if self.product.verdict != SeriesVerdict::Converges {
            Some("sum eta*c < inf")
        } else if self.step_sum.verdict != SeriesVerdict::Diverges {
            Some("sum eta = inf")
        } else {
            None
        }
    }
}

pub fn check_kwb_preset(eta: &Schedule, c: &IncrementSchedule, horizon: usize) -> KwbReport {
    let ratio = StepRatio { eta, c };
    let prod_asym = eta.asymptotic().times(c.asymptotic());
    KwbReport {
        increment_to_zero: c.asymptotic().tends_to_zero(),
        ratio_sq: power_series(&ratio, 2.0, horizon),
        product: SeriesEvidence::from_terms(|n| eta.eval(n) * c.eval(n), prod_asym, horizon),
        step_sum: power_series(eta, 1.0, horizon),
    }
}

/// Noise multiplier `λ_n(u_0, …, u_n)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Multiplier {
    Constant { value: f64 },
    /// `C₁ (1 + max_{k ≤ n} ‖u_k‖)`: exactly at the admissible bound.
    NormTracking {
        #[serde(rename = "C1")]
        c1: f64,
        #[serde(default)]
        norm: Norm,
    },
    /// `C₁ (-1)^n`.
    SignedBounded {
        #[serde(rename = "C1")]
        c1: f64,
    },
    /// Arbitrary function of the full history. Only usable when the full
    /// history is available; the declared `c1` is what audits check against.
    #[serde(skip)]
    Custom(CustomMultiplier),
}

impl Default for Multiplier {
    fn default() -> Self {
        Multiplier::Constant { value: 1.0 }
    }
}

type HistoryFn = dyn Fn(&[Vec<f64>]) -> f64 + Send + Sync;

/// User multiplier evaluated on `(u_0, …, u_n)`.
#[derive(Clone)]
pub struct CustomMultiplier {
    pub c1: f64,
    pub norm: Norm,
    pub func: std::sync::Arc<HistoryFn>,
}

impl std::fmt::Debug for CustomMultiplier {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CustomMultiplier").field("c1", &self.c1).field("norm", &self.norm).finish()
    }
}

impl PartialEq for CustomMultiplier {
    fn eq(&self, other: &Self) -> bool {
        std::sync::Arc::ptr_eq(&self.func, &other.func)
    }
}

impl Multiplier {
    pub fn custom<F>(c1: f64, norm: Norm, f: F) -> Self
    where
        F: Fn(&[Vec<f64>]) -> f64 + Send + Sync + 'static,
    {
        Multiplier::Custom(CustomMultiplier { c1, norm, func: std::sync::Arc::new(f) })
    }

    pub fn validate(&self) -> Result<()> {
        let c = match self {
            Multiplier::Constant { value } => {
                return if value.is_finite() { Ok(()) } else { Err(Error::invalid("value", "must be finite")) }
            }
            Multiplier::NormTracking { c1, .. } | Multiplier::SignedBounded { c1 } => *c1,
            Multiplier::Custom(c) => c.c1,
        };
        if c.is_finite() && c > 0.0 {
            Ok(())
        } else {
            Err(Error::invalid("C1", format!("must be positive, got {c}")))
        }
    }

    /// The constant `C₁` in `|λ_n| ≤ C₁ (1 + max ‖u_k‖)`.
    pub fn bound_constant(&self) -> f64 {
        match self {
            Multiplier::Constant { value } => value.abs(),
            Multiplier::NormTracking { c1, .. } | Multiplier::SignedBounded { c1 } => *c1,
            Multiplier::Custom(c) => c.c1,
        }
    }

    pub fn norm(&self) -> Norm {
        match self {
            Multiplier::NormTracking { norm, .. } => *norm,
            Multiplier::Custom(c) => c.norm,
            _ => Norm::L2,
        }
    }

    pub fn needs_history(&self) -> bool {
        matches!(self, Multiplier::Custom(_))
    }
}

/// Per-trajectory state of a multiplier: the running max of `‖u_k‖`, and
/// the full history for custom multipliers.
#[derive(Clone, Debug)]
pub struct MultiplierState {
    multiplier: Multiplier,
    running_max: f64,
    observed: usize,
    history: Vec<Vec<f64>>,
}

impl MultiplierState {
    pub fn new(multiplier: Multiplier) -> Self {
        MultiplierState { multiplier, running_max: 0.0, observed: 0, history: Vec::new() }
    }

    /// Records `u_n`. Must be called once per index before [`Self::value`].
    pub fn observe(&mut self, u: &[f64]) {
        let norm = self.multiplier.norm().of(u);
        if norm > self.running_max || self.observed == 0 {
            self.running_max = norm;
        }
        self.observed += 1;
        if self.multiplier.needs_history() {
            self.history.push(u.to_vec());
        }
    }

    pub fn running_max(&self) -> f64 {
        self.running_max
    }

    /// `λ_n` on the history observed so far (`n = observed - 1`).
    pub fn value(&self) -> f64 {
        assert!(self.observed > 0, "multiplier evaluated on an empty history");
        let n = self.observed - 1;
        match &self.multiplier {
            Multiplier::Constant { value } => *value,
            Multiplier::NormTracking { c1, .. } => c1 * (1.0 + self.running_max),
            Multiplier::SignedBounded { c1 } => {
                if n.is_multiple_of(2) {
                    *c1
                } else {
                    -c1
                }
            }
            Multiplier::Custom(c) => (c.func)(&self.history),
        }
    }

    /// `C₁ (1 + max_{k ≤ n} ‖u_k‖)` for the current history.
    pub fn bound(&self) -> f64 {
        self.multiplier.bound_constant() * (1.0 + self.running_max)
    }
}

/// `λ_n` evaluated on a complete history `(u_0, …, u_n)`.
pub fn eval_multiplier(m: &Multiplier, history: &[Vec<f64>]) -> Result<f64> {
    if history.is_empty() {
        return Err(Error::invalid("history", "must be nonempty"));
    }
    let mut state = MultiplierState::new(m.clone());
    for u in history {
        state.observe(u);
    }
    Ok(state.value())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn closed_form_values() {
        let h = Schedule::harmonic(1.0);
        assert_eq!(h.eval(0), 1.0);
        assert!((h.eval(9) - 0.1).abs() < 1e-15);
        let lt = Schedule::log_tempered(1.0, 1.0);
        assert_eq!(lt.eval(0), 1.0);
        assert!((lt.eval(1) - std::f64::consts::LOG2_E).abs() < 1e-12);
        let pl = Schedule::power_law(1.0, 2.0 / 3.0);
        assert!((pl.eval(8) - 0.25).abs() < 1e-14);
    }

    /// Direct summation oracle, independent of the report machinery.
    fn direct_sum(f: impl Fn(usize) -> f64, n: usize) -> f64 {
        let mut s = 0.0;
        for k in (0..n).rev() {
            s += f(k);
        }
        s
    }

    #[test]
    fn robbins_monro_harmonic() {
        let n = 1_000_000;
        let r = check_rm_conditions(&Schedule::harmonic(1.0), n);
        let oracle = direct_sum(|k| 1.0 / (k as f64 + 1.0), n);
        assert!((r.sum.partial_sum - oracle).abs() < 1e-9);
        assert!((r.sum.partial_sum - 14.392_726_722_865).abs() < 1e-6);
        assert_eq!(r.sum.verdict, SeriesVerdict::Diverges);
        assert_eq!(r.sum_sq.verdict, SeriesVerdict::Converges);
        // Σ 1/k² to 10⁶ plus tail ≈ π²/6.
        let zeta2 = std::f64::consts::PI.powi(2) / 6.0;
        assert!((r.sum_sq.partial_sum - (zeta2 - 1.0 / n as f64)).abs() < 1e-9);
        assert!(r.robbins_monro_holds());
    }

    #[test]
    fn robbins_monro_constant_and_log_tempered() {
        let r = check_rm_conditions(&Schedule::Constant { value: 0.1 }, 1000);
        assert_eq!(r.sum.verdict, SeriesVerdict::Diverges);
        assert_eq!(r.sum_sq.verdict, SeriesVerdict::Diverges);
        assert!(!r.rate_condition_holds());

        let r = check_rm_conditions(&Schedule::log_tempered(1.0, 1.0), 100_000);
        assert_eq!(r.sum.verdict, SeriesVerdict::Diverges);
        assert_eq!(r.sum_sq.verdict, SeriesVerdict::Converges);
        assert!(r.robbins_monro_holds());

        let r = check_rm_conditions(&Schedule::power_law(1.0, 0.4), 1000);
        assert_eq!(r.sum_sq.verdict, SeriesVerdict::Diverges);
    }

    #[test]
    fn tail_integral_of_inverse_square() {
        let a = Asymptotic { coeff: 1.0, power: 2.0, log_power: 0.0 };
        let t = a.tail_integral(1000);
        assert!((t - 1e-3).abs() < 1e-9, "{t}");
        let b = Asymptotic { coeff: 1.0, power: 1.0, log_power: 2.0 };
        assert!((b.tail_integral(1000) - 1.0 / 1000f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn kwb_presets() {
        let eta = Schedule::log_tempered(1.0, 1.0);
        let c = IncrementSchedule::LogPower { kappa: 1.0 };
        let r = check_kwb_preset(&eta, &c, 10_000);
        assert!(r.holds(), "{r:?}");

        let r = check_kwb_preset(&Schedule::Constant { value: 0.1 }, &c, 10_000);
        assert_eq!(r.step_sum.verdict, SeriesVerdict::Diverges);
        assert_eq!(r.ratio_sq.verdict, SeriesVerdict::Diverges);
        assert!(!r.holds());

        let r = check_kwb_preset(&Schedule::power_law(1.0, 1.0), &IncrementSchedule::Constant { value: 0.5 }, 1000);
        assert_eq!(r.first_failure(), Some("c_n -> 0"));
    }

    #[test]
    fn multiplier_examples() {
        let hist = vec![vec![1.0], vec![3.0], vec![-2.0]];
        assert_eq!(eval_multiplier(&Multiplier::Constant { value: 2.5 }, &hist).unwrap(), 2.5);
        let nt = Multiplier::NormTracking { c1: 1.0, norm: Norm::L2 };
        assert_eq!(eval_multiplier(&nt, &hist).unwrap(), 4.0);
        let sb = Multiplier::SignedBounded { c1: 1.0 };
        assert_eq!(eval_multiplier(&sb, &vec![vec![1.0]; 4]).unwrap(), -1.0);
        assert_eq!(eval_multiplier(&sb, &vec![vec![1.0]; 5]).unwrap(), 1.0);
        assert!(eval_multiplier(&sb, &[]).is_err());
    }

    #[test]
    fn monotone_tail_within_first_thousand() {
        let schedules = [
            Schedule::harmonic(1.0),
            Schedule::harmonic(5.0),
            Schedule::power_law(1.0, 2.0 / 3.0),
            Schedule::power_law(3.0, 0.5),
            Schedule::log_tempered(1.0, 1.0),
            Schedule::log_tempered(2.0, 0.25),
        ];
        for s in &schedules {
            let start = (0..=1000).find(|&n| s.eval(n) < 1.0).expect("eventually below one");
            for n in start..start + 10_000 {
                assert!(s.eval(n + 1) <= s.eval(n), "{s:?} at {n}");
            }
        }
    }

    #[test]
    fn serde_uses_config_keys() {
        let s: Schedule = serde_json::from_str(r#"{"kind":"log_tempered","D":2.0,"delta":0.5}"#).unwrap();
        assert_eq!(s, Schedule::log_tempered(2.0, 0.5));
        let m: Multiplier = serde_json::from_str(r#"{"kind":"norm_tracking","C1":1.5}"#).unwrap();
        assert_eq!(m, Multiplier::NormTracking { c1: 1.5, norm: Norm::L2 });
        assert!(serde_json::from_str::<Schedule>(r#"{"kind":"harmonic","D":1,"oops":2}"#).is_err());
    }

    proptest! {
        #[test]
        fn multiplier_bound_holds_on_random_histories(
            hist in prop::collection::vec(prop::collection::vec(-1e3f64..1e3, 3), 1..40),
            c1 in 0.01f64..10.0,
            which in 0usize..3,
        ) {
            let m = match which {
                0 => Multiplier::Constant { value: -c1 },
                1 => Multiplier::NormTracking { c1, norm: Norm::LInf },
                _ => Multiplier::SignedBounded { c1 },
            };
            let lambda = eval_multiplier(&m, &hist).unwrap();
            let max = hist.iter().map(|u| m.norm().of(u)).fold(0.0, f64::max);
            prop_assert!(lambda.abs() <= m.bound_constant() * (1.0 + max));
        }

        #[test]
        fn schedules_positive_and_decreasing_eventually(d in 0.1f64..10.0, e in 0.05f64..1.0, n in 0usize..1_000_000) {
            for s in [Schedule::harmonic(d), Schedule::power_law(d, e), Schedule::log_tempered(d, e)] {
                prop_assert!(s.eval(n) > 0.0);
                if n >= 2 {
                    prop_assert!(s.eval(n + 1) <= s.eval(n));
                }
            }
        }
    }
}
