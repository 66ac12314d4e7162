//! Measurement-noise models and their seeded streams.
//!
//! A [`NoiseModel`] is an immutable description of a noise family together
//! with analytic moment metadata. A [`NoiseStream`] is the single-owner
//! generator drawing `W_{n+1}` (for SA) or the pair `(M'_{n+1}, M''_{n+1})`
//! (for zeroth-order SGD) from one counter-based ChaCha stream.

use std::f64::consts::{E, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::quad;

const QUAD_TOL: f64 = 1e-9;

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 35.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// `ln(e^a + e^b)`.
fn log_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Noise family with its parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseFamily {
    /// Independent `N(0, σ²)` coordinates. `σ = 0` is the degenerate zero law.
    GaussianIid { sigma: f64 },
    /// Independent Student-t coordinates with tail index `nu`, scaled.
    StudentTIid { nu: f64, scale: f64 },
    /// Density proportional to `1 / ((1 + y²) (ln(e + |y|))^p)`, `y = x / scale`.
    LogTemperedCauchyIid { p: f64, scale: f64 },
    /// `W_{n+1} = scale · (1 + ½ sin(W_{n,1})) · Z_{n+1}` with Student-t(ν) innovations.
    ScaledMartingaleDifference { nu: f64, scale: f64 },
    /// `W_n = μ₀ / n + σ Z_n` with standard normal innovations.
    IndependentDriftingMean { mu0: f64, sigma: f64 },
}

/// Dependence structure of the sequence `{W_n}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dependence {
    Iid,
    Independent,
    MartingaleDifference,
}

/// Outcome of a moment query.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MomentVerdict {
    /// The moment is finite. `exact` is false when `value` is an upper bound.
    Finite { value: f64, exact: bool },
    Infinite,
    /// The family/exponent combination has no analytic basis here.
    Unknown,
}

impl MomentVerdict {
    pub fn is_finite(&self) -> bool {
        matches!(self, MomentVerdict::Finite { .. })
    }

    pub fn value(&self) -> Option<f64> {
        match self {
            MomentVerdict::Finite { value, .. } => Some(*value),
            _ => None,
        }
    }
}

/// One-dimensional symmetric law of a single coordinate (standardised by
/// `scale`). Used for sampling and for all moment integrals.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CoordinateLaw {
    Gaussian { sigma: f64 },
    StudentT { nu: f64, scale: f64 },
    LogTemperedCauchy { p: f64, scale: f64, ln_norm: f64 },
}

impl CoordinateLaw {
    fn scale(&self) -> f64 {
        match *self {
            CoordinateLaw::Gaussian { sigma } => sigma,
            CoordinateLaw::StudentT { scale, .. } => scale,
            CoordinateLaw::LogTemperedCauchy { scale, .. } => scale,
        }
    }

    /// Log-density of the unscaled law at `|y| = e^{ln_y}`.
    fn ln_density_std(&self, ln_y: f64) -> f64 {
        match *self {
            CoordinateLaw::Gaussian { .. } => {
                -0.5 * (2.0 * ln_y).exp() - 0.5 * (2.0 * PI).ln()
            }
            CoordinateLaw::StudentT { nu, .. } => {
                let ln_c = ln_gamma(0.5 * (nu + 1.0)) - ln_gamma(0.5 * nu) - 0.5 * (nu * PI).ln();
                ln_c - 0.5 * (nu + 1.0) * softplus(2.0 * ln_y - nu.ln())
            }
            CoordinateLaw::LogTemperedCauchy { p, ln_norm, .. } => {
                -ln_norm - softplus(2.0 * ln_y) - p * log_add_exp(1.0, ln_y).ln()
            }
        }
    }

    /// `E[w(|W|)]` for a symmetric coordinate, where `ln_w` maps `ln|w|` to
    /// `ln w(|w|)`. `tail_exponent` is the power `q` with which the
    /// integrand decays like `u^{-q}` in the log variable (if polynomially).
    fn expect_abs<W: Fn(f64) -> f64>(&self, ln_w: W, tail_exponent: Option<f64>) -> f64 {
        let ln_s = self.scale().ln();
        let h = |u: f64| {
            let ln_y = quad::ln_x_from_u(u);
            (ln_w(ln_s + ln_y) + self.ln_density_std(ln_y) + u).exp()
        };
        let mut v = quad::integrate_log_variable(h, 0.0, QUAD_TOL);
        if let Some(q) = tail_exponent {
            let end = quad::U_MAX;
            v += h(end) * end / (q - 1.0);
        }
        2.0 * v
    }

    /// Analytic finiteness of `E|W_i|^α`, with a value when finite.
    pub fn abs_moment(&self, alpha: f64) -> MomentVerdict {
        match *self {
            CoordinateLaw::Gaussian { sigma } => {
                let v = sigma.powf(alpha) * (0.5 * alpha * 2f64.ln() + ln_gamma(0.5 * (alpha + 1.0))
                    - 0.5 * PI.ln())
                .exp();
                MomentVerdict::Finite { value: v, exact: true }
            }
            CoordinateLaw::StudentT { nu, scale } => {
                if alpha >= nu {
                    return MomentVerdict::Infinite;
                }
                let ln_v = 0.5 * alpha * nu.ln() + ln_gamma(0.5 * (alpha + 1.0)) + ln_gamma(0.5 * (nu - alpha))
                    - 0.5 * PI.ln()
                    - ln_gamma(0.5 * nu);
                MomentVerdict::Finite { value: scale.powf(alpha) * ln_v.exp(), exact: true }
            }
            CoordinateLaw::LogTemperedCauchy { p, .. } => {
                // Tail of |x|^α f(x) behaves like x^{α-2} (ln x)^{-p}.
                let finite = alpha < 1.0 || (alpha == 1.0 && p > 1.0);
                if !finite {
                    return MomentVerdict::Infinite;
                }
                let tail = if alpha == 1.0 { Some(p) } else { None };
                let v = self.expect_abs(|ln_w| alpha * ln_w, tail);
                MomentVerdict::Finite { value: v, exact: true }
            }
        }
    }

    /// Analytic finiteness of `E[|W_i| / (ln(1 + |W_i|))^δ]`.
    pub fn log_tempered_moment(&self, delta: f64) -> MomentVerdict {
        let finite = match *self {
            CoordinateLaw::Gaussian { .. } => true,
            // ν > 1 is enforced, so E|W| is finite and dominates.
            CoordinateLaw::StudentT { .. } => true,
            CoordinateLaw::LogTemperedCauchy { p, .. } => p + delta > 1.0,
        };
        if !finite {
            return MomentVerdict::Infinite;
        }
        if self.scale() == 0.0 {
            return MomentVerdict::Finite { value: 0.0, exact: true };
        }
        let tail = match *self {
            CoordinateLaw::LogTemperedCauchy { p, .. } => Some(p + delta),
            _ => None,
        };
        let ln_w = |ln_w: f64| ln_w - delta * softplus(ln_w).ln();
        MomentVerdict::Finite { value: self.expect_abs(ln_w, tail), exact: true }
    }

    /// `P(|W_i| > t)`.
    pub fn tail_prob(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 1.0;
        }
        match *self {
            CoordinateLaw::Gaussian { sigma } => {
                if sigma == 0.0 {
                    0.0
                } else {
                    erfc(t / (sigma * std::f64::consts::SQRT_2))
                }
            }
            _ => {
                let u_lo = (t / self.scale()).ln_1p();
                let h = |u: f64| (self.ln_density_std(quad::ln_x_from_u(u)) + u).exp();
                (2.0 * quad::integrate_log_variable(h, u_lo, QUAD_TOL)).min(1.0)
            }
        }
    }

    /// `E[W_i² 1{|W_i| ≤ t}]`.
    pub fn truncated_second(&self, t: f64) -> f64 {
        if t <= 0.0 || self.scale() == 0.0 {
            return 0.0;
        }
        let s = self.scale();
        let u_hi = (t / s).ln_1p();
        let h = |u: f64| {
            let ln_y = quad::ln_x_from_u(u);
            (2.0 * ln_y + self.ln_density_std(ln_y) + u).exp()
        };
        let mut breaks = vec![0.0];
        let mut u = 0.0;
        let mut step = 0.25;
        while u < u_hi {
            u = (u + step).min(u_hi);
            breaks.push(u);
            step *= 2.0;
        }
        2.0 * s * s * quad::integrate_with_breaks(h, &breaks, QUAD_TOL)
    }

    fn sample<R: Rng>(&self, rng: &mut R, student: Option<&StudentT<f64>>) -> f64 {
        match *self {
            CoordinateLaw::Gaussian { sigma } => {
                let z: f64 = rng.sample(StandardNormal);
                sigma * z
            }
            CoordinateLaw::StudentT { scale, .. } => {
                scale * student.expect("student-t sampler").sample(rng)
            }
            CoordinateLaw::LogTemperedCauchy { p, scale, .. } => scale * sample_log_tempered_cauchy(rng, p),
        }
    }
}

/// Rejection sampler for the density proportional to
/// `1 / ((1 + y²) (ln(e + |y|))^p)`: propose standard Cauchy, accept with
/// probability `(ln(e + |y|))^{-p} ≤ 1`.
pub fn sample_log_tempered_cauchy<R: Rng>(rng: &mut R, p: f64) -> f64 {
    loop {
        let u: f64 = rng.random();
        let y = (PI * (u - 0.5)).tan();
        let accept = (E + y.abs()).ln().powf(-p);
        let v: f64 = rng.random();
        if v < accept {
            return y;
        }
    }
}

/// Normalising constant of `1 / ((1 + y²) (ln(e + |y|))^p)` over the real line.
fn log_tempered_cauchy_ln_norm(p: f64) -> f64 {
    let h = |u: f64| {
        let ln_y = quad::ln_x_from_u(u);
        (-softplus(2.0 * ln_y) - p * log_add_exp(1.0, ln_y).ln() + u).exp()
    };
    (2.0 * quad::integrate_log_variable(h, 0.0, 1e-11)).ln()
}

/// Noise model: family, dimension and cached analytic metadata.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseModel {
    family: NoiseFamily,
    dim: usize,
    law: CoordinateLaw,
}

impl NoiseModel {
    pub fn new(family: NoiseFamily, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("dim", "must be at least 1"));
        }
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::invalid(name, format!("must be a positive finite number, got {v}")))
            }
        };
        let tail_index = |v: f64| {
            if v.is_finite() && v > 1.0 {
                Ok(())
            } else {
                Err(Error::invalid("nu", format!("tail index must exceed 1, got {v}")))
            }
        };
        let law = match family {
            NoiseFamily::GaussianIid { sigma } | NoiseFamily::IndependentDriftingMean { sigma, .. } => {
                if !(sigma.is_finite() && sigma >= 0.0) {
                    return Err(Error::invalid("sigma", format!("must be nonnegative, got {sigma}")));
                }
                if let NoiseFamily::IndependentDriftingMean { mu0, .. } = family {
                    if !mu0.is_finite() {
                        return Err(Error::invalid("mu0", "must be finite"));
                    }
                }
                CoordinateLaw::Gaussian { sigma }
            }
            NoiseFamily::StudentTIid { nu, scale } | NoiseFamily::ScaledMartingaleDifference { nu, scale } => {
                tail_index(nu)?;
                positive("scale", scale)?;
                CoordinateLaw::StudentT { nu, scale }
            }
            NoiseFamily::LogTemperedCauchyIid { p, scale } => {
                positive("p", p)?;
                positive("scale", scale)?;
                CoordinateLaw::LogTemperedCauchy { p, scale, ln_norm: log_tempered_cauchy_ln_norm(p) }
            }
        };
        Ok(NoiseModel { family, dim, law })
    }

    pub fn gaussian(dim: usize, sigma: f64) -> Result<Self> {
        Self::new(NoiseFamily::GaussianIid { sigma }, dim)
    }

    pub fn student_t(dim: usize, nu: f64, scale: f64) -> Result<Self> {
        Self::new(NoiseFamily::StudentTIid { nu, scale }, dim)
    }

    pub fn log_tempered_cauchy(dim: usize, p: f64, scale: f64) -> Result<Self> {
        Self::new(NoiseFamily::LogTemperedCauchyIid { p, scale }, dim)
    }

    pub fn martingale_difference(dim: usize, nu: f64, scale: f64) -> Result<Self> {
        Self::new(NoiseFamily::ScaledMartingaleDifference { nu, scale }, dim)
    }

    pub fn drifting_mean(dim: usize, mu0: f64, sigma: f64) -> Result<Self> {
        Self::new(NoiseFamily::IndependentDriftingMean { mu0, sigma }, dim)
    }

    pub fn family(&self) -> &NoiseFamily {
        &self.family
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Law of one coordinate (for i.i.d. families) or of the innovation.
    pub fn coordinate_law(&self) -> CoordinateLaw {
        self.law
    }

    pub fn dependence(&self) -> Dependence {
        match self.family {
            NoiseFamily::GaussianIid { .. }
            | NoiseFamily::StudentTIid { .. }
            | NoiseFamily::LogTemperedCauchyIid { .. } => Dependence::Iid,
            NoiseFamily::IndependentDriftingMean { .. } => Dependence::Independent,
            NoiseFamily::ScaledMartingaleDifference { .. } => Dependence::MartingaleDifference,
        }
    }

    /// `W` and `-W` have the same law.
    pub fn symmetric(&self) -> bool {
        match self.family {
            NoiseFamily::IndependentDriftingMean { mu0, .. } => mu0 == 0.0,
            // Each draw is conditionally symmetric, but the scale couples
            // consecutive draws, so the joint law is not sign-symmetric.
            NoiseFamily::ScaledMartingaleDifference { .. } => false,
            _ => true,
        }
    }

    /// `E|W_1| < ∞` holds and the mean is zero (for every index).
    pub fn mean_is_zero(&self) -> bool {
        match self.family {
            NoiseFamily::IndependentDriftingMean { mu0, .. } => mu0 == 0.0,
            _ => self.law.abs_moment(1.0).is_finite(),
        }
    }

    /// Sup over `n` of `E[‖W_n‖₂^α]`, `α ∈ (0, 2]`.
    ///
    /// For `d > 1` the value is exact for Gaussian coordinates and for
    /// `α = 2`; otherwise it is the bound `d · E|W_{n,1}|^α`, which holds
    /// by subadditivity of `t ↦ t^{α/2}`.
    pub fn moment_envelope(&self, alpha: f64) -> MomentVerdict {
        if !(alpha > 0.0 && alpha <= 2.0) {
            return MomentVerdict::Unknown;
        }
        let d = self.dim as f64;
        let coord = self.coordinate_moment(alpha);
        let (value, exact) = match coord {
            MomentVerdict::Finite { value, exact } => (value, exact),
            other => return other,
        };
        if self.dim == 1 {
            return MomentVerdict::Finite { value, exact };
        }
        match (self.family.clone(), alpha) {
            (NoiseFamily::GaussianIid { sigma }, _) => {
                let ln_chi = 0.5 * alpha * 2f64.ln() + ln_gamma(0.5 * (d + alpha)) - ln_gamma(0.5 * d);
                MomentVerdict::Finite { value: sigma.powf(alpha) * ln_chi.exp(), exact: true }
            }
            (_, 2.0) => MomentVerdict::Finite { value: d * value, exact },
            _ => MomentVerdict::Finite { value: d * value, exact: false },
        }
    }

    /// Sup over `n` of `E|W_{n,i}|^α` for one coordinate.
    pub fn coordinate_moment(&self, alpha: f64) -> MomentVerdict {
        match self.family {
            NoiseFamily::ScaledMartingaleDifference { .. } => match self.law.abs_moment(alpha) {
                // Past-measurable scale lies in [0.5, 1.5].
                MomentVerdict::Finite { value, .. } => {
                    MomentVerdict::Finite { value: 1.5f64.powf(alpha) * value, exact: false }
                }
                other => other,
            },
            NoiseFamily::IndependentDriftingMean { mu0, sigma } => {
                // E|μ + σZ|^α is increasing in |μ|, so n = 1 attains the sup.
                MomentVerdict::Finite { value: shifted_gaussian_abs_moment(mu0, sigma, alpha), exact: true }
            }
            _ => self.law.abs_moment(alpha),
        }
    }

    /// `E[|W_{1,i}| / (ln(1 + |W_{1,i}|))^δ]` for i.i.d. families.
    pub fn log_moment(&self, delta: f64) -> Result<MomentVerdict> {
        if !(delta > 0.0 && delta <= 1.0) {
            return Err(Error::invalid("delta", format!("must lie in (0, 1], got {delta}")));
        }
        if self.dependence() != Dependence::Iid {
            return Err(Error::Unsupported(
                "log-tempered moment is defined for i.i.d. families only".into(),
            ));
        }
        Ok(self.law.log_tempered_moment(delta))
    }

    /// Stream seeded with `seed`.
    pub fn stream(&self, seed: u64) -> NoiseStream {
        NoiseStream::new(self.clone(), seed)
    }
}

/// `E|μ + σZ|^α` for standard normal `Z`.
pub fn shifted_gaussian_abs_moment(mu: f64, sigma: f64, alpha: f64) -> f64 {
    if sigma == 0.0 {
        return mu.abs().powf(alpha);
    }
    let kink = -mu / sigma;
    let f = |z: f64| (mu + sigma * z).abs().powf(alpha) * (-0.5 * z * z).exp() / (2.0 * PI).sqrt();
    let lo = kink.min(0.0) - 40.0;
    let hi = kink.max(0.0) + 40.0;
    let mut breaks = vec![lo, hi];
    if kink > lo && kink < hi {
        breaks.insert(1, kink);
    }
    quad::integrate_with_breaks(f, &breaks, 1e-11)
}

#[derive(Clone, Debug)]
struct Channel {
    index: u64,
    prev_first: f64,
}

/// Seeded single-owner noise generator.
#[derive(Clone, Debug)]
pub struct NoiseStream {
    model: NoiseModel,
    seed: u64,
    rng: ChaCha8Rng,
    student: Option<StudentT<f64>>,
    channels: [Channel; 2],
}

impl NoiseStream {
    pub fn new(model: NoiseModel, seed: u64) -> Self {
        let student = match model.law {
            CoordinateLaw::StudentT { nu, .. } => Some(StudentT::new(nu).expect("validated tail index")),
            _ => None,
        };
        let fresh = Channel { index: 0, prev_first: 0.0 };
        NoiseStream {
            model,
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
            student,
            channels: [fresh.clone(), fresh],
        }
    }

    pub fn model(&self) -> &NoiseModel {
        &self.model
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Number of SA draws (or pairs) produced so far.
    pub fn index(&self) -> u64 {
        self.channels[0].index
    }

    fn draw(&mut self, channel: usize, out: &mut [f64]) {
        assert_eq!(out.len(), self.model.dim, "noise buffer has wrong dimension");
        let law = self.model.law;
        let ch = &self.channels[channel];
        let n = ch.index + 1;
        let factor = match self.model.family {
            NoiseFamily::ScaledMartingaleDifference { .. } => 1.0 + 0.5 * ch.prev_first.sin(),
            _ => 1.0,
        };
        let shift = match self.model.family {
            NoiseFamily::IndependentDriftingMean { mu0, .. } => mu0 / n as f64,
            _ => 0.0,
        };
        for slot in out.iter_mut() {
            *slot = shift + factor * law.sample(&mut self.rng, self.student.as_ref());
        }
        let ch = &mut self.channels[channel];
        ch.index = n;
        ch.prev_first = out[0];
    }

    /// Writes the next `W_{n+1}` into `out`.
    pub fn fill_sa_noise(&mut self, out: &mut [f64]) {
        self.draw(0, out);
    }

    pub fn next_sa_noise(&mut self) -> Vec<f64> {
        let mut out = vec![0.0; self.model.dim];
        self.fill_sa_noise(&mut out);
        out
    }

    /// Writes the next `(M'_{n+1}, M''_{n+1})`. The two components come from
    /// separate channels of the stream, so they are independent copies.
    pub fn fill_sgd_noise_pair(&mut self, first: &mut [f64], second: &mut [f64]) {
        self.draw(0, first);
        self.draw(1, second);
    }

    pub fn next_sgd_noise_pair(&mut self) -> (Vec<f64>, Vec<f64>) {
        let mut a = vec![0.0; self.model.dim];
        let mut b = vec![0.0; self.model.dim];
        self.fill_sgd_noise_pair(&mut a, &mut b);
        (a, b)
    }
}
