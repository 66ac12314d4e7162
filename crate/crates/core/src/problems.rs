//! Target maps with certified contraction constants.
//!
//! The contraction condition is used in the form
//! `‖x − x* − b·G(x)‖ ≤ ρ‖x − x*‖`, with `b` the gain applied to `G`.
//! Both built-in examples certify their constants in this form; `b = 1`
//! for contractions and `b = 1/(1+g+h)` for strongly convex quadratics.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::norm::Norm;

type MapFn = dyn Fn(&[f64], &mut [f64]) + Send + Sync;
type ObjectiveFn = dyn Fn(&[f64]) -> f64 + Send + Sync;

/// A root-finding problem `G(x) = 0` with certified `(b, ρ)`.
#[derive(Clone)]
pub struct SaProblem {
    name: String,
    x_star: Vec<f64>,
    b: f64,
    rho: f64,
    norm: Norm,
    map: Arc<MapFn>,
}

impl fmt::Debug for SaProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SaProblem")
            .field("name", &self.name)
            .field("x_star", &self.x_star)
            .field("b", &self.b)
            .field("rho", &self.rho)
            .field("norm", &self.norm)
            .finish()
    }
}

impl SaProblem {
    pub fn new<F>(name: impl Into<String>, x_star: Vec<f64>, b: f64, rho: f64, norm: Norm, map: F) -> Result<Self>
    where
        F: Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    {
        if x_star.is_empty() {
            return Err(Error::invalid("dim", "must be at least 1"));
        }
        if !(b > 0.0 && b.is_finite()) {
            return Err(Error::invalid("b", format!("must be positive, got {b}")));
        }
        if !(0.0..1.0).contains(&rho) {
            return Err(Error::invalid("rho", format!("must lie in [0, 1), got {rho}")));
        }
        Ok(SaProblem { name: name.into(), x_star, b, rho, norm, map: Arc::new(map) })
    }

    /// Same map with different declared constants (for negative controls).
    pub fn with_constants(&self, b: f64, rho: f64) -> Self {
        SaProblem { b, rho, ..self.clone() }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.x_star.len()
    }

    pub fn x_star(&self) -> &[f64] {
        &self.x_star
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn norm(&self) -> Norm {
        self.norm
    }

    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        (self.map)(x, out)
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        self.eval_into(x, &mut out);
        out
    }

    /// `‖x − x*‖` in the declared norm.
    pub fn error(&self, x: &[f64]) -> f64 {
        self.norm.dist(x, &self.x_star)
    }

    /// `‖x − x* − b·G(x)‖ / ‖x − x*‖`, or `None` at `x = x*`.
    pub fn contraction_ratio(&self, x: &[f64]) -> Option<f64> {
        let den = self.error(x);
        if den == 0.0 {
            return None;
        }
        let g = self.eval(x);
        let r: Vec<f64> = x.iter().zip(&self.x_star).zip(&g).map(|((xi, si), gi)| xi - si - self.b * gi).collect();
        Some(self.norm.of(&r) / den)
    }
}

/// Where [`verify_v1`] draws its sample points.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SampleRegion {
    /// `[−radius, radius]^d`.
    Box { radius: f64 },
    /// `ℓ∞` ball of the given radius around `x*`.
    AroundSolution { radius: f64 },
}

/// Constants `(b, ρ, a)` under which the per-coordinate finite-difference
/// condition holds for every `c ≤ c_max` on `region`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct V1Certificate {
    pub b: f64,
    pub rho: f64,
    pub a: f64,
    pub c_max: f64,
    pub region: SampleRegion,
}

/// A minimisation problem `min F` for zeroth-order SGD.
#[derive(Clone)]
pub struct SgdProblem {
    name: String,
    x_star: Vec<f64>,
    certificate: Option<V1Certificate>,
    objective: Arc<ObjectiveFn>,
}

impl fmt::Debug for SgdProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SgdProblem")
            .field("name", &self.name)
            .field("x_star", &self.x_star)
            .field("certificate", &self.certificate)
            .finish()
    }
}

impl SgdProblem {
    pub fn new<F>(name: impl Into<String>, x_star: Vec<f64>, certificate: Option<V1Certificate>, objective: F) -> Result<Self>
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        if x_star.is_empty() {
            return Err(Error::invalid("dim", "must be at least 1"));
        }
        if let Some(c) = &certificate {
            if !(c.b > 0.0 && (0.0..1.0).contains(&c.rho) && c.a >= 0.0 && c.c_max > 0.0) {
                return Err(Error::invalid("certificate", format!("inconsistent constants {c:?}")));
            }
        }
        Ok(SgdProblem { name: name.into(), x_star, certificate, objective: Arc::new(objective) })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.x_star.len()
    }

    pub fn x_star(&self) -> &[f64] {
        &self.x_star
    }

    pub fn certificate(&self) -> Option<&V1Certificate> {
        self.certificate.as_ref()
    }

    pub fn c_max(&self) -> Option<f64> {
        self.certificate.map(|c| c.c_max)
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        (self.objective)(x)
    }

    /// `‖y − x*‖∞`.
    pub fn error(&self, y: &[f64]) -> f64 {
        Norm::LInf.dist(y, &self.x_star)
    }
}

/// Orthogonal factor for [`builtin_contraction`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Mixing {
    /// `R = I`; certified in `ℓ∞`.
    #[default]
    Identity,
    /// Haar-random orthogonal `R`; certified in `ℓ2`.
    RandomRotation { seed: u64 },
}

fn random_orthogonal(d: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = a.qr();
    let (mut q, r) = (qr.q(), qr.r());
    // Sign fix so the distribution is Haar.
    for j in 0..d {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// `G(x) = x − H(x)` for `H(x) = ρ₀·R·(x − target) + target`, with `b = 1`
/// and `ρ = ρ₀`.
pub fn builtin_contraction(d: usize, rho0: f64, target: &[f64], mixing: Mixing) -> Result<SaProblem> {
    if d == 0 {
        return Err(Error::invalid("dim", "must be at least 1"));
    }
    if !(0.0..1.0).contains(&rho0) {
        return Err(Error::invalid("rho0", format!("must lie in [0, 1), got {rho0}")));
    }
    if target.len() != d {
        return Err(Error::invalid("target", format!("expected {d} entries, got {}", target.len())));
    }
    let t = target.to_vec();
    match mixing {
        Mixing::Identity => {
            let tt = t.clone();
            SaProblem::new("contraction", t, 1.0, rho0, Norm::LInf, move |x, out| {
                for i in 0..x.len() {
                    out[i] = (1.0 - rho0) * (x[i] - tt[i]);
                }
            })
        }
        Mixing::RandomRotation { seed } => {
            let r = random_orthogonal(d, seed);
            let rows: Vec<Vec<f64>> = (0..d).map(|i| (0..d).map(|j| r[(i, j)]).collect()).collect();
            let tt = t.clone();
            SaProblem::new("contraction", t, 1.0, rho0, Norm::L2, move |x, out| {
                for i in 0..x.len() {
                    let mix: f64 = rows[i].iter().zip(x).zip(&tt).map(|((rij, xj), tj)| rij * (xj - tj)).sum();
                    out[i] = x[i] - tt[i] - rho0 * mix;
                }
            })
        }
    }
}

/// `F(x) = ½xᵀQx − pᵀx` in both forms, with its spectral bounds.
#[derive(Clone, Debug)]
pub struct Quadratic {
    pub sa: SaProblem,
    pub sgd: SgdProblem,
    pub g: f64,
    pub h: f64,
}

/// Strongly convex quadratic with `b = 1/(1+g+h)` and `ρ = (1+h)/(1+g+h)`.
///
/// The SGD form is certified (in `ℓ∞`, with `a = 0`) only for diagonal `Q`.
pub fn builtin_strongly_convex_quadratic(q: &DMatrix<f64>, p: &[f64]) -> Result<Quadratic> {
    let d = q.nrows();
    if d == 0 || q.ncols() != d {
        return Err(Error::invalid("Q", "must be a nonempty square matrix"));
    }
    if p.len() != d {
        return Err(Error::invalid("p", format!("expected {d} entries, got {}", p.len())));
    }
    let scale = q.amax().max(1.0);
    if (q - q.transpose()).amax() > 1e-12 * scale {
        return Err(Error::invalid("Q", "must be symmetric"));
    }
    let eig = q.clone().symmetric_eigen();
    let g = eig.eigenvalues.min();
    let h = eig.eigenvalues.max();
    if !(g > 0.0) {
        return Err(Error::invalid("Q", format!("must be positive definite, smallest eigenvalue {g}")));
    }
    let diagonal = (0..d).all(|i| (0..d).all(|j| i == j || q[(i, j)] == 0.0));
    let x_star: Vec<f64> = if diagonal {
        (0..d).map(|i| p[i] / q[(i, i)]).collect()
    } else {
        let pv = DVector::from_column_slice(p);
        q.clone().cholesky().expect("positive definite").solve(&pv).iter().copied().collect()
    };
    let b = 1.0 / (1.0 + g + h);
    let rho = (1.0 + h) / (1.0 + g + h);

    let rows: Vec<Vec<f64>> = (0..d).map(|i| (0..d).map(|j| q[(i, j)]).collect()).collect();
    let pp = p.to_vec();
    let sa = {
        let (rows, pp) = (rows.clone(), pp.clone());
        SaProblem::new("quadratic", x_star.clone(), b, rho, Norm::L2, move |x, out| {
            for i in 0..x.len() {
                out[i] = rows[i].iter().zip(x).map(|(a, b)| a * b).sum::<f64>() - pp[i];
            }
        })?
    };
    let certificate = diagonal.then_some(V1Certificate {
        b,
        rho,
        a: 0.0,
        c_max: f64::INFINITY,
        region: SampleRegion::AroundSolution { radius: 10.0 },
    });
    let sgd = SgdProblem::new("quadratic", x_star, certificate, move |x| {
        let mut v = 0.0;
        for i in 0..x.len() {
            let qx: f64 = rows[i].iter().zip(x).map(|(a, b)| a * b).sum();
            v += 0.5 * x[i] * qx - pp[i] * x[i];
        }
        v
    })?;
    Ok(Quadratic { sa, sgd, g, h })
}

/// Diagonal quadratic `Q = diag(q)`.
pub fn builtin_diagonal_quadratic(q: &[f64], p: &[f64]) -> Result<Quadratic> {
    builtin_strongly_convex_quadratic(&DMatrix::from_diagonal(&DVector::from_column_slice(q)), p)
}

/// `F(x) = Σ (½q_i x_i² − p_i x_i + ε x_i⁴)` certified on the box
/// `[−R, R]^d` for increments up to `c_max`.
///
/// On the box the curvature lies in `[min q, max q + 12εR²]`, and the central
/// difference overshoots the gradient by `4εx_i c²`, which yields
/// `a = 4bεR·c_max`.
pub fn builtin_quartic(q: &[f64], p: &[f64], epsilon: f64, box_radius: f64, c_max: f64) -> Result<SgdProblem> {
    let d = q.len();
    if d == 0 || p.len() != d {
        return Err(Error::invalid("p", "must match the dimension of q"));
    }
    if q.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::invalid("q", "diagonal must be positive"));
    }
    if !(epsilon >= 0.0) || !(box_radius > 0.0) || !(c_max > 0.0) {
        return Err(Error::invalid("epsilon", "epsilon must be nonnegative, box_radius and c_max positive"));
    }
    let x_star: Vec<f64> = q.iter().zip(p).map(|(&qi, &pi)| solve_cubic(qi, pi, epsilon)).collect();
    if x_star.iter().any(|x| x.abs() > box_radius) {
        return Err(Error::invalid("box_radius", "minimiser lies outside the box"));
    }
    let g = q.iter().cloned().fold(f64::INFINITY, f64::min);
    let h = q.iter().cloned().fold(0.0, f64::max) + 12.0 * epsilon * box_radius * box_radius;
    let b = 1.0 / (1.0 + g + h);
    let certificate = V1Certificate {
        b,
        rho: (1.0 + h) / (1.0 + g + h),
        a: 4.0 * b * epsilon * box_radius * c_max,
        c_max,
        region: SampleRegion::Box { radius: box_radius },
    };
    let (q, p) = (q.to_vec(), p.to_vec());
    SgdProblem::new("quartic", x_star, Some(certificate), move |x| {
        x.iter()
            .enumerate()
            .map(|(i, &xi)| 0.5 * q[i] * xi * xi - p[i] * xi + epsilon * xi.powi(4))
            .sum()
    })
}

/// Unique real root of `q x + 4ε x³ = p`.
fn solve_cubic(q: f64, p: f64, eps: f64) -> f64 {
    let mut x = p / q;
    for _ in 0..100 {
        let f = q * x + 4.0 * eps * x * x * x - p;
        let df = q + 12.0 * eps * x * x;
        let step = f / df;
        x -= step;
        if step.abs() <= 1e-16 * (1.0 + x.abs()) {
            break;
        }
    }
    x
}

fn sample_in_ball<R: Rng>(rng: &mut R, norm: Norm, d: usize, radius: f64, shell: bool) -> Vec<f64> {
    match norm {
        Norm::L2 => {
            let z: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            let n = Norm::L2.of(&z);
            let r = if shell { radius } else { radius * rng.random::<f64>().powf(1.0 / d as f64) };
            z.iter().map(|v| v / n * r).collect()
        }
        Norm::LInf => {
            let mut x: Vec<f64> = (0..d).map(|_| radius * (2.0 * rng.random::<f64>() - 1.0)).collect();
            if shell {
                let i = rng.random_range(0..d);
                x[i] = if rng.random::<bool>() { radius } else { -radius };
            }
            x
        }
        Norm::L1 => {
            let e: Vec<f64> = (0..=d).map(|_| rng.sample(Exp1)).collect();
            let total: f64 = if shell { e[..d].iter().sum() } else { e.iter().sum() };
            (0..d).map(|i| if rng.random::<bool>() { 1.0 } else { -1.0 } * e[i] / total * radius).collect()
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct U2Report {
    pub samples: usize,
    pub max_ratio: f64,
    /// Sample attaining `max_ratio`.
    pub worst: Vec<f64>,
    pub rho: f64,
    pub passed: bool,
}

/// Monte-Carlo check of the contraction condition. Half the samples are
/// uniform in the declared-norm ball of `radius` around `x*`, the other
/// half lie on its boundary.
pub fn verify_u2(prob: &SaProblem, n_samples: usize, radius: f64, seed: u64) -> Result<U2Report> {
    if n_samples < 1000 {
        return Err(Error::invalid("n_samples", format!("need at least 1000, got {n_samples}")));
    }
    if !(radius > 0.0) {
        return Err(Error::invalid("radius", "must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_ratio = 0.0;
    let mut worst = prob.x_star.clone();
    for k in 0..n_samples {
        let offset = sample_in_ball(&mut rng, prob.norm, prob.dim(), radius, k % 2 == 0);
        let x: Vec<f64> = offset.iter().zip(&prob.x_star).map(|(o, s)| o + s).collect();
        if let Some(r) = prob.contraction_ratio(&x) {
            if r > max_ratio {
                max_ratio = r;
                worst = x;
            }
        }
    }
    Ok(U2Report { samples: n_samples, max_ratio, worst, rho: prob.rho, passed: max_ratio <= prob.rho + 1e-9 })
}

#[derive(Clone, Debug, PartialEq)]
pub struct V1Violation {
    pub coordinate: usize,
    pub c: f64,
    pub sample: Vec<f64>,
    pub slack: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct V1Report {
    pub samples: usize,
    /// `max |x_i − x*_i − CD_i/b| − ρ‖x − x*‖∞ − a·c` over samples, `i`, `c`,
    /// with `CD_i` the central difference.
    pub max_slack: f64,
    /// Per entry of `c_grid`, the largest slack seen.
    pub per_c: Vec<(f64, f64)>,
    /// First (coordinate, c, sample) with positive slack beyond tolerance.
    pub violation: Option<V1Violation>,
    pub passed: bool,
}

/// Monte-Carlo check of the per-coordinate finite-difference condition.
pub fn verify_v1(prob: &SgdProblem, n_samples: usize, c_grid: &[f64], seed: u64) -> Result<V1Report> {
    let cert = prob
        .certificate
        .ok_or_else(|| Error::Unsupported(format!("problem `{}` carries no certificate", prob.name)))?;
    if c_grid.is_empty() || c_grid.iter().any(|&c| !(c > 0.0)) {
        return Err(Error::invalid("c_grid", "increments must be positive"));
    }
    let d = prob.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut per_c: Vec<(f64, f64)> = c_grid.iter().map(|&c| (c, f64::NEG_INFINITY)).collect();
    let mut violation = None;
    let mut y = vec![0.0; d];
    for k in 0..n_samples {
        let x: Vec<f64> = match cert.region {
            SampleRegion::Box { radius } => sample_in_ball(&mut rng, Norm::LInf, d, radius, k % 2 == 0),
            SampleRegion::AroundSolution { radius } => sample_in_ball(&mut rng, Norm::LInf, d, radius, k % 2 == 0)
                .iter()
                .zip(&prob.x_star)
                .map(|(o, s)| o + s)
                .collect(),
        };
        let dist = prob.error(&x);
        for (slot, &c) in per_c.iter_mut().zip(c_grid) {
            for i in 0..d {
                y.copy_from_slice(&x);
                y[i] = x[i] + c;
                let fp = prob.objective(&y);
                y[i] = x[i] - c;
                let fm = prob.objective(&y);
                let lhs = (x[i] - prob.x_star[i] - (fp - fm) * cert.b / (2.0 * c)).abs();
                let slack = lhs - cert.rho * dist - cert.a * c;
                if slack > slot.1 {
                    slot.1 = slack;
                }
                if slack > 1e-9 && violation.is_none() {
                    violation = Some(V1Violation { coordinate: i, c, sample: x.clone(), slack });
                }
            }
        }
    }
    let max_slack = per_c.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
    Ok(V1Report { samples: n_samples, max_slack, per_c, passed: violation.is_none(), violation })
}
