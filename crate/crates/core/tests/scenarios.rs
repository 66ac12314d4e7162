//! End-to-end scenarios: engines driven by presets the condition checker
//! certifies, and summary edge cases.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stochapprox::conditions::{check_h, check_k, Verdict};
use stochapprox::config::parse_config;
use stochapprox::experiment::{run_experiment, summarize, Rows, SaRow};
use stochapprox::noise::NoiseModel;
use stochapprox::schedules::{IncrementSchedule, Schedule};

fn sa_rows(text: &str) -> Vec<SaRow> {
    match run_experiment(&parse_config(text).unwrap(), None).unwrap().rows {
        Rows::Sa(r) => r,
        _ => unreachable!(),
    }
}

fn median_at(rows: &[SaRow], n: usize) -> f64 {
    summarize("s", rows).unwrap().median_at(None, n).unwrap()
}

#[test]
fn one_divergent_trial_in_a_hundred() {
    let stable = r#"{"mode": "sa", "trials": 99, "horizon": 600, "checkpoints": [50],
        "problem": {"kind": "contraction", "dim": 1, "rho0": 0.5},
        "noise": {"family": "gaussian_iid", "sigma": 1.0},
        "schedule": {"kind": "harmonic"}}"#;
    // Constant step 10 on G(x) = x/2 multiplies the state by -4 each step.
    let unstable = stable.replace("\"trials\": 99", "\"trials\": 1").replace(r#"{"kind": "harmonic"}"#, r#"{"kind": "constant", "value": 10.0}"#);
    let mut rows = sa_rows(stable);
    let baseline = summarize("s", &rows).unwrap();
    let mut bad = sa_rows(&unstable);
    assert!(bad.iter().all(|r| r.diverged));
    for r in &mut bad {
        r.trial = 99;
    }
    rows.extend(bad);
    let s = summarize("s", &rows).unwrap();
    assert_eq!(s.runs, 100);
    assert_eq!(s.diverged, 1);
    for (a, b) in s.checkpoints.iter().zip(&baseline.checkpoints) {
        assert_eq!((a.n, a.count, a.q10, a.q50, a.q90), (b.n, 99, b.q10, b.q50, b.q90));
    }
}

/// Presets certified by the checker show decaying median error.
#[test]
fn certified_presets_converge() {
    let cases = [
        ("H1", NoiseModel::gaussian(2, 1.0).unwrap(), r#"{"family": "gaussian_iid", "sigma": 1.0}"#, r#"{"kind": "harmonic"}"#),
        (
            "H4",
            NoiseModel::drifting_mean(2, 3.0, 1.0).unwrap(),
            r#"{"family": "independent_drifting_mean", "mu0": 3.0, "sigma": 1.0}"#,
            r#"{"kind": "harmonic"}"#,
        ),
        (
            "H5",
            NoiseModel::martingale_difference(2, 3.0, 1.0).unwrap(),
            r#"{"family": "scaled_martingale_difference", "nu": 3.0, "scale": 1.0}"#,
            r#"{"kind": "power_law", "gamma": 0.75}"#,
        ),
        (
            "H3",
            NoiseModel::log_tempered_cauchy(2, 2.0, 1.0).unwrap(),
            r#"{"family": "log_tempered_cauchy_iid", "p": 2.0, "scale": 1.0}"#,
            r#"{"kind": "log_tempered", "delta": 1.0}"#,
        ),
    ];
    for (family, model, noise, schedule) in cases {
        let rate: Schedule = serde_json::from_str(schedule).unwrap();
        let reports = check_h(&model, &rate);
        let verdict = reports.iter().find(|r| r.family == family).unwrap().verdict;
        assert_eq!(verdict, Verdict::Holds, "{family}");
        let text = format!(
            r#"{{"mode": "sa", "trials": 40, "base_seed": 17, "horizon": 100000, "checkpoints": [100, 100000],
                "problem": {{"kind": "contraction", "dim": 2, "rho0": 0.5}},
                "noise": {noise}, "schedule": {schedule}}}"#
        );
        let rows = sa_rows(&text);
        assert!(rows.iter().all(|r| !r.diverged));
        let (early, late) = (median_at(&rows, 100), median_at(&rows, 100_000));
        assert!(late < early, "{family}: {early} -> {late}");
    }
}

/// Zeroth-order preset with log-tempered Cauchy pairs and `c_n = ln(2+n)^{-1/2}`.
#[test]
fn zeroth_order_log_tempered_preset() {
    let model = NoiseModel::log_tempered_cauchy(2, 2.0, 1.0).unwrap();
    let eta = Schedule::log_tempered(1.0, 1.0);
    let c = IncrementSchedule::LogPower { kappa: 0.5 };
    let k3 = check_k(&model, &eta, &c).into_iter().find(|r| r.family == "K3").unwrap();
    assert_eq!(k3.verdict, Verdict::Holds);
    assert!((k3.evidence("delta").unwrap().value - 0.5).abs() < 1e-12);

    let text = r#"{"mode": "sgd", "trials": 40, "base_seed": 23, "horizon": 100000, "checkpoints": [1000, 100000],
        "problem": {"kind": "diagonal_quadratic", "q": [1.0, 2.0], "p": [1.0, 1.0]},
        "noise": {"family": "log_tempered_cauchy_iid", "p": 2.0, "scale": 1.0},
        "eta": {"kind": "log_tempered", "delta": 1.0},
        "c": {"kind": "log_power", "kappa": 0.5}}"#;
    let out = run_experiment(&parse_config(text).unwrap(), None).unwrap();
    let (early, late) = (out.summary.median_at(None, 1000).unwrap(), out.summary.median_at(None, 100_000).unwrap());
    assert!(late < early, "{early} -> {late}");
}

/// For a symmetric law, `E[W 1{|W| ≤ t}] = 0` within Monte-Carlo error.
#[test]
fn symmetric_truncated_mean_vanishes() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for model in [NoiseModel::student_t(1, 1.5, 1.0).unwrap(), NoiseModel::log_tempered_cauchy(1, 2.0, 1.0).unwrap()] {
        let mut stream = model.stream(rng.random());
        let law = model.coordinate_law();
        for t in [1.0, 10.0, 100.0] {
            let n = 200_000;
            let (mut s, mut s2) = (0.0, 0.0);
            for _ in 0..n {
                let w = stream.next_sa_noise()[0];
                let v = if w.abs() <= t { w } else { 0.0 };
                s += v;
                s2 += v * v;
            }
            let mean = s / n as f64;
            let sd = (law.truncated_second(t) / n as f64).sqrt();
            assert!((s2 / n as f64 - law.truncated_second(t)).abs() < 0.05 * law.truncated_second(t) + 1e-3);
            assert!(mean.abs() < 5.0 * sd, "t = {t}: mean {mean}, sd {sd}");
        }
    }
}

/// Tanh-sinh rule on `(-1, 1)`: nodes and weights.
fn tanh_sinh(levels: i32) -> Vec<(f64, f64)> {
    let h = 2f64.powi(-levels);
    let half_pi = std::f64::consts::FRAC_PI_2;
    (-6 * (1 << levels)..=6 * (1 << levels))
        .map(|k| {
            let t = k as f64 * h;
            let s = half_pi * t.sinh();
            let x = s.tanh();
            let w = h * half_pi * t.cosh() / s.cosh().powi(2);
            (x, w)
        })
        .filter(|&(x, w)| x.abs() < 1.0 && w > 0.0)
        .collect()
}

/// `E|(A - B)/2|^alpha` for i.i.d. standard Student-t(nu), by quadrature in
/// `a = sqrt(nu) tan(theta)`, where the law becomes `cos(theta)^{nu-1} dtheta`.
fn student_pair_moment(nu: f64, alpha: f64) -> f64 {
    let rule = tanh_sinh(7);
    let half_pi = std::f64::consts::FRAC_PI_2;
    let pts: Vec<(f64, f64)> = rule
        .iter()
        .map(|&(x, w)| {
            let th = half_pi * x;
            (nu.sqrt() * th.tan(), w * half_pi * th.cos().powf(nu - 1.0))
        })
        .collect();
    let mass: f64 = pts.iter().map(|p| p.1).sum();
    let mut acc = 0.0;
    for &(a, wa) in &pts {
        for &(b, wb) in &pts {
            acc += wa * wb * (0.5 * (a - b)).abs().powf(alpha);
        }
    }
    acc / (mass * mass)
}

#[test]
fn student_t_pair_moments() {
    let model = NoiseModel::student_t(1, 1.5, 1.0).unwrap();
    assert!((student_pair_moment(5.0, 2.0) - 0.5 * 5.0 / 3.0).abs() < 1e-6);
    let oracle = student_pair_moment(1.5, 1.2);
    let mut stream = model.stream(2024);
    let n = 1_000_000;
    let m: Vec<f64> = (0..n)
        .map(|_| {
            let (a, b) = stream.next_sgd_noise_pair();
            0.5 * (a[0] - b[0])
        })
        .collect();
    let est = m.iter().map(|x| x.abs().powf(1.2)).sum::<f64>() / n as f64;
    assert!((est / oracle - 1.0).abs() < 0.1, "empirical {est}, quadrature {oracle}");

    // Infinite variance: the running mean of M^2 grows like n^{1/3}, so
    // 10^4 -> 10^6 draws multiplies it by about 4.6 in the typical case.
    let mut growth: Vec<f64> = (0..9u64)
        .map(|s| {
            let mut st = model.stream(100 + s);
            let sq: Vec<f64> = (0..n)
                .map(|_| {
                    let (a, b) = st.next_sgd_noise_pair();
                    (0.5 * (a[0] - b[0])).powi(2)
                })
                .collect();
            let mean = |k: usize| sq[..k].iter().sum::<f64>() / k as f64;
            mean(n) / mean(10_000)
        })
        .collect();
    growth.sort_by(f64::total_cmp);
    let typical = 100f64.powf(1.0 / 3.0);
    assert!(growth[4] > typical / 2.0 && growth[4] < typical * 2.0, "{growth:?}");
}
