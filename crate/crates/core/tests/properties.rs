use proptest::prelude::*;

use stochapprox::conditions::{check_h, check_k, EvidenceBasis, Verdict};
use stochapprox::config::parse_config;
use stochapprox::experiment::{run_experiment, summarize, SaRow};
use stochapprox::gslln::{gslln_step, kronecker_oracle, log_inequality_check, LogInequality};
use stochapprox::noise::NoiseModel;
use stochapprox::problems::{builtin_contraction, Mixing};
use stochapprox::sa_engine::sa_step;
use stochapprox::schedules::{IncrementSchedule, Rate, Schedule};
use stochapprox::sgd_engine::{sgd_run, MaskPolicy, SgdRunConfig};

fn noise_model() -> impl Strategy<Value = NoiseModel> {
    prop_oneof![
        (0.1f64..3.0).prop_map(|s| NoiseModel::gaussian(1, s).unwrap()),
        (1.05f64..4.0).prop_map(|nu| NoiseModel::student_t(1, nu, 1.0).unwrap()),
        (0.5f64..3.0).prop_map(|p| NoiseModel::log_tempered_cauchy(1, p, 1.0).unwrap()),
        (1.2f64..3.5).prop_map(|nu| NoiseModel::martingale_difference(1, nu, 1.0).unwrap()),
        (-2.0f64..2.0).prop_map(|mu| NoiseModel::drifting_mean(1, mu, 1.0).unwrap()),
    ]
}

fn schedule() -> impl Strategy<Value = Schedule> {
    prop_oneof![
        (0.2f64..4.0).prop_map(Schedule::harmonic),
        ((0.2f64..4.0), prop_oneof![Just(0.5), Just(2.0 / 3.0), Just(0.75), Just(1.0)])
            .prop_map(|(d, g)| Schedule::power_law(d, g)),
        ((0.2f64..4.0), prop_oneof![Just(0.25), Just(0.5), Just(1.0)]).prop_map(|(d, delta)| Schedule::log_tempered(d, delta)),
    ]
}

fn divide(s: &Schedule, c0: f64) -> Schedule {
    match s {
        Schedule::Harmonic { d } => Schedule::harmonic(d / c0),
        Schedule::PowerLaw { d, gamma } => Schedule::power_law(d / c0, *gamma),
        Schedule::LogTempered { d, delta } => Schedule::log_tempered(d / c0, *delta),
        Schedule::Constant { value } => Schedule::Constant { value: value / c0 },
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn quantiles_are_monotone(errs in prop::collection::vec((0.0f64..1e3, any::<bool>()), 1..80)) {
        let rows: Vec<SaRow> = errs.iter().enumerate().map(|(t, &(e, d))| SaRow {
            experiment_id: "p".into(), trial: t, seed: t as u64, checkpoint_n: 5, err: e, phi_n: 1.0, diverged: d, beta_n: 0.1,
        }).collect();
        let s = summarize("p", &rows).unwrap();
        let c = &s.checkpoints[0];
        prop_assert_eq!(s.diverged, errs.iter().filter(|e| e.1).count());
        prop_assert_eq!(c.count + s.diverged, errs.len());
        prop_assert!(c.q10 <= c.q50 && c.q50 <= c.q90);
    }

    #[test]
    fn zero_noise_step_respects_contraction_envelope(
        rho0 in 0.0f64..0.99,
        d in 1usize..6,
        seed in any::<u64>(),
        x in prop::collection::vec(-50.0f64..50.0, 6),
        frac in 0.0f64..1.0,
    ) {
        let p = builtin_contraction(d, rho0, &vec![0.3; d], Mixing::RandomRotation { seed }).unwrap();
        let x = &x[..d];
        let beta = frac * p.b();
        let next = sa_step(&p, x, beta, 1.0, &vec![0.0; d]);
        let factor = (1.0 - beta / p.b()) + beta / p.b() * p.rho();
        prop_assert!(p.error(&next) <= factor * p.error(x) + 1e-12 * (1.0 + p.error(x)));
    }

    #[test]
    fn log_inequality_never_violated(lx in -8.0f64..15.0, delta in 0.01f64..1.0, excess in 1.0f64..1e6) {
        let x = 10f64.powf(lx);
        let y = x / x.ln_1p().powf(delta) * excess;
        let holds = matches!(log_inequality_check(x, y, delta).unwrap(), LogInequality::Holds { .. });
        prop_assert!(holds);
    }

    #[test]
    fn kronecker_constant_input(c in -5.0f64..5.0, tau in 0.001f64..0.999, n in 1usize..2000) {
        let s = kronecker_oracle(|_| tau, |_| c, n, &[]).s_final;
        let expected = c * (1.0 - (1.0 - tau).powi(n as i32));
        prop_assert!((s - expected).abs() <= 1e-12 * (1.0 + c.abs()));
    }

    #[test]
    fn gslln_step_is_a_convex_combination(
        s in prop::collection::vec(-10.0f64..10.0, 3),
        w in prop::collection::vec(-10.0f64..10.0, 3),
        t in 0.01f64..5.0,
        beta in 0.0f64..1.0,
        zeta in -2.0f64..2.0,
    ) {
        prop_assume!(t * beta <= 1.0);
        let next = gslln_step(&s, t, beta, zeta, &w);
        for i in 0..3 {
            let (lo, hi) = (s[i].min(zeta * w[i]), s[i].max(zeta * w[i]));
            prop_assert!(next[i] >= lo - 1e-12 && next[i] <= hi + 1e-12);
        }
    }

    #[test]
    fn schedules_are_positive_and_eventually_decreasing(s in schedule()) {
        let mut prev = f64::INFINITY;
        for n in 2..500 {
            let v = s.eval(n);
            prop_assert!(v > 0.0 && v.is_finite());
            prop_assert!(v <= prev);
            prev = v;
        }
        prop_assert!(s.asymptotic().tends_to_zero());
    }

    #[test]
    fn evaluations_count_active_coordinates(active in prop::collection::vec(any::<bool>(), 1..5), horizon in 1usize..300) {
        let d = active.len();
        let quad = stochapprox::problems::builtin_diagonal_quadratic(&vec![1.0; d], &vec![0.0; d]).unwrap();
        let cfg = SgdRunConfig {
            problem: quad.sgd,
            eta: Schedule::harmonic(0.5),
            c: IncrementSchedule::PowerLaw { gamma: 0.25 },
            mask: MaskPolicy::Fixed { active: active.clone() },
            multiplier: stochapprox::schedules::Multiplier::Constant { value: 1.0 },
            noise: NoiseModel::gaussian(d, 1.0).unwrap(),
            seed: 1,
            y0: vec![1.0; d],
            horizon,
            record: Default::default(),
            run_id: 0,
        };
        let traj = sgd_run(&cfg).unwrap();
        let k = active.iter().filter(|&&a| a).count() as u64;
        prop_assert_eq!(traj.evaluations, 2 * k * horizon as u64);
        for (i, a) in active.iter().enumerate() {
            if !a {
                prop_assert_eq!(traj.final_state[i], 1.0);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn constant_increment_substitution_identity(model in noise_model(), eta in schedule(), c0 in 0.1f64..5.0) {
        let k = check_k(&model, &eta, &IncrementSchedule::Constant { value: c0 });
        let h = check_h(&model, &divide(&eta, c0));
        prop_assert_eq!(k.len(), h.len());
        for (a, b) in k.iter().zip(&h) {
            prop_assert!(a.matches(b), "{:?}\n{:?}", a, b);
        }
    }

    #[test]
    fn holds_carries_only_backed_evidence(model in noise_model(), rate in schedule()) {
        for r in check_h(&model, &rate) {
            if r.verdict == Verdict::Holds {
                for e in &r.evidence {
                    let backed = matches!(e.basis, EvidenceBasis::Analytic | EvidenceBasis::Oracle);
                    prop_assert!(backed);
                    prop_assert_eq!(e.satisfied, Some(true));
                }
            }
        }
    }

    #[test]
    fn rows_do_not_depend_on_worker_count(seed in any::<u64>(), workers in 2usize..6) {
        let text = format!(r#"{{
            "mode": "sa", "trials": 9, "base_seed": {seed}, "horizon": 400,
            "problem": {{"kind": "contraction", "dim": 2, "rho0": 0.7}},
            "noise": {{"family": "log_tempered_cauchy_iid", "p": 1.5, "scale": 1.0}},
            "schedule": {{"kind": "log_tempered", "delta": 0.5}}
        }}"#);
        let cfg = parse_config(&text).unwrap();
        let a = run_experiment(&cfg, Some(1)).unwrap();
        let b = run_experiment(&cfg, Some(workers)).unwrap();
        prop_assert_eq!(a.rows, b.rows);
        prop_assert_eq!(a.summary.config_hash, b.summary.config_hash);
    }

    #[test]
    fn resolved_config_is_a_fixed_point(trials in 1usize..50, horizon in 1usize..100_000, seed in any::<u64>()) {
        let text = format!(r#"{{
            "mode": "sgd", "trials": {trials}, "base_seed": {seed}, "horizon": {horizon},
            "problem": {{"kind": "diagonal_quadratic", "q": [1.0, 2.0], "p": [0.0, 1.0]}},
            "noise": {{"family": "gaussian_iid", "sigma": 1.0}},
            "eta": {{"kind": "harmonic"}},
            "c": {{"kind": "log_power", "kappa": 1.0}}
        }}"#);
        let cfg = parse_config(&text).unwrap();
        let again = parse_config(&serde_json::to_string(&cfg).unwrap()).unwrap();
        prop_assert_eq!(cfg.hash(), again.hash());
        prop_assert_eq!(&cfg, &again);
        prop_assert_eq!(cfg.checkpoints.last(), Some(&horizon));
    }
}
