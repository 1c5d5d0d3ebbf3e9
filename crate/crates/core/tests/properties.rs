use nalgebra::DMatrix;
use outbreak_core::experiments::{
    asymptotic_trials, default_init, envelope_trials, table2_params, wos_trials, ParamFamily,
};
use outbreak_core::integrator::IntegrationConfig;
use outbreak_core::model::{make_seiaqr, rhs, ModelParams, ReducedSystem, StageSpec, State};
use outbreak_core::spectral::{eigen_decomposition, l0_matrix, spectral};
use outbreak_core::strategy::{classify, q_at, ControllerState, Multipliers};
use outbreak_core::threshold::{s_bar, s_star};
use outbreak_core::{integrate, Error};
use proptest::prelude::*;

fn stage() -> impl Strategy<Value = (f64, f64, f64)> {
    (0.05f64..1.0, 0.05f64..1.0, 0.0f64..5.0)
}

prop_compose! {
    fn params()(sigma in 0.05f64..1.0, raw in prop::collection::vec(stage(), 1..=4)) -> ModelParams {
        let total: f64 = raw.iter().map(|r| r.0).sum();
        let n = raw.len();
        let mut x: Vec<f64> = raw.iter().map(|r| r.0 / total).collect();
        let head: f64 = x[..n - 1].iter().sum();
        x[n - 1] = (1.0 - head).max(0.0);
        let stages = raw
            .iter()
            .zip(x)
            .map(|(r, xi)| StageSpec::new(xi, r.1, r.2).unwrap())
            .collect();
        ModelParams::new(sigma, stages).unwrap()
    }
}

prop_compose! {
    fn equal_gamma_params()(p in params(), gamma in 0.05f64..1.0) -> ModelParams {
        let stages = p.stages.iter().map(|s| StageSpec::new(s.x, gamma, s.r_natural).unwrap()).collect();
        ModelParams::new(p.sigma, stages).unwrap()
    }
}

prop_compose! {
    fn with_state()(p in params())(
        w in prop::collection::vec(0.0f64..1.0, p.n_stages() + 3),
        q in prop::collection::vec(0.0f64..2.0, p.n_stages()),
        p in Just(p),
    ) -> (ModelParams, State, Vec<f64>) {
        let total: f64 = w.iter().sum::<f64>().max(1e-300);
        let y: Vec<f64> = w.iter().map(|v| v / total).collect();
        let n = p.n_stages();
        let head: f64 = y[..n + 2].iter().sum();
        let state = State::new(y[0], y[1], y[2..n + 2].to_vec(), (1.0 - head).max(0.0)).unwrap();
        (p, state, q)
    }
}

prop_compose! {
    fn positive_control()(p in params())(
        q in prop::collection::vec(0.01f64..1.5, p.n_stages()),
        p in Just(p),
    ) -> (ModelParams, Vec<f64>) {
        (p, q)
    }
}

fn finite_strategy() -> impl Strategy<Value = outbreak_core::Strategy> {
    (20.0f64..200.0, 10.0f64..200.0, 0.1f64..1.0).prop_map(|(t0, dt, q)| {
        outbreak_core::Strategy::ConstantFinite {
            t_start: t0,
            t_end: t0 + dt,
            q: Multipliers::Uniform(q),
        }
    })
}

fn any_strategy() -> impl Strategy<Value = outbreak_core::Strategy> {
    prop_oneof![
        Just(outbreak_core::Strategy::Natural {}),
        (0.0f64..200.0, 0.0f64..1.5).prop_map(|(t, q)| outbreak_core::Strategy::ConstantPermanent {
            t_start: t,
            q: Multipliers::Uniform(q)
        }),
        finite_strategy(),
        (0.0f64..200.0, 0.5f64..30.0)
            .prop_map(|(t, period)| outbreak_core::Strategy::RegulatedSStar { t_start: t, period }),
        (0.0f64..100.0, 1.0f64..50.0, 0.0f64..1.0, 0.0f64..1.0).prop_map(|(t, gap, a, b)| {
            outbreak_core::Strategy::PiecewiseUniform {
                breakpoints: vec![(t, a), (t + gap, b)],
            }
        }),
    ]
}

fn sum_sorted(v: &[f64]) -> f64 {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| a.abs().total_cmp(&b.abs()));
    sorted.iter().sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn derivative_sums_to_zero((p, state, q) in with_state()) {
        let dy = rhs(&p, &state, &q).unwrap();
        prop_assert!(sum_sorted(&dy).abs() <= 1e-15, "sum = {:e}", sum_sorted(&dy));
    }

    #[test]
    fn susceptibles_never_grow((p, state, q) in with_state()) {
        prop_assert!(rhs(&p, &state, &q).unwrap()[0] <= 0.0);
    }

    #[test]
    fn lambda1_sign_tracks_s_bar((p, q) in positive_control(), frac in 0.0f64..1.0) {
        let sb = s_bar(&p, &q).unwrap();
        if sb <= 1.0 {
            prop_assert!(spectral(&p, sb, &q).unwrap().lambda1.abs() <= 1e-12);
        }
        let s0 = frac;
        let l1 = spectral(&p, s0, &q).unwrap().lambda1;
        if s0 < sb {
            prop_assert!(l1 < 0.0);
        } else if s0 > sb {
            prop_assert!(l1 > 0.0);
        }
    }

    #[test]
    fn s_bar_below_s_star((p, q) in positive_control()) {
        let (sb, ss) = (s_bar(&p, &q).unwrap(), s_star(&p, &q).unwrap());
        prop_assert!(sb <= ss * (1.0 + 1e-12));
        if !p.has_equal_gamma() {
            prop_assert!(sb < ss);
        }
    }

    #[test]
    fn thresholds_coincide_for_equal_gamma(p in equal_gamma_params()) {
        let q = p.identity_control();
        if let (Ok(sb), Ok(ss)) = (s_bar(&p, &q), s_star(&p, &q)) {
            prop_assert!((sb - ss).abs() <= 1e-12 * ss.max(1.0));
        }
    }

    #[test]
    fn eigenvectors_diagonalize_l0((p, q) in positive_control(), s0 in 0.0f64..=1.0) {
        let l0 = l0_matrix(&p, s0, &q).unwrap();
        if let Some((t, d)) = eigen_decomposition(&p, s0, &q).unwrap() {
            let residual = &l0 * &t - &t * DMatrix::from_diagonal(&d);
            prop_assert!(residual.amax() <= 1e-10, "residual {:e}", residual.amax());
        }
    }

    #[test]
    fn reduced_s_rate_matches((r0, chi, xi) in (0.5f64..5.0, 0.0f64..1.0, 0.0f64..1.0),
                              w in prop::collection::vec(0.0f64..1.0, 5)) {
        let p = outbreak_core::make_seiar(r0, 0.2, 0.6, chi, xi).unwrap();
        let total: f64 = w.iter().sum::<f64>().max(1e-300);
        let y: Vec<f64> = w.iter().map(|v| v / total).collect();
        let state = State::new(y[0], y[1], vec![y[2], y[3]], (1.0 - y[..4].iter().sum::<f64>()).max(0.0)).unwrap();
        let red = ReducedSystem::new(&p, r0).unwrap();
        let full = rhs(&p, &state, &p.identity_control()).unwrap()[0];
        let reduced = red.rhs(&red.project(&state), 1.0)[0];
        prop_assert!((full - reduced).abs() <= 1e-14);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn control_is_identity_before_start(st in any_strategy(), frac in 0.0f64..=1.0) {
        let p = table2_params();
        let ctrl = ControllerState::new(&st, &p).unwrap();
        let t = st.start_time().unwrap_or(1e3) * frac;
        let (q, _) = q_at(&st, &ctrl, t, Some(0.9)).unwrap();
        prop_assert_eq!(q, vec![1.0; 2]);
    }
}

fn assert_trajectory_sane(traj: &outbreak_core::Trajectory) -> Result<(), TestCaseError> {
    for w in traj.samples.windows(2) {
        prop_assert!(w[1].t > w[0].t);
        prop_assert!(w[1].state.s <= w[0].state.s + 1e-12);
    }
    for s in &traj.samples {
        prop_assert!((s.state.total() - 1.0).abs() <= 1e-9);
        let v = (s.state.e.powi(2) + s.state.i.iter().map(|x| x * x).sum::<f64>()).sqrt();
        prop_assert!((s.v_norm - v).abs() <= 1e-12);
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn trajectories_conserve_and_deplete(st in any_strategy()) {
        let p = table2_params();
        let init = default_init(&p, 3e6).unwrap();
        let cfg = IntegrationConfig { t_max: 3000.0, ..Default::default() };
        match integrate(&p, &st, &init, &cfg) {
            Ok(traj) => assert_trajectory_sane(&traj)?,
            Err(e) => prop_assert!(false, "integration failed: {e}"),
        }
    }

    #[test]
    fn integration_is_deterministic(st in any_strategy()) {
        let p = table2_params();
        let init = default_init(&p, 3e6).unwrap();
        let cfg = IntegrationConfig { t_max: 1000.0, ..Default::default() };
        let a = integrate(&p, &st, &init, &cfg).unwrap();
        let b = integrate(&p, &st, &init, &cfg).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn regulated_level_covers_susceptibles(t_start in 60.0f64..125.0, period in 0.5f64..20.0) {
        let p = table2_params();
        let s0 = s_star(&p, &p.identity_control()).unwrap();
        let st = outbreak_core::Strategy::RegulatedSStar { t_start, period };
        let init = default_init(&p, 3e6).unwrap();
        let traj = integrate(&p, &st, &init, &IntegrationConfig::default()).unwrap();
        prop_assert!(traj.controller.finished);
        for s in traj.samples.iter().filter(|s| s.t > t_start && s.q[0] < 1.0) {
            prop_assert!(s0 / s.q[0] >= s.state.s - 1e-12, "t = {}", s.t);
        }
        let class = classify(&st, &p, &traj).unwrap();
        prop_assert!(class.is_finite && class.is_wos);
    }

    #[test]
    fn classification_ignores_output_density(st in finite_strategy()) {
        let p = table2_params();
        let init = default_init(&p, 3e6).unwrap();
        let coarse = integrate(&p, &st, &init, &IntegrationConfig::default()).unwrap();
        let fine_cfg = IntegrationConfig { output_stride: 0.25, ..Default::default() };
        let fine = integrate(&p, &st, &init, &fine_cfg).unwrap();
        prop_assert_eq!(classify(&st, &p, &coarse).unwrap(), classify(&st, &p, &fine).unwrap());
    }

    #[test]
    fn random_model_suites_hold(seed in any::<u64>()) {
        let family = ParamFamily::default();
        for outcome in [
            envelope_trials(&family, seed, 4),
            asymptotic_trials(&family, seed, 4),
            wos_trials(&family, seed, 4),
        ] {
            prop_assert!(outcome.passed(), "{}: {:?}", outcome.name, outcome.failures);
        }
    }
}

#[test]
fn seiaqr_branching_sums_to_one() {
    let grid: Vec<f64> = (0..=20).map(|k| k as f64 / 20.0).collect();
    for &chi in &grid {
        for &zi in &grid {
            for &za in &grid {
                let p = make_seiaqr(3.0, 0.2, 0.6, chi, 0.55, zi, za).unwrap();
                let sum: f64 = p.stages.iter().map(|s| s.x).sum();
                assert_eq!(sum, 1.0, "chi {chi} zi {zi} za {za}");
            }
        }
    }
}

#[test]
fn asymptotic_value_converges_with_tolerance() {
    let p = table2_params();
    let init = default_init(&p, 3e6).unwrap();
    let s_inf = |rel: f64| {
        let cfg = IntegrationConfig {
            rel_tol: rel,
            ..Default::default()
        };
        integrate(&p, &outbreak_core::Strategy::Natural {}, &init, &cfg)
            .unwrap()
            .last()
            .state
            .s
    };
    let (a, b, c) = (s_inf(1e-9), s_inf(5e-10), s_inf(2.5e-10));
    assert!((a - b).abs() <= 1e-8, "{a} vs {b}");
    assert!((b - c).abs() <= 1e-8, "{b} vs {c}");
}

#[test]
fn suppressed_transmission_has_no_threshold() {
    let p = table2_params();
    assert_eq!(s_bar(&p, &[0.0, 0.0]), Err(Error::NoThreshold));
    assert_eq!(s_star(&p, &[0.0, 0.0]), Err(Error::NoThreshold));
}
