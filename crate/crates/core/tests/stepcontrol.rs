mod common;

use borok::integrator::{load_tableau, MethodTableau};
use borok::problem::LinearProblem;
use borok::stepcontrol::{
    error_norm, integrate_adaptive, integrate_fixed, next_stepsize, BasisStrategy, ControllerConfig, Integrator,
    RunError,
};
use common::{random_matrix, random_vector, rel_err, rng};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

const BOTH: [Integrator; 2] = [Integrator::Rok, Integrator::Borok];

fn mildly_stiff(n: usize, seed: u64) -> LinearProblem {
    let mut r = rng(seed);
    let mut m = random_matrix(n, 0.0, &mut r);
    for i in 0..n {
        m[(i, i)] -= 1.0 + 9.0 * i as f64 / n as f64;
    }
    LinearProblem::new(m, random_vector(n, &mut r), (0.0, 1.0)).unwrap()
}

/// `y_{n+1} = R(hM) y_n` written out stage by stage with dense solves.
fn stability_matrix_power(
    tab: &MethodTableau,
    m: &DMatrix<f64>,
    h: f64,
    steps: usize,
    y0: &DVector<f64>,
) -> DVector<f64> {
    let n = m.nrows();
    let z = m * h;
    let lu = (DMatrix::identity(n, n) - &z * tab.gamma_diag).lu();
    let mut y = y0.clone();
    for _ in 0..steps {
        let mut k: Vec<DVector<f64>> = Vec::new();
        for i in 0..tab.s {
            let mut arg = y.clone();
            let mut acc = DVector::zeros(n);
            for (j, kj) in k.iter().enumerate() {
                arg += kj * tab.alpha[(i, j)];
                acc += kj * tab.gamma_lower[(i, j)];
            }
            k.push(lu.solve(&(&z * (arg + acc))).unwrap());
        }
        for (ki, bi) in k.iter().zip(tab.b.iter()) {
            y += ki * *bi;
        }
    }
    y
}

#[test]
fn zero_dynamics_return_the_initial_state() {
    let y0 = DVector::from_vec(vec![1.0, -2.0, 3.0, 0.5, 7.0]);
    let p = LinearProblem::new(DMatrix::zeros(5, 5), y0.clone(), (0.0, 1.0)).unwrap();
    for integrator in BOTH {
        let (y, stats) =
            integrate_fixed(&p, &MethodTableau::rok4a(), integrator, &BasisStrategy::fixed(4), 0.1).unwrap();
        assert_eq!(y, y0);
        assert_eq!(stats.steps_accepted, 10);
        assert_eq!(stats.matvecs, 0);
        let cfg = ControllerConfig::with_tol(1e-6);
        let (y, _) =
            integrate_adaptive(&p, &MethodTableau::rok4a(), integrator, &BasisStrategy::fixed(4), &cfg).unwrap();
        assert_eq!(y, y0);
    }
}

#[test]
fn fixed_run_with_full_basis_matches_stability_matrix() {
    let tab = MethodTableau::rok4a();
    let mut r = rng(31);
    let m = random_matrix(20, -1.0, &mut r);
    let y0 = random_vector(20, &mut r);
    let p = LinearProblem::new(m.clone(), y0.clone(), (0.0, 1.0)).unwrap();
    let expect = stability_matrix_power(&tab, &m, 0.01, 100, &y0);
    let (y, stats) = integrate_fixed(&p, &tab, Integrator::Rok, &BasisStrategy::fixed(20), 0.01).unwrap();
    assert_eq!(stats.steps_accepted, 100);
    assert!(rel_err(&y, &expect) < 1e-9, "{:e}", rel_err(&y, &expect));
}

#[test]
fn last_fixed_step_lands_on_the_final_time() {
    // y' = 1 in time: any consistent method integrates it exactly.
    let p = LinearProblem::new(DMatrix::zeros(4, 4), DVector::zeros(4), (0.0, 1.0))
        .unwrap()
        .with_forcing(|_t| (DVector::from_element(4, 1.0), DVector::zeros(4)));
    for integrator in BOTH {
        let (y, stats) =
            integrate_fixed(&p, &MethodTableau::rok4a(), integrator, &BasisStrategy::fixed(4), 0.3).unwrap();
        assert_eq!(stats.steps_accepted, 4);
        assert!((y - DVector::from_element(4, 1.0)).amax() < 1e-14);
    }
    let (_, stats) =
        integrate_fixed(&p, &MethodTableau::rok4a(), Integrator::Rok, &BasisStrategy::fixed(4), 0.25).unwrap();
    assert_eq!(stats.steps_accepted, 4);
}

#[test]
fn non_autonomous_problem_follows_exact_solution() {
    // y_i' = l_i y_i + sin t.
    let lambdas = [-1.0, -2.0, -5.0, -0.5];
    let m = DMatrix::from_diagonal(&DVector::from_row_slice(&lambdas));
    let y0 = DVector::from_element(4, 1.0);
    let p = LinearProblem::new(m, y0, (0.0, 2.0))
        .unwrap()
        .with_forcing(|t| (DVector::from_element(4, t.sin()), DVector::from_element(4, t.cos())));
    let exact = DVector::from_iterator(
        4,
        lambdas.iter().map(|&l| {
            let particular = |t: f64| (-l * t.sin() - t.cos()) / (l * l + 1.0);
            (1.0 - particular(0.0)) * (l * 2.0f64).exp() + particular(2.0)
        }),
    );
    for integrator in BOTH {
        let (y, _) = integrate_fixed(&p, &MethodTableau::rok4a(), integrator, &BasisStrategy::fixed(5), 0.01).unwrap();
        assert!(rel_err(&y, &exact) < 1e-7, "{integrator}: {:e}", rel_err(&y, &exact));
        let cfg = ControllerConfig::with_tol(1e-8);
        let (y, _) =
            integrate_adaptive(&p, &MethodTableau::rok4a(), integrator, &BasisStrategy::fixed(5), &cfg).unwrap();
        assert!(rel_err(&y, &exact) < 1e-6, "{integrator} adaptive: {:e}", rel_err(&y, &exact));
    }
}

#[test]
fn tighter_tolerance_takes_more_steps() {
    let p = mildly_stiff(30, 32);
    for integrator in BOTH {
        let counts: Vec<usize> = [1e-3, 1e-5, 1e-7, 1e-9]
            .iter()
            .map(|&tol| {
                let cfg = ControllerConfig::with_tol(tol);
                integrate_adaptive(&p, &MethodTableau::rok4a(), integrator, &BasisStrategy::fixed(8), &cfg)
                    .unwrap()
                    .1
                    .steps_accepted
            })
            .collect();
        assert!(counts.windows(2).all(|w| w[0] < w[1]), "{integrator}: {counts:?}");
    }
}

#[test]
fn adaptive_error_tracks_tolerance() {
    let p = mildly_stiff(30, 33);
    let strategy = BasisStrategy::fixed(30).with_m_max(30);
    let (reference, _) = integrate_fixed(&p, &MethodTableau::rok4a(), Integrator::Rok, &strategy, 1e-4).unwrap();
    for tol in [1e-4, 1e-6, 1e-8] {
        let cfg = ControllerConfig::with_tol(tol);
        let (y, _) = integrate_adaptive(&p, &MethodTableau::rok4a(), Integrator::Rok, &strategy, &cfg).unwrap();
        let e = rel_err(&y, &reference);
        assert!(e < 50.0 * tol, "tol {tol:e}: {e:e}");
    }
}

#[test]
fn tolerance_matched_basis_meets_its_residual_bound() {
    let p = mildly_stiff(40, 34);
    for integrator in BOTH {
        let cfg = ControllerConfig::with_tol(1e-6);
        let (_, stats) =
            integrate_adaptive(&p, &MethodTableau::rok4a(), integrator, &BasisStrategy::tol_matched(), &cfg).unwrap();
        assert!(stats.max_residual_ratio <= 1.0);
        assert!(stats.min_basis_size().unwrap() >= 4);
    }
}

#[test]
fn basis_counters_follow_construction_costs() {
    let p = mildly_stiff(30, 35);
    let cfg = ControllerConfig::with_tol(1e-6);
    let m = 6;
    let (_, rok) =
        integrate_adaptive(&p, &MethodTableau::rok4a(), Integrator::Rok, &BasisStrategy::fixed(m), &cfg).unwrap();
    assert_eq!(rok.tmatvecs, 0);
    assert_eq!(rok.matvecs, m * rok.steps());
    assert_eq!(rok.rhs_evals, 4 * rok.steps());
    let (_, bo) =
        integrate_adaptive(&p, &MethodTableau::rok4a(), Integrator::Borok, &BasisStrategy::fixed(m), &cfg).unwrap();
    assert_eq!(bo.matvecs, m * bo.steps());
    assert_eq!(bo.tmatvecs, bo.matvecs);
}

#[test]
fn residual_strategy_hitting_m_max_in_a_fixed_run_aborts() {
    let p = mildly_stiff(30, 36);
    let strategy = BasisStrategy::residual(1e-14).with_m_max(5);
    for integrator in BOTH {
        match integrate_fixed(&p, &MethodTableau::rok4a(), integrator, &strategy, 0.5) {
            Err(RunError::BasisLimit { m_max, stats, .. }) => {
                assert_eq!(m_max, 5);
                assert_eq!(stats.max_size_hits, 1);
            }
            other => panic!("expected a basis limit, got {other:?}"),
        }
    }
}

#[test]
fn adaptive_run_rejects_steps_that_need_too_large_a_basis() {
    let p = mildly_stiff(30, 37);
    let cfg = ControllerConfig { h_init: Some(0.5), ..ControllerConfig::with_tol(1e-4) };
    let strategy = BasisStrategy::residual(1e-8).with_m_max(6);
    let (_, stats) = integrate_adaptive(&p, &MethodTableau::rok4a(), Integrator::Rok, &strategy, &cfg).unwrap();
    assert!(stats.max_size_hits >= 1);
    assert!(stats.steps_rejected >= stats.max_size_hits);
    assert!(stats.basis_size_histogram.keys().all(|&m| m <= 6));
}

#[test]
fn runs_are_deterministic() {
    let p = mildly_stiff(30, 38);
    let cfg = ControllerConfig::with_tol(1e-6);
    for integrator in BOTH {
        let strategy = BasisStrategy::residual(1e-8);
        let (y1, mut s1) = integrate_adaptive(&p, &MethodTableau::rok4a(), integrator, &strategy, &cfg).unwrap();
        let (y2, mut s2) = integrate_adaptive(&p, &MethodTableau::rok4a(), integrator, &strategy, &cfg).unwrap();
        s1.wall_time = 0.0;
        s2.wall_time = 0.0;
        assert_eq!(y1, y2);
        assert_eq!(s1, s2);
    }
}

#[test]
fn configuration_errors_are_reported() {
    let p = mildly_stiff(10, 39);
    let euler = load_tableau("s 1\norder 1\ngamma_diag 1.0\nb 1.0\n").unwrap();
    let cfg = ControllerConfig::with_tol(1e-6);
    assert!(matches!(
        integrate_adaptive(&p, &euler, Integrator::Rok, &BasisStrategy::fixed(2), &cfg),
        Err(RunError::NoEmbeddedMethod(_))
    ));
    let tab = MethodTableau::rok4a();
    assert!(matches!(
        integrate_fixed(&p, &tab, Integrator::Rok, &BasisStrategy::fixed(2), 0.1),
        Err(RunError::Config(_))
    ));
    assert!(matches!(
        integrate_fixed(&p, &tab, Integrator::Rok, &BasisStrategy::tol_matched(), 0.1),
        Err(RunError::Config(_))
    ));
    assert!(matches!(
        integrate_fixed(&p, &tab, Integrator::Rok, &BasisStrategy::fixed(4).with_extension(true), 0.1),
        Err(RunError::Config(_))
    ));
    let bad = ControllerConfig { safety: 1.5, ..cfg };
    assert!(matches!(
        integrate_adaptive(&p, &tab, Integrator::Rok, &BasisStrategy::fixed(4), &bad),
        Err(RunError::Config(_))
    ));
    let few = ControllerConfig { max_steps: 3, ..cfg };
    assert!(matches!(
        integrate_adaptive(&p, &tab, Integrator::Rok, &BasisStrategy::fixed(4), &few),
        Err(RunError::MaxStepsExceeded { max_steps: 3, .. })
    ));
    assert!(matches!(
        integrate_fixed(&p, &tab, Integrator::Rok, &BasisStrategy::fixed(4), -0.1),
        Err(RunError::StepFailed { .. })
    ));
}

#[test]
fn extension_runs_only_add_extension_products() {
    let p = mildly_stiff(40, 40);
    let cfg = ControllerConfig::with_tol(1e-6);
    let strategy = BasisStrategy::fixed(6).with_extension(true);
    let (y, stats) = integrate_adaptive(&p, &MethodTableau::rok4a(), Integrator::Borok, &strategy, &cfg).unwrap();
    assert!(y.iter().all(|x| x.is_finite()));
    let per_build = 6 + 3;
    assert_eq!(stats.matvecs, stats.tmatvecs);
    assert!(stats.matvecs <= per_build * stats.steps());
    assert!(stats.matvecs >= 6 * stats.steps());
    assert!(stats.basis_size_histogram.keys().all(|&m| m == 6));
}

proptest! {
    #[test]
    fn error_norm_scales_inversely_with_abs_tol(seed in 0u64..1000, scale in 0.01f64..100.0) {
        let mut r = rng(seed);
        let y = random_vector(12, &mut r);
        let e = random_vector(12, &mut r);
        let a = error_norm(&y, &e, &ControllerConfig::new(1e-3, 0.0));
        let b = error_norm(&y, &e, &ControllerConfig::new(1e-3 * scale, 0.0));
        prop_assert!((a / b - scale).abs() <= 1e-12 * scale);
    }

    #[test]
    fn error_norm_is_nonnegative_and_zero_only_for_zero(seed in 0u64..1000) {
        let mut r = rng(seed);
        let y = random_vector(8, &mut r);
        let e = random_vector(8, &mut r);
        let cfg = ControllerConfig::with_tol(1e-6);
        prop_assert!(error_norm(&y, &e, &cfg) > 0.0);
        prop_assert_eq!(error_norm(&y, &DVector::zeros(8), &cfg), 0.0);
    }

    #[test]
    fn controller_factor_stays_clamped(err in 0.0f64..1e6, p_hat in 1usize..6, h in 1e-6f64..1.0) {
        let cfg = ControllerConfig::with_tol(1e-6);
        let (accept, h_new) = next_stepsize(h, err, p_hat, &cfg).unwrap();
        prop_assert_eq!(accept, err <= 1.0);
        let f = h_new / h;
        prop_assert!(f >= cfg.fac_min * (1.0 - 1e-12) && f <= cfg.fac_max * (1.0 + 1e-12));
    }

    #[test]
    fn controller_is_monotone_in_the_error(a in 1e-6f64..1e4, b in 1e-6f64..1e4) {
        let cfg = ControllerConfig::with_tol(1e-6);
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let h_lo = next_stepsize(0.1, lo, 3, &cfg).unwrap().1;
        let h_hi = next_stepsize(0.1, hi, 3, &cfg).unwrap().1;
        prop_assert!(h_lo >= h_hi);
    }
}

#[test]
fn controller_examples() {
    let cfg = ControllerConfig::with_tol(1e-6);
    let (accept, h) = next_stepsize(1.0, 1.0, 3, &cfg).unwrap();
    assert!(accept && (h - 0.9).abs() < 1e-15);
    assert_eq!(next_stepsize(1.0, 0.0, 3, &cfg).unwrap(), (true, 5.0));
    let (accept, h) = next_stepsize(1.0, 16.0, 3, &cfg).unwrap();
    assert!(!accept && (h - 0.45).abs() < 1e-15);
    assert!(next_stepsize(1e-14, 1e6, 3, &cfg).is_err());
}
