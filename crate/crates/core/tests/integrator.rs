mod common;

use borok::integrator::{
    borok_step, borok_step_extended, full_space_row_step, full_space_stages, rok_step, stage_residual_direct,
    stage_residual_first, stage_residual_full, MethodTableau,
};
use borok::krylov::{arnoldi, lanczos_biorth, ReducedBasis};
use borok::problem::{linearize, DenseOperator, LinearOperator, LinearProblem, OdeProblem, ProblemError};
use borok::stepcontrol::{integrate_fixed, BasisStrategy, Integrator};
use common::{random_matrix, random_vector, rel_err, rng};
use nalgebra::{DMatrix, DVector};

/// `y' = M y + c sin(y)`.
struct SineCoupled {
    m: DMatrix<f64>,
    c: f64,
    y0: DVector<f64>,
}

impl SineCoupled {
    fn random(n: usize, shift: f64, seed: u64) -> Self {
        let mut r = rng(seed);
        let m = random_matrix(n, shift, &mut r);
        let y0 = random_vector(n, &mut r);
        Self { m, c: 0.5, y0 }
    }
}

impl OdeProblem for SineCoupled {
    fn dim(&self) -> usize {
        self.y0.len()
    }

    fn t_span(&self) -> (f64, f64) {
        (0.0, 1.0)
    }

    fn initial_state(&self) -> DVector<f64> {
        self.y0.clone()
    }

    fn rhs(&self, _t: f64, y: &DVector<f64>) -> Result<DVector<f64>, ProblemError> {
        Ok(&self.m * y + y.map(f64::sin) * self.c)
    }

    fn jacobian(&self, _t: f64, y: &DVector<f64>) -> Result<Box<dyn LinearOperator>, ProblemError> {
        let mut j = self.m.clone();
        for i in 0..y.len() {
            j[(i, i)] += self.c * y[i].cos();
        }
        Ok(Box::new(DenseOperator(j)))
    }
}

#[test]
fn reduced_step_equals_full_space_step_with_approximate_jacobian() {
    let tab = MethodTableau::rok4a();
    let mut worst: f64 = 0.0;
    for seed in 0..6 {
        let p = SineCoupled::random(40, -1.0, seed);
        let y = p.initial_state();
        let jac = linearize(&p, 0.0, &y).unwrap();
        let f1 = p.rhs(0.0, &y).unwrap();
        for m in [2, 4, 6] {
            let b = lanczos_biorth(&jac, &f1, m).unwrap();
            let a = b.approx_jacobian_dense();
            for h in [1e-3, 1e-2, 1e-1] {
                let reduced = borok_step(&p, &tab, &b, &y, h).unwrap().y_next;
                let full = full_space_row_step(&p, &tab, &a, &y, h).unwrap();
                worst = worst.max(rel_err(&reduced, &full));
            }
        }
    }
    assert!(worst <= 1e-9, "worst relative difference {worst:e}");
}

#[test]
fn full_basis_step_equals_exact_jacobian_step() {
    let tab = MethodTableau::rok4a();
    let mut r = rng(20);
    let p = LinearProblem::new(random_matrix(20, -1.0, &mut r), random_vector(20, &mut r), (0.0, 1.0)).unwrap();
    let y = p.initial_state();
    let jac = linearize(&p, 0.0, &y).unwrap();
    let f1 = p.rhs(0.0, &y).unwrap();
    let full = full_space_row_step(&p, &tab, p.matrix(), &y, 0.05).unwrap();
    let a = arnoldi(&jac, &f1, 20).unwrap();
    let rok = rok_step(&p, &tab, &a, &y, 0.05).unwrap();
    assert!(rel_err(&rok.y_next, &full) < 1e-10);

    let p = LinearProblem::new(random_matrix(6, -1.0, &mut r), random_vector(6, &mut r), (0.0, 1.0)).unwrap();
    let y = p.initial_state();
    let jac = linearize(&p, 0.0, &y).unwrap();
    let b = lanczos_biorth(&jac, &p.rhs(0.0, &y).unwrap(), 6).unwrap();
    let full = full_space_row_step(&p, &tab, p.matrix(), &y, 0.05).unwrap();
    let borok = borok_step(&p, &tab, &b, &y, 0.05).unwrap();
    assert!(rel_err(&borok.y_next, &full) < 1e-10);
}

#[test]
fn linearly_implicit_euler_on_scalar_problem() {
    let tab = borok::integrator::load_tableau("s 1\norder 1\ngamma_diag 1.0\nb 1.0\n").unwrap();
    let mu = -3.0;
    let p = LinearProblem::new(DMatrix::from_element(1, 1, mu), DVector::from_element(1, 2.0), (0.0, 1.0)).unwrap();
    let y = p.initial_state();
    let jac = linearize(&p, 0.0, &y).unwrap();
    let b = lanczos_biorth(&jac, &p.rhs(0.0, &y).unwrap(), 1).unwrap();
    let h = 0.1;
    let out = borok_step(&p, &tab, &b, &y, h).unwrap();
    assert!((out.y_next[0] - 2.0 / (1.0 - h * mu)).abs() < 1e-14);
}

#[test]
fn symmetric_jacobian_gives_same_rok_and_borok_steps() {
    let tab = MethodTableau::rok4a();
    let mut r = rng(21);
    let a = random_matrix(30, 0.0, &mut r);
    let mut m = (&a + a.transpose()) * 0.5;
    for i in 0..30 {
        m[(i, i)] -= 2.0;
    }
    let p = SineCoupled { m, c: 0.0, y0: random_vector(30, &mut r) };
    let y = p.initial_state();
    let jac = linearize(&p, 0.0, &y).unwrap();
    let f1 = p.rhs(0.0, &y).unwrap();
    let bb = lanczos_biorth(&jac, &f1, 8).unwrap();
    let ab = arnoldi(&jac, &f1, 8).unwrap();
    let x = borok_step(&p, &tab, &bb, &y, 0.1).unwrap().y_next;
    let z = rok_step(&p, &tab, &ab, &y, 0.1).unwrap().y_next;
    assert!(rel_err(&x, &z) < 1e-8);
}

#[test]
fn rok_step_consumes_no_transpose_products() {
    let p = SineCoupled::random(20, -1.0, 22);
    let y = p.initial_state();
    let jac = linearize(&p, 0.0, &y).unwrap();
    let b = arnoldi(&jac, &p.rhs(0.0, &y).unwrap(), 5).unwrap();
    let rec = rok_step(&p, &MethodTableau::rok4a(), &b, &y, 0.1).unwrap();
    assert_eq!(jac.tmatvecs(), 0);
    assert_eq!(jac.matvecs(), 5);
    assert_eq!(rec.rhs_evals, 4);
}

#[test]
fn closed_form_stage_residuals_match_direct_evaluation() {
    let tab = MethodTableau::rok4a();
    for seed in 0..10 {
        let p = SineCoupled::random(40, -1.0, 100 + seed);
        let y = p.initial_state();
        let jac = linearize(&p, 0.0, &y).unwrap();
        let f1 = p.rhs(0.0, &y).unwrap();
        let b = lanczos_biorth(&jac, &f1, 4).unwrap();
        // Large enough that the residuals sit far above the rounding level of
        // the direct evaluation.
        let h = 0.5;
        let rec = borok_step(&p, &tab, &b, &y, h).unwrap();
        for i in 0..tab.s {
            let closed = stage_residual_full(&jac, &b, &rec.workspace, &tab, h, i);
            let direct = stage_residual_direct(&jac, &rec.workspace, &tab, h, i);
            assert!(rel_err(&closed, &direct) <= 1e-8, "stage {i}: {:e}", rel_err(&closed, &direct));
        }
        let first = stage_residual_first(&b, &rec.workspace.lambda[0], h, tab.gamma_diag);
        let direct = stage_residual_direct(&jac, &rec.workspace, &tab, h, 0).norm();
        assert!((first - direct).abs() <= 1e-9 * direct);
        let closed = stage_residual_full(&jac, &b, &rec.workspace, &tab, h, 0);
        let expect = b.v_next() * (-h * tab.gamma_diag * b.theta_next() * rec.workspace.lambda[0][3]);
        assert!(rel_err(&closed, &expect) < 1e-10);
    }
}

#[test]
fn residuals_vanish_in_trivial_cases() {
    let tab = MethodTableau::rok4a();
    let p = SineCoupled::random(8, -1.0, 23);
    let y = p.initial_state();
    let jac = linearize(&p, 0.0, &y).unwrap();
    let b = lanczos_biorth(&jac, &p.rhs(0.0, &y).unwrap(), 3).unwrap();
    let lambda = DVector::from_element(3, 1.0);
    assert_eq!(stage_residual_first(&b, &lambda, 0.0, tab.gamma_diag), 0.0);

    let p =
        LinearProblem::new(random_matrix(8, -1.0, &mut rng(24)), random_vector(8, &mut rng(25)), (0.0, 1.0)).unwrap();
    let y = p.initial_state();
    let jac = linearize(&p, 0.0, &y).unwrap();
    let b = arnoldi(&jac, &p.rhs(0.0, &y).unwrap(), 8).unwrap();
    let rec = rok_step(&p, &tab, &b, &y, 0.1).unwrap();
    for i in 0..tab.s {
        let r = stage_residual_full(&jac, &b, &rec.workspace, &tab, 0.1, i);
        assert!(r.norm() < 1e-10 * y.norm(), "stage {i}: {:e}", r.norm());
    }
    let lucky = lanczos_biorth(
        &borok::problem::JacobianHandle::from_dense(DMatrix::identity(4, 4)),
        &y.rows(0, 4).into_owned(),
        3,
    )
    .unwrap();
    assert_eq!(stage_residual_first(&lucky, &DVector::from_element(1, 3.0), 0.1, 0.5), 0.0);
}

#[test]
fn extension_is_a_no_op_when_stage_values_stay_in_the_span() {
    // Diagonal operator and a seed touching two modes: the Krylov space is
    // invariant and every stage right-hand side lies in it.
    let mut m = DMatrix::zeros(10, 10);
    for i in 0..10 {
        m[(i, i)] = -(i as f64 + 1.0);
    }
    let mut y0 = DVector::zeros(10);
    y0[2] = 1.0;
    y0[7] = -0.5;
    let p = LinearProblem::new(m, y0, (0.0, 1.0)).unwrap();
    let tab = MethodTableau::rok4a();
    let y = p.initial_state();
    let jac = linearize(&p, 0.0, &y).unwrap();
    let f1 = p.rhs(0.0, &y).unwrap();
    let b = lanczos_biorth(&jac, &f1, 5).unwrap();
    assert_eq!(b.dim(), 2);
    let plain = borok_step(&p, &tab, &b, &y, 0.1).unwrap();
    let mut grown = b.clone();
    let ext = borok_step_extended(&p, &tab, &mut grown, &jac, &y, 0.1, None, 1.0).unwrap();
    assert!(rel_err(&ext.y_next, &plain.y_next) < 1e-10);
    assert_eq!(ext.extension_skips, tab.s - 1);
    assert_eq!(grown.dim(), 2);
}

#[test]
fn extended_step_residuals_match_closed_form() {
    let tab = MethodTableau::rok4a();
    for seed in 0..10 {
        let p = SineCoupled::random(40, -1.0, 200 + seed);
        let y = p.initial_state();
        let jac = linearize(&p, 0.0, &y).unwrap();
        let f1 = p.rhs(0.0, &y).unwrap();
        let mut b = lanczos_biorth(&jac, &f1, 4).unwrap();
        let (mv, tmv) = (jac.matvecs(), jac.tmatvecs());
        let h = 0.5;
        let rec = borok_step_extended(&p, &tab, &mut b, &jac, &y, h, Some(f1), 1.0).unwrap();
        assert_eq!(rec.rhs_evals, tab.s - 1);
        assert_eq!((jac.matvecs() - mv, jac.tmatvecs() - tmv), (tab.s - 1, tab.s - 1));
        assert_eq!(b.dim(), 4 + tab.s - 1);
        assert!(b.biorthogonality_defect() < 1e-8);
        for i in 0..tab.s {
            assert_eq!(rec.workspace.dims[i], 4 + i);
            let closed = stage_residual_full(&jac, &b, &rec.workspace, &tab, h, i);
            let direct = stage_residual_direct(&jac, &rec.workspace, &tab, h, i);
            assert!(rel_err(&closed, &direct) <= 1e-8, "seed {seed} stage {i}");
        }
    }
}

#[test]
fn extension_usually_shrinks_the_second_stage_residual() {
    let tab = MethodTableau::rok4a();
    let trials = 50;
    let mut smaller = 0;
    for seed in 0..trials {
        let p = SineCoupled::random(40, -1.0, 300 + seed);
        let y = p.initial_state();
        let jac = linearize(&p, 0.0, &y).unwrap();
        let f1 = p.rhs(0.0, &y).unwrap();
        let b = lanczos_biorth(&jac, &f1, 6).unwrap();
        let h = 0.1;
        let plain = borok_step(&p, &tab, &b, &y, h).unwrap();
        let mut grown = b.clone();
        let ext = borok_step_extended(&p, &tab, &mut grown, &jac, &y, h, None, 1.0).unwrap();
        let r0 = stage_residual_direct(&jac, &plain.workspace, &tab, h, 1).norm();
        let r1 = stage_residual_direct(&jac, &ext.workspace, &tab, h, 1).norm();
        if r1 <= r0 {
            smaller += 1;
        }
    }
    assert!(smaller * 10 >= trials * 9, "{smaller} of {trials}");
}

#[test]
fn full_space_oracle_matches_closed_forms() {
    let tab = borok::integrator::load_tableau("s 1\norder 1\ngamma_diag 0.5\nb 1.0\n").unwrap();
    let mut r = rng(26);
    let m = random_matrix(5, -1.0, &mut r);
    let p = LinearProblem::new(m.clone(), random_vector(5, &mut r), (0.0, 1.0)).unwrap();
    let y = p.initial_state();
    let h = 0.2;
    let got = full_space_row_step(&p, &tab, &m, &y, h).unwrap();
    let lhs = DMatrix::identity(5, 5) - &m * (h * 0.5);
    let rhs = (DMatrix::identity(5, 5) + &m * (h * 0.5)) * &y;
    let expect = lhs.lu().solve(&rhs).unwrap();
    assert!(rel_err(&got, &expect) < 1e-13);

    let zero = LinearProblem::new(DMatrix::zeros(5, 5), y.clone(), (0.0, 1.0)).unwrap();
    let (y1, ks) = full_space_stages(&zero, &MethodTableau::rok4a(), &DMatrix::zeros(5, 5), &y, h).unwrap();
    assert_eq!(y1, y);
    assert!(ks.iter().all(|k| k.amax() == 0.0));
}

fn observed_orders(tab: &MethodTableau, integrator: Integrator) -> Vec<f64> {
    let p = SineCoupled::random(10, -1.0, 27);
    let strategy = BasisStrategy::fixed(10).with_m_max(10);
    let (reference, _) = integrate_fixed(&p, tab, integrator, &strategy, 1.0 / 1024.0).unwrap();
    let errs: Vec<f64> = [0.1, 0.05, 0.025, 0.0125]
        .iter()
        .map(|&h| {
            let (y, _) = integrate_fixed(&p, tab, integrator, &strategy, h).unwrap();
            (y - &reference).norm()
        })
        .collect();
    errs.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
}

#[test]
fn empirical_orders_of_bundled_tableaus() {
    for (tab, p) in [(MethodTableau::rok2(), 2.0), (MethodTableau::rok4a(), 4.0)] {
        for integrator in [Integrator::Rok, Integrator::Borok] {
            let orders = observed_orders(&tab, integrator);
            let last = *orders.last().unwrap();
            assert!((last - p).abs() <= 0.3, "{} {integrator}: {orders:?}", tab.name);
        }
    }
}
