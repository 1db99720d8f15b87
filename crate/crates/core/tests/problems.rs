mod common;

use borok::problem::{
    autonomize, linearize, GrayScott, GrayScottParams, LinearProblem, OdeProblem, ShallowWater, ShallowWaterParams,
};
use common::{random_matrix, random_vector, rng};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

fn swe(n: usize) -> ShallowWater {
    ShallowWater::new(ShallowWaterParams { grid_n: n, ..Default::default() }).unwrap()
}

fn gray_scott(n: usize) -> GrayScott {
    GrayScott::new(GrayScottParams { grid_n: n, ..Default::default() }).unwrap()
}

/// A state near `y0` with every component perturbed, so that no Jacobian
/// entry is special.
fn perturbed(p: &dyn OdeProblem, seed: u64, amp: f64) -> DVector<f64> {
    let mut r = rng(seed);
    p.initial_state().map(|x| x + amp * r.gen_range(-1.0..1.0))
}

/// Centered difference `(f(y + eps v) - f(y - eps v)) / (2 eps)`.
fn fd_directional(p: &dyn OdeProblem, t: f64, y: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
    let eps = 1e-6 * (1.0 + y.norm());
    let plus = p.rhs(t, &(y + v * eps)).unwrap();
    let minus = p.rhs(t, &(y - v * eps)).unwrap();
    (plus - minus) / (2.0 * eps)
}

fn check_jacobian_against_fd(p: &dyn OdeProblem, y: &DVector<f64>, seed: u64) {
    let jac = linearize(p, 0.0, y).unwrap();
    let mut r = rng(seed);
    for _ in 0..5 {
        let v = random_vector(p.dim(), &mut r);
        let exact = jac.apply(&v);
        let fd = fd_directional(p, 0.0, y, &v);
        let e = (&exact - &fd).norm() / exact.norm();
        assert!(e < 1e-6, "{}: relative difference {e:e}", p.name());
    }
}

fn check_adjoint(p: &dyn OdeProblem, y: &DVector<f64>, pairs: usize, seed: u64) {
    let jac = linearize(p, 0.0, y).unwrap();
    let mut r = rng(seed);
    for _ in 0..pairs {
        let v = random_vector(p.dim(), &mut r);
        let w = random_vector(p.dim(), &mut r);
        let a = jac.apply(&v).dot(&w);
        let b = v.dot(&jac.apply_transpose(&w));
        let scale = jac.apply(&v).norm() * w.norm();
        assert!((a - b).abs() <= 1e-10 * scale, "{}: {a} vs {b}", p.name());
    }
    assert_eq!((jac.matvecs(), jac.tmatvecs()), (2 * pairs, pairs));
}

#[test]
fn shallow_water_jacobian_matches_finite_differences() {
    let p = swe(16);
    check_jacobian_against_fd(&p, &p.initial_state(), 1);
    check_jacobian_against_fd(&p, &perturbed(&p, 2, 0.05), 3);
}

#[test]
fn gray_scott_jacobian_matches_finite_differences() {
    let p = gray_scott(16);
    check_jacobian_against_fd(&p, &p.initial_state(), 4);
    check_jacobian_against_fd(&p, &perturbed(&p, 5, 0.1), 6);
}

#[test]
fn transpose_products_are_adjoint() {
    let p = swe(16);
    check_adjoint(&p, &perturbed(&p, 7, 0.05), 100, 8);
    let p = gray_scott(16);
    check_adjoint(&p, &perturbed(&p, 9, 0.1), 100, 10);
}

#[test]
fn linear_problem_jacobian_is_the_matrix() {
    let mut r = rng(11);
    let m = random_matrix(12, 0.0, &mut r);
    let p = LinearProblem::new(m.clone(), random_vector(12, &mut r), (0.0, 1.0)).unwrap();
    let jac = linearize(&p, 0.0, &p.initial_state()).unwrap();
    let v = random_vector(12, &mut r);
    assert!((jac.apply(&v) - &m * &v).amax() < 1e-15);
    assert!((jac.apply_transpose(&v) - m.transpose() * &v).amax() < 1e-15);
}

#[test]
fn shallow_water_spectrum_is_mildly_damped() {
    let p = swe(16);
    let j = linearize(&p, 0.0, &p.initial_state()).unwrap().to_dense();
    let schur = nalgebra::Schur::try_new(j, 1e-12, 20_000).expect("QR iteration converges");
    let eig = schur.complex_eigenvalues();
    let lo = eig.iter().map(|z| z.re).fold(f64::INFINITY, f64::min);
    assert!(lo > -12.0, "most negative real part {lo}");
    // Centered differences leave the waves nearly undamped.
    assert!(eig.iter().any(|z| z.im.abs() > 10.0 * lo.abs()));
}

/// Periodic 1D second difference as a dense matrix.
fn second_difference(n: usize, dx: f64) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(n, n);
    for i in 0..n {
        d[(i, i)] = -2.0;
        d[(i, (i + 1) % n)] += 1.0;
        d[(i, (i + n - 1) % n)] += 1.0;
    }
    d / (dx * dx)
}

#[test]
fn gray_scott_rhs_matches_dense_kronecker_oracle() {
    let n = 8;
    let params = GrayScottParams { grid_n: n, ..Default::default() };
    let p = GrayScott::new(params.clone()).unwrap();
    let np = n * n;
    let d = second_difference(n, params.domain / n as f64);
    let id = DMatrix::<f64>::identity(n, n);
    let lap = id.kronecker(&d) + d.kronecker(&id);
    let mut r = rng(12);
    let y = DVector::from_fn(2 * np, |_, _| r.gen_range(0.0..1.0));
    let u = y.rows(0, np).into_owned();
    let v = y.rows(np, np).into_owned();
    let uvv = u.component_mul(&v).component_mul(&v);
    let ones = DVector::from_element(np, 1.0);
    let du = &lap * &u * params.eps1 - &uvv + (&ones - &u) * params.feed;
    let dv = &lap * &v * params.eps2 + &uvv - &v * (params.feed + params.kill);
    let got = p.rhs(0.0, &y).unwrap();
    assert!((got.rows(0, np) - du).amax() < 1e-11);
    assert!((got.rows(np, np) - dv).amax() < 1e-11);

    let jac = linearize(&p, 0.0, &y).unwrap().to_dense();
    let mut oracle = DMatrix::zeros(2 * np, 2 * np);
    for k in 0..np {
        oracle[(k, k)] = -v[k] * v[k] - params.feed;
        oracle[(k, np + k)] = -2.0 * u[k] * v[k];
        oracle[(np + k, k)] = v[k] * v[k];
        oracle[(np + k, np + k)] = 2.0 * u[k] * v[k] - params.feed - params.kill;
    }
    let mut uu = oracle.view_mut((0, 0), (np, np));
    uu += &lap * params.eps1;
    let mut vv = oracle.view_mut((np, np), (np, np));
    vv += &lap * params.eps2;
    assert!((jac - oracle).amax() < 1e-11);
}

#[test]
fn gray_scott_trivial_states() {
    let p = gray_scott(6);
    let np = 36;
    let mut y = DVector::zeros(2 * np);
    y.rows_mut(0, np).fill(1.0);
    assert_eq!(p.rhs(0.0, &y).unwrap().amax(), 0.0);
    let z = p.rhs(0.0, &DVector::zeros(2 * np)).unwrap();
    assert!(z.rows(0, np).iter().all(|&x| x == p.params().feed));
    assert!(z.rows(np, np).iter().all(|&x| x == 0.0));
}

#[test]
fn gray_scott_reaction_block_at_trivial_state_by_finite_differences() {
    let params = GrayScottParams { grid_n: 4, ..Default::default() };
    let p = GrayScott::new(params.clone()).unwrap();
    let np = 16;
    let mut y = DVector::zeros(2 * np);
    y.rows_mut(0, np).fill(1.0);
    let jac = linearize(&p, 0.0, &y).unwrap();
    let dx = params.domain / 4.0;
    for j in [np, np + 5, np + 15] {
        let mut e = DVector::zeros(2 * np);
        e[j] = 1.0;
        let col = jac.apply(&e);
        let fd = fd_directional(&p, 0.0, &y, &e);
        assert!((&col - &fd).amax() < 1e-6);
        let hand = -4.0 * params.eps2 / (dx * dx) - (params.feed + params.kill);
        assert!((col[j] - hand).abs() < 1e-12);
    }
}

#[test]
fn shallow_water_lake_at_rest_is_steady() {
    let p = swe(8);
    let n = p.dim() / 3;
    let mut y = DVector::zeros(3 * n);
    y.rows_mut(2 * n, n).fill(1.0);
    assert!(p.rhs(0.0, &y).unwrap().amax() < 1e-14);
}

#[test]
fn autonomized_jacobian_matches_finite_differences() {
    let mut r = rng(13);
    let a = random_matrix(5, -1.0, &mut r);
    let g = random_vector(5, &mut r);
    let g2 = g.clone();
    let p = LinearProblem::new(a, random_vector(5, &mut r), (0.0, 1.0))
        .unwrap()
        .with_forcing(move |t| (&g * (2.0 * t).sin(), &g2 * (2.0 * (2.0 * t).cos())));
    let aug = autonomize(&p);
    assert_eq!(aug.dim(), 6);
    let mut y = random_vector(6, &mut r);
    y[5] = 0.3;
    let jac = linearize(&aug, 0.0, &y).unwrap();
    for _ in 0..5 {
        let v = random_vector(6, &mut r);
        let exact = jac.apply(&v);
        let fd = fd_directional(&aug, 0.0, &y, &v);
        assert!((&exact - &fd).norm() < 1e-6 * exact.norm());
    }
    let f = aug.rhs(0.0, &y).unwrap();
    assert_eq!(f[5], 1.0);
}

#[test]
fn autonomized_time_ramp_has_hand_jacobian() {
    let p = LinearProblem::new(DMatrix::zeros(1, 1), DVector::zeros(1), (0.0, 1.0))
        .unwrap()
        .with_forcing(|t| (DVector::from_element(1, t), DVector::from_element(1, 1.0)));
    let aug = autonomize(&p);
    let j = linearize(&aug, 0.0, &DVector::from_vec(vec![0.4, 0.7])).unwrap().to_dense();
    assert_eq!(j, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]));
}

#[test]
fn autonomous_input_passes_through() {
    let p = gray_scott(4);
    let aug = autonomize(&p);
    let y = perturbed(&p, 14, 0.1).push(0.25);
    let f = aug.rhs(0.0, &y).unwrap();
    let inner = p.rhs(0.0, &y.rows(0, p.dim()).into_owned()).unwrap();
    assert_eq!(f.rows(0, p.dim()), inner.rows(0, p.dim()));
    assert_eq!(f[p.dim()], 1.0);
}
