use nalgebra::{DMatrix, DVector};

use super::{MethodTableau, StepError};
use crate::krylov::{extend_basis, BiorthBasis, ReducedBasis};
use crate::linalg::{solve_shifted, LuFactors};
use crate::problem::{JacobianHandle, OdeProblem, ProblemError};
use crate::stepcontrol::error_norm_tol;

/// Per-stage quantities of one step.
///
/// `lambda[i]` has the reduced dimension `dims[i]` that was current at stage
/// `i`; `delta[i] = F_i - V psi_i` is the part of `F_i` outside the basis.
#[derive(Debug, Clone, Default)]
pub struct StageWorkspace {
    pub f: Vec<DVector<f64>>,
    pub psi: Vec<DVector<f64>>,
    pub lambda: Vec<DVector<f64>>,
    pub k: Vec<DVector<f64>>,
    pub delta: Vec<DVector<f64>>,
    pub dims: Vec<usize>,
}

impl StageWorkspace {
    fn with_capacity(s: usize) -> Self {
        Self {
            f: Vec::with_capacity(s),
            psi: Vec::with_capacity(s),
            lambda: Vec::with_capacity(s),
            k: Vec::with_capacity(s),
            delta: Vec::with_capacity(s),
            dims: Vec::with_capacity(s),
        }
    }

    /// `lambda[j]` zero-padded to `dim` entries.
    pub fn lambda_padded(&self, j: usize, dim: usize) -> DVector<f64> {
        pad(&self.lambda[j], dim)
    }
}

/// Result of one step.
#[derive(Debug, Clone)]
pub struct StepRecord {
    pub y_next: DVector<f64>,
    /// `sum (b_i - b_hat_i) k_i`, when the tableau has embedded weights.
    pub err_vec: Option<DVector<f64>>,
    /// Reduced dimension at the last stage (includes extension columns).
    pub basis_size: usize,
    pub workspace: StageWorkspace,
    pub rhs_evals: usize,
    /// Jacobian products spent inside the step (extension only).
    pub matvecs: usize,
    pub tmatvecs: usize,
    /// Extension columns that were skipped as degenerate or rank deficient.
    pub extension_skips: usize,
}

impl StepRecord {
    /// Weighted RMS norm of the error estimate, or `None` without embedded weights.
    pub fn err_est(&self, abs_tol: f64, rel_tol: f64) -> Option<f64> {
        self.err_vec.as_ref().map(|e| error_norm_tol(&self.y_next, e, abs_tol, rel_tol))
    }
}

pub(crate) fn pad(x: &DVector<f64>, dim: usize) -> DVector<f64> {
    if x.len() == dim {
        x.clone()
    } else {
        x.clone().resize_vertically(dim, 0.0)
    }
}

fn check_inputs(problem: &dyn OdeProblem, n: usize, y: &DVector<f64>, h: f64) -> Result<(), StepError> {
    if !problem.is_autonomous() {
        return Err(StepError::NonAutonomous);
    }
    if y.len() != n || problem.dim() != n {
        return Err(ProblemError::DimensionMismatch { expected: n, got: y.len() }.into());
    }
    if !(h > 0.0) || !h.is_finite() {
        return Err(StepError::InvalidStepsize(h));
    }
    Ok(())
}

/// `F_i = f(y_n + sum_{j<i} alpha_ij k_j)`.
fn stage_rhs(
    problem: &dyn OdeProblem,
    tableau: &MethodTableau,
    y: &DVector<f64>,
    ws: &StageWorkspace,
    i: usize,
) -> Result<DVector<f64>, StepError> {
    let mut arg = y.clone();
    for (j, kj) in ws.k.iter().enumerate().take(i) {
        let a = tableau.alpha[(i, j)];
        if a != 0.0 {
            arg.axpy(a, kj, 1.0);
        }
    }
    if arg.iter().any(|x| !x.is_finite()) {
        return Err(ProblemError::NonFiniteState("stage argument").into());
    }
    Ok(problem.rhs(problem.t_span().0, &arg)?)
}

/// Reduced stage solve against the current basis:
/// `lambda_i = (I - h gamma T)^{-1} (h psi_i + h T sum_{j<i} gamma_ij lambda_j)`,
/// `k_i = V lambda_i + h (F_i - V psi_i)`.
fn reduced_stage<B: ReducedBasis + ?Sized>(
    basis: &B,
    tableau: &MethodTableau,
    ws: &mut StageWorkspace,
    f_i: DVector<f64>,
    h: f64,
) -> Result<(), StepError> {
    let i = ws.k.len();
    let dim = basis.dim();
    let t = basis.reduced();
    let psi = basis.project(&f_i);
    let mut acc = DVector::zeros(dim);
    for j in 0..i {
        let g = tableau.gamma_lower[(i, j)];
        if g != 0.0 {
            acc.axpy(g, &ws.lambda_padded(j, dim), 1.0);
        }
    }
    let rhs = (&psi + t.apply(&acc)) * h;
    let lambda = solve_shifted(t, h * tableau.gamma_diag, &rhs)?;
    let delta = &f_i - basis.lift(&psi);
    let mut k = basis.lift(&lambda);
    k.axpy(h, &delta, 1.0);
    if k.iter().any(|x| !x.is_finite()) {
        return Err(ProblemError::NonFiniteState("stage vector").into());
    }
    ws.f.push(f_i);
    ws.psi.push(psi);
    ws.lambda.push(lambda);
    ws.k.push(k);
    ws.delta.push(delta);
    ws.dims.push(dim);
    Ok(())
}

fn combine(tableau: &MethodTableau, y: &DVector<f64>, ws: &StageWorkspace) -> (DVector<f64>, Option<DVector<f64>>) {
    let mut y_next = y.clone();
    for (bi, ki) in tableau.b.iter().zip(&ws.k) {
        if *bi != 0.0 {
            y_next.axpy(*bi, ki, 1.0);
        }
    }
    let err = tableau.error_weights().map(|e| {
        let mut out = DVector::zeros(y.len());
        for (ei, ki) in e.iter().zip(&ws.k) {
            out.axpy(*ei, ki, 1.0);
        }
        out
    });
    (y_next, err)
}

fn reduced_step<B: ReducedBasis + ?Sized>(
    problem: &dyn OdeProblem,
    tableau: &MethodTableau,
    basis: &B,
    y_n: &DVector<f64>,
    h: f64,
    f1: Option<DVector<f64>>,
) -> Result<StepRecord, StepError> {
    check_inputs(problem, basis.n(), y_n, h)?;
    let mut ws = StageWorkspace::with_capacity(tableau.s);
    let mut rhs_evals = 0;
    let mut f1 = f1;
    for i in 0..tableau.s {
        let f_i = match (i, f1.take()) {
            (0, Some(f)) => f,
            _ => {
                rhs_evals += 1;
                stage_rhs(problem, tableau, y_n, &ws, i)?
            }
        };
        reduced_stage(basis, tableau, &mut ws, f_i, h)?;
    }
    let (y_next, err_vec) = combine(tableau, y_n, &ws);
    Ok(StepRecord {
        y_next,
        err_vec,
        basis_size: basis.dim(),
        workspace: ws,
        rhs_evals,
        matvecs: 0,
        tmatvecs: 0,
        extension_skips: 0,
    })
}

/// One reduced-space BOROK step on a biorthogonal basis built at `y_n`.
///
/// Uses `s` right-hand side evaluations and no Jacobian products.
pub fn borok_step(
    problem: &dyn OdeProblem,
    tableau: &MethodTableau,
    basis: &BiorthBasis,
    y_n: &DVector<f64>,
    h: f64,
) -> Result<StepRecord, StepError> {
    reduced_step(problem, tableau, basis, y_n, h, None)
}

/// [`borok_step`] reusing an already evaluated `F_1 = f(y_n)`, so only `s - 1`
/// new right-hand side evaluations are made.
pub fn borok_step_seeded(
    problem: &dyn OdeProblem,
    tableau: &MethodTableau,
    basis: &BiorthBasis,
    y_n: &DVector<f64>,
    h: f64,
    f1: DVector<f64>,
) -> Result<StepRecord, StepError> {
    reduced_step(problem, tableau, basis, y_n, h, Some(f1))
}

/// One reduced-space ROK step on an orthonormal Arnoldi basis (`W = V`, `T = H`).
pub fn rok_step<B: ReducedBasis + ?Sized>(
    problem: &dyn OdeProblem,
    tableau: &MethodTableau,
    basis: &B,
    y_n: &DVector<f64>,
    h: f64,
) -> Result<StepRecord, StepError> {
    reduced_step(problem, tableau, basis, y_n, h, None)
}

/// [`rok_step`] reusing `F_1 = f(y_n)`.
pub fn rok_step_seeded<B: ReducedBasis + ?Sized>(
    problem: &dyn OdeProblem,
    tableau: &MethodTableau,
    basis: &B,
    y_n: &DVector<f64>,
    h: f64,
    f1: DVector<f64>,
) -> Result<StepRecord, StepError> {
    reduced_step(problem, tableau, basis, y_n, h, Some(f1))
}

/// BOROK step whose basis is extended by each stage right-hand side `F_i`,
/// `i >= 2`, before that stage is solved. Earlier `lambda_j` are zero-padded
/// to the grown dimension. Columns already in the span are skipped and the
/// stage proceeds with the unextended basis.
///
/// `basis` is modified in place; `jac` must be the Jacobian it was built from.
pub fn borok_step_extended(
    problem: &dyn OdeProblem,
    tableau: &MethodTableau,
    basis: &mut BiorthBasis,
    jac: &JacobianHandle,
    y_n: &DVector<f64>,
    h: f64,
    f1: Option<DVector<f64>>,
    alpha: f64,
) -> Result<StepRecord, StepError> {
    check_inputs(problem, basis.n(), y_n, h)?;
    let mut ws = StageWorkspace::with_capacity(tableau.s);
    let (mv0, tmv0) = (basis.matvecs(), basis.tmatvecs());
    let mut rhs_evals = 0;
    let mut skips = 0;
    let mut f1 = f1;
    for i in 0..tableau.s {
        let f_i = match (i, f1.take()) {
            (0, Some(f)) => f,
            _ => {
                rhs_evals += 1;
                stage_rhs(problem, tableau, y_n, &ws, i)?
            }
        };
        if i > 0 {
            let col = DMatrix::from_columns(std::slice::from_ref(&f_i));
            let outcome = extend_basis(basis, &col, jac, alpha)?;
            skips += outcome.skipped.len();
        }
        reduced_stage(&*basis, tableau, &mut ws, f_i, h)?;
    }
    let (y_next, err_vec) = combine(tableau, y_n, &ws);
    Ok(StepRecord {
        y_next,
        err_vec,
        basis_size: basis.dim(),
        workspace: ws,
        rhs_evals,
        matvecs: basis.matvecs() - mv0,
        tmatvecs: basis.tmatvecs() - tmv0,
        extension_skips: skips,
    })
}

/// Full-space linearly implicit step with an explicit matrix `A`:
/// `k_i = (I - h gamma A)^{-1} (h F_i + h A sum_{j<i} gamma_ij k_j)`.
/// Dense; meant for oracles and tiny problems.
pub fn full_space_row_step(
    problem: &dyn OdeProblem,
    tableau: &MethodTableau,
    a: &DMatrix<f64>,
    y_n: &DVector<f64>,
    h: f64,
) -> Result<DVector<f64>, StepError> {
    Ok(full_space_stages(problem, tableau, a, y_n, h)?.0)
}

/// [`full_space_row_step`] also returning the stage vectors `k_i`.
pub fn full_space_stages(
    problem: &dyn OdeProblem,
    tableau: &MethodTableau,
    a: &DMatrix<f64>,
    y_n: &DVector<f64>,
    h: f64,
) -> Result<(DVector<f64>, Vec<DVector<f64>>), StepError> {
    let n = y_n.len();
    check_inputs(problem, n, y_n, h)?;
    if a.nrows() != n || a.ncols() != n {
        return Err(ProblemError::DimensionMismatch { expected: n, got: a.nrows() }.into());
    }
    let shifted = DMatrix::identity(n, n) - a * (h * tableau.gamma_diag);
    let lu = LuFactors::factor(shifted)?;
    let mut ws = StageWorkspace::with_capacity(tableau.s);
    for i in 0..tableau.s {
        let f_i = stage_rhs(problem, tableau, y_n, &ws, i)?;
        let mut acc = DVector::zeros(n);
        for j in 0..i {
            acc.axpy(tableau.gamma_lower[(i, j)], &ws.k[j], 1.0);
        }
        let rhs = (&f_i + a * acc) * h;
        let k = lu.solve_vec(&rhs);
        ws.f.push(f_i);
        ws.k.push(k);
    }
    let (y_next, _) = combine(tableau, y_n, &ws);
    Ok((y_next, ws.k))
}
