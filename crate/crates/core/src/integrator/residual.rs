use nalgebra::DVector;

use super::{MethodTableau, StageWorkspace};
use crate::krylov::{first_stage_residual, ReducedBasis};
use crate::problem::JacobianHandle;

/// `|h gamma c_{m+1} e_m^T lambda_1|`: the norm of the first stage residual
/// `(I - h gamma J) k_1 - h F_1` when the basis was seeded with `F_1`.
pub fn stage_residual_first<B: ReducedBasis + ?Sized>(basis: &B, lambda_1: &DVector<f64>, h: f64, gamma: f64) -> f64 {
    first_stage_residual(basis.next_coeff(), lambda_1, basis.krylov_size(), h, gamma)
}

/// Closed form of the residual of stage `i` (0-based):
///
/// `r_i = -h^2 J sum_j gamma_ij delta_j - h (I - V W^T) J V_e sum_j gamma_ij lambda_j`,
///
/// sums over `j <= i` with `gamma_ii = gamma`, `delta_j = F_j - V psi_j`, and
/// `V_e` the columns of `V` from the last Krylov vector on. Without extension
/// the second term is `h c_{m+1} v_{m+1} e_m^T sum_j gamma_ij lambda_j`.
///
/// `basis` must be the one the step used (possibly grown by extension); the
/// leading `workspace.dims[i]` columns are the ones stage `i` saw.
pub fn stage_residual_full<B: ReducedBasis + ?Sized>(
    jac: &JacobianHandle,
    basis: &B,
    workspace: &StageWorkspace,
    tableau: &MethodTableau,
    h: f64,
    i: usize,
) -> DVector<f64> {
    let dim = workspace.dims[i];
    let m = basis.krylov_size();
    let n = basis.n();
    let g = tableau.gamma_full();
    let mut c = DVector::zeros(dim);
    let mut d = DVector::zeros(n);
    for j in 0..=i {
        c.axpy(g[(i, j)], &workspace.lambda_padded(j, dim), 1.0);
        d.axpy(g[(i, j)], &workspace.delta[j], 1.0);
    }
    let mut r = jac.apply(&d) * (-h * h);
    if dim == m {
        r.axpy(-h * basis.next_coeff() * c[m - 1], basis.v_next(), 1.0);
    } else {
        let v = &basis.v()[..dim];
        let w = &basis.w()[..dim];
        let mut x = DVector::zeros(n);
        for col in (m - 1)..dim {
            x.axpy(c[col], &v[col], 1.0);
        }
        let jx = jac.apply(&x);
        let mut proj = jx.clone();
        for (vk, wk) in v.iter().zip(w) {
            proj.axpy(-wk.dot(&jx), vk, 1.0);
        }
        r.axpy(-h, &proj, 1.0);
    }
    r
}

/// Residual of stage `i` from its definition,
/// `(I - h gamma J) k_i - h F_i - h J sum_{j<i} gamma_ij k_j`.
pub fn stage_residual_direct(
    jac: &JacobianHandle,
    workspace: &StageWorkspace,
    tableau: &MethodTableau,
    h: f64,
    i: usize,
) -> DVector<f64> {
    let g = tableau.gamma_full();
    let mut acc = DVector::zeros(workspace.k[i].len());
    for j in 0..=i {
        acc.axpy(g[(i, j)], &workspace.k[j], 1.0);
    }
    let mut r = workspace.k[i].clone();
    r.axpy(-h, &workspace.f[i], 1.0);
    r.axpy(-h, &jac.apply(&acc), 1.0);
    r
}
