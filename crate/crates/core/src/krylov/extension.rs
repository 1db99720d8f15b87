use nalgebra::{DMatrix, DVector};

use super::{BiorthBasis, KrylovError, ReducedBasis};
use crate::linalg::{min_norm_least_squares, LinalgError, ReducedMatrix, Structure};
use crate::problem::JacobianHandle;

/// Columns whose component outside the current span is at most this fraction
/// of their norm are not added.
pub const DEGENERATE_EXTENSION_TOL: f64 = 1e-12;

/// One block of columns appended to a biorthogonal basis.
#[derive(Debug, Clone)]
pub struct ExtensionBlock {
    /// New right vectors, `W_old^T v_a = 0`.
    pub v_a: DMatrix<f64>,
    /// New left vectors, `V_old^T w_a = 0` and `v_a^T w_a = I`.
    pub w_a: DMatrix<f64>,
    /// `W_old^T J v_a`.
    pub t_v: DMatrix<f64>,
    /// `V_old^T J^T w_a`.
    pub t_w: DMatrix<f64>,
    /// `w_a^T J v_a`.
    pub t_vw: DMatrix<f64>,
    pub alpha: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SkipReason {
    /// The column already lies in the span of `V`.
    Degenerate,
    /// The least-squares system for `w_a` was numerically rank deficient.
    RankDeficient,
}

/// What [`extend_basis`] did with each requested column.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExtensionOutcome {
    pub added: usize,
    pub skipped: Vec<(usize, SkipReason)>,
}

impl ExtensionOutcome {
    pub fn all_skipped(&self) -> bool {
        self.added == 0
    }
}

/// Appends the columns of `a` to the span of `(V, W)` keeping `W^T V = I`.
///
/// `v_a = (I - V W^T) a / alpha`, and `w_a` is the minimum-norm solution of
/// `V^T w_a = 0`, `alpha v_a^T w_a = alpha I`. `T` gains the blocks
/// `W^T J v_a`, `w_a^T J V` and `w_a^T J v_a`, so that `T = W^T J V` still
/// holds. Columns already in the span, or that make the system rank
/// deficient, are skipped and reported. Costs one product with `J` and one
/// with `J^T` per added column.
pub fn extend_basis(
    basis: &mut BiorthBasis,
    a: &DMatrix<f64>,
    jac: &JacobianHandle,
    alpha: f64,
) -> Result<ExtensionOutcome, KrylovError> {
    if alpha == 0.0 || !alpha.is_finite() {
        return Err(KrylovError::InvalidArgument(format!("extension scale must be finite and nonzero, got {alpha}")));
    }
    if a.nrows() != basis.n() {
        return Err(KrylovError::InvalidArgument(format!(
            "extension vectors have length {}, basis vectors {}",
            a.nrows(),
            basis.n()
        )));
    }
    let mut outcome = ExtensionOutcome::default();
    let mut kept = Vec::new();
    let mut projected = Vec::new();
    for (i, col) in a.column_iter().enumerate() {
        let col = col.into_owned();
        let p = complement(basis, &col);
        if p.norm() <= DEGENERATE_EXTENSION_TOL * col.norm() {
            outcome.skipped.push((i, SkipReason::Degenerate));
        } else {
            kept.push(i);
            projected.push(p / alpha);
        }
    }
    if kept.is_empty() {
        return Ok(outcome);
    }
    match append_block(basis, &projected, jac, alpha) {
        Ok(()) => outcome.added = kept.len(),
        Err(KrylovError::Linalg(LinalgError::RankDeficient { .. })) if kept.len() > 1 => {
            // Retry one column at a time so that only the offending ones drop out.
            for &i in &kept {
                let col = a.column(i).into_owned();
                let p = complement(basis, &col);
                if p.norm() <= DEGENERATE_EXTENSION_TOL * col.norm() {
                    outcome.skipped.push((i, SkipReason::Degenerate));
                    continue;
                }
                match append_block(basis, &[p / alpha], jac, alpha) {
                    Ok(()) => outcome.added += 1,
                    Err(KrylovError::Linalg(LinalgError::RankDeficient { .. })) => {
                        outcome.skipped.push((i, SkipReason::RankDeficient))
                    }
                    Err(e) => return Err(e),
                }
            }
            outcome.skipped.sort_by_key(|s| s.0);
        }
        Err(KrylovError::Linalg(LinalgError::RankDeficient { .. })) => {
            outcome.skipped.push((kept[0], SkipReason::RankDeficient));
            outcome.skipped.sort_by_key(|s| s.0);
        }
        Err(e) => return Err(e),
    }
    Ok(outcome)
}

/// `(I - V W^T) x`.
fn complement(basis: &BiorthBasis, x: &DVector<f64>) -> DVector<f64> {
    x - basis.lift(&basis.project(x))
}

fn append_block(
    basis: &mut BiorthBasis,
    v_cols: &[DVector<f64>],
    jac: &JacobianHandle,
    alpha: f64,
) -> Result<(), KrylovError> {
    let m = basis.dim();
    let r = v_cols.len();
    let n = basis.n();
    let mut c = DMatrix::zeros(m + r, n);
    for (i, vi) in basis.v.iter().enumerate() {
        c.row_mut(i).copy_from(&vi.transpose());
    }
    for (k, va) in v_cols.iter().enumerate() {
        c.row_mut(m + k).copy_from(&(va.transpose() * alpha));
    }
    let mut d = DMatrix::zeros(m + r, r);
    for k in 0..r {
        d[(m + k, k)] = alpha;
    }
    let w_a = min_norm_least_squares(&c, &d)?;
    let v_a = DMatrix::from_columns(v_cols);
    if !w_a.iter().all(|x| x.is_finite()) {
        return Err(KrylovError::NonFinite(m));
    }

    let mut jv = DMatrix::zeros(n, r);
    let mut jtw = DMatrix::zeros(n, r);
    for k in 0..r {
        jv.set_column(k, &jac.apply(&v_a.column(k).into_owned()));
        jtw.set_column(k, &jac.apply_transpose(&w_a.column(k).into_owned()));
    }
    let w_old = basis.w_matrix();
    let v_old = basis.v_matrix();
    let t_v = w_old.transpose() * &jv;
    let t_w = v_old.transpose() * &jtw;
    let t_vw = w_a.transpose() * &jv;

    let mut t = DMatrix::zeros(m + r, m + r);
    t.view_mut((0, 0), (m, m)).copy_from(basis.t.as_matrix());
    t.view_mut((0, m), (m, r)).copy_from(&t_v);
    t.view_mut((m, 0), (r, m)).copy_from(&t_w.transpose());
    t.view_mut((m, m), (r, r)).copy_from(&t_vw);
    basis.t = ReducedMatrix::new(t, Structure::TridiagonalPlusExtension)?;
    for k in 0..r {
        basis.v.push(v_a.column(k).into_owned());
        basis.w.push(w_a.column(k).into_owned());
    }
    basis.matvecs += r;
    basis.tmatvecs += r;
    basis.extensions.push(ExtensionBlock { v_a, w_a, t_v, t_w, t_vw, alpha });
    Ok(())
}
