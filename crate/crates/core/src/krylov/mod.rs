//! Krylov bases for the Jacobian approximation.
//!
//! [`lanczos_biorth`] builds the biorthogonal pair `(V, W)` spanning
//! `K_m(J, f)` and `K_m(J^T, f)` with `W^T V = I` and tridiagonal
//! `T = W^T J V`; [`arnoldi`] builds the orthonormal basis used by the ROK
//! baseline. Both expose the same view through [`ReducedBasis`], which is all
//! the reduced-space integrators need.

mod arnoldi;
mod extension;
mod lanczos;

pub use arnoldi::{arnoldi, arnoldi_adaptive, ArnoldiBasis};
pub use extension::{extend_basis, ExtensionBlock, ExtensionOutcome, SkipReason, DEGENERATE_EXTENSION_TOL};
pub use lanczos::{lanczos_biorth, lanczos_biorth_adaptive, BiorthBasis};

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::linalg::{solve_shifted, LinalgError, ReducedMatrix};

/// Relative size below which a new Krylov direction is treated as zero.
pub const BREAKDOWN_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum KrylovError {
    #[error("the seed vector is zero")]
    ZeroSeed,
    #[error("invalid basis size request: {0}")]
    InvalidSize(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("serious breakdown after {} basis vectors", .basis.dim())]
    SeriousBreakdown { basis: Box<BiorthBasis> },
    #[error("non-finite basis data at iteration {0}")]
    NonFinite(usize),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// How a basis construction ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// Reached the requested fixed size.
    Complete,
    /// The Krylov space became invariant; the remainder term vanishes.
    LuckyBreakdown,
    /// Residual test met at the current size.
    Converged,
    /// Residual tolerance still unmet at the maximum size.
    MaxSizeReached,
}

/// Options for residual-adaptive basis construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptiveOptions {
    pub h: f64,
    pub gamma: f64,
    pub res_tol: f64,
    pub m_min: usize,
    pub m_max: usize,
}

/// Read-only view of a reduced basis: `V`, `W`, `T` and the remainder term
/// `J V = V T + c v_next e_m^T`.
pub trait ReducedBasis {
    fn v(&self) -> &[DVector<f64>];

    /// Left basis. Equals `V` for orthonormal bases.
    fn w(&self) -> &[DVector<f64>];

    fn reduced(&self) -> &ReducedMatrix;

    /// Size of the Krylov part, before any extension.
    fn krylov_size(&self) -> usize;

    /// Coefficient of the remainder term (`theta_{m+1}` or `h_{m+1,m}`).
    fn next_coeff(&self) -> f64;

    /// Unit-norm next basis vector (zero after a lucky breakdown).
    fn v_next(&self) -> &DVector<f64>;

    fn dim(&self) -> usize {
        self.v().len()
    }

    fn n(&self) -> usize {
        self.v()[0].len()
    }

    /// `W^T x`.
    fn project(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.dim(), self.w().iter().map(|w| w.dot(x)))
    }

    /// `V c`.
    fn lift(&self, c: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.n());
        for (vj, &cj) in self.v().iter().zip(c.iter()) {
            out.axpy(cj, vj, 1.0);
        }
        out
    }

    /// `A x = V T W^T x`, the Krylov approximation of `J x`.
    fn approx_jac_apply(&self, x: &DVector<f64>) -> DVector<f64> {
        self.lift(&self.reduced().apply(&self.project(x)))
    }

    fn v_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_columns(self.v())
    }

    fn w_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_columns(self.w())
    }

    /// Dense `A = V T W^T`; for oracles on small problems.
    fn approx_jacobian_dense(&self) -> DMatrix<f64> {
        self.v_matrix() * self.reduced().as_matrix() * self.w_matrix().transpose()
    }
}

/// `W^T x` (free function form of [`ReducedBasis::project`]).
pub fn project<B: ReducedBasis + ?Sized>(basis: &B, x: &DVector<f64>) -> DVector<f64> {
    basis.project(x)
}

/// `V T W^T x` (free function form of [`ReducedBasis::approx_jac_apply`]).
pub fn approx_jac_apply<B: ReducedBasis + ?Sized>(basis: &B, x: &DVector<f64>) -> DVector<f64> {
    basis.approx_jac_apply(x)
}

/// `|h gamma c_{m+1} e_m^T lambda_1|`, the norm of the first-stage residual
/// given a unit-norm `v_{m+1}`.
pub fn first_stage_residual(next_coeff: f64, lambda_1: &DVector<f64>, krylov_size: usize, h: f64, gamma: f64) -> f64 {
    if next_coeff == 0.0 || h == 0.0 {
        return 0.0;
    }
    (h * gamma * next_coeff * lambda_1[krylov_size - 1]).abs()
}

/// First-stage residual of a size-`j` basis with reduced matrix `t` built from
/// the seed `f1` (`W^T f1 = |f1| e_1`).
pub(crate) fn seed_residual(
    t: &ReducedMatrix,
    next_coeff: f64,
    seed_norm: f64,
    opts: &AdaptiveOptions,
) -> Result<f64, LinalgError> {
    let j = t.dim();
    let mut rhs = DVector::zeros(j);
    rhs[0] = opts.h * seed_norm;
    let lambda = solve_shifted(t, opts.h * opts.gamma, &rhs)?;
    Ok(first_stage_residual(next_coeff, &lambda, j, opts.h, opts.gamma))
}

pub(crate) fn check_seed(f: &DVector<f64>, m: usize) -> Result<f64, KrylovError> {
    if m == 0 {
        return Err(KrylovError::InvalidSize("basis size must be at least 1".into()));
    }
    let norm = f.norm();
    if norm == 0.0 {
        return Err(KrylovError::ZeroSeed);
    }
    if !norm.is_finite() {
        return Err(KrylovError::NonFinite(0));
    }
    Ok(norm)
}
