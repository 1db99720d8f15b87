//! Initial-value problems `y' = f(t, y)` with frozen-point Jacobian products.

mod autonomize;
mod gray_scott;
mod linear;
mod operator;
mod shallow_water;

pub use autonomize::{autonomize, Autonomized};
pub use gray_scott::{GrayScott, GrayScottParams};
pub use linear::LinearProblem;
pub use operator::{CsrMatrix, CsrPattern, DenseOperator, JacobianHandle, LinearOperator};
pub use shallow_water::{ShallowWater, ShallowWaterParams};

use nalgebra::DVector;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProblemError {
    #[error("non-finite state or derivative in {0}")]
    NonFiniteState(&'static str),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid problem parameter: {0}")]
    InvalidParameter(String),
}

/// An initial-value problem.
///
/// Integrators in this crate treat the problem as autonomous and evaluate
/// [`OdeProblem::rhs`] with the time at the start of the step. Problems that
/// depend on time report it through [`OdeProblem::is_autonomous`] and are
/// wrapped with [`autonomize`] by the drivers.
pub trait OdeProblem: Send + Sync {
    fn dim(&self) -> usize;

    fn t_span(&self) -> (f64, f64);

    fn initial_state(&self) -> DVector<f64>;

    fn rhs(&self, t: f64, y: &DVector<f64>) -> Result<DVector<f64>, ProblemError>;

    /// The Jacobian `df/dy` at `(t, y)`.
    fn jacobian(&self, t: f64, y: &DVector<f64>) -> Result<Box<dyn LinearOperator>, ProblemError>;

    fn is_autonomous(&self) -> bool {
        true
    }

    /// `df/dt` at `(t, y)`. Only consulted for non-autonomous problems.
    fn time_derivative(&self, _t: f64, y: &DVector<f64>) -> Result<DVector<f64>, ProblemError> {
        Ok(DVector::zeros(y.len()))
    }

    /// Short identifier used in logs and reference metadata.
    fn name(&self) -> String {
        "problem".to_string()
    }
}

/// Freezes the Jacobian at `(t, y)` behind a counting handle.
pub fn linearize(problem: &dyn OdeProblem, t: f64, y: &DVector<f64>) -> Result<JacobianHandle, ProblemError> {
    check_finite(y, "linearization point")?;
    let op = problem.jacobian(t, y)?;
    Ok(JacobianHandle::new(op, t, y.clone()))
}

pub(crate) fn check_finite(v: &DVector<f64>, what: &'static str) -> Result<(), ProblemError> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(ProblemError::NonFiniteState(what))
    }
}

pub(crate) fn check_dim(v: &DVector<f64>, expected: usize) -> Result<(), ProblemError> {
    if v.len() == expected {
        Ok(())
    } else {
        Err(ProblemError::DimensionMismatch { expected, got: v.len() })
    }
}

/// Index helper for a square grid stored row-major, `k = i * n + j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Grid {
    pub n: usize,
}

impl Grid {
    pub fn idx(&self, i: usize, j: usize) -> usize {
        i * self.n + j
    }

    pub fn points(&self) -> usize {
        self.n * self.n
    }
}

/// Sparsity pattern built on the first linearization and reused afterwards,
/// for Jacobians whose triplet order does not depend on the state.
#[derive(Debug, Clone, Default)]
pub(crate) struct PatternCache(std::sync::OnceLock<CsrPattern>);

impl PatternCache {
    pub(crate) fn assemble(&self, n: usize, triplets: Vec<(usize, usize, f64)>) -> CsrMatrix {
        let pattern = self.0.get_or_init(|| CsrPattern::new(n, triplets.iter().map(|&(r, c, _)| (r, c))));
        if pattern.len() == triplets.len() {
            pattern.assemble(triplets.into_iter().map(|t| t.2))
        } else {
            CsrMatrix::from_triplets(n, triplets)
        }
    }
}
