use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::{check_dim, check_finite, DenseOperator, LinearOperator, OdeProblem, ProblemError};

type Forcing = Arc<dyn Fn(f64) -> (DVector<f64>, DVector<f64>) + Send + Sync>;

/// `y' = M y + g(t)` with a dense `M`.
#[derive(Clone)]
pub struct LinearProblem {
    matrix: DMatrix<f64>,
    y0: DVector<f64>,
    t_span: (f64, f64),
    /// Returns `(g(t), g'(t))`.
    forcing: Option<Forcing>,
}

impl LinearProblem {
    pub fn new(matrix: DMatrix<f64>, y0: DVector<f64>, t_span: (f64, f64)) -> Result<Self, ProblemError> {
        if matrix.nrows() != matrix.ncols() {
            return Err(ProblemError::InvalidParameter("matrix must be square".into()));
        }
        check_dim(&y0, matrix.nrows())?;
        if !(t_span.0 < t_span.1) {
            return Err(ProblemError::InvalidParameter("t_span must satisfy t0 < tF".into()));
        }
        Ok(Self { matrix, y0, t_span, forcing: None })
    }

    /// Adds a time-dependent forcing `g(t)`; `forcing(t)` returns `(g(t), g'(t))`.
    pub fn with_forcing<F>(mut self, forcing: F) -> Self
    where
        F: Fn(f64) -> (DVector<f64>, DVector<f64>) + Send + Sync + 'static,
    {
        self.forcing = Some(Arc::new(forcing));
        self
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }
}

impl OdeProblem for LinearProblem {
    fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    fn t_span(&self) -> (f64, f64) {
        self.t_span
    }

    fn initial_state(&self) -> DVector<f64> {
        self.y0.clone()
    }

    fn rhs(&self, t: f64, y: &DVector<f64>) -> Result<DVector<f64>, ProblemError> {
        check_dim(y, self.dim())?;
        let mut out = &self.matrix * y;
        if let Some(g) = &self.forcing {
            out += g(t).0;
        }
        check_finite(&out, "linear rhs")?;
        Ok(out)
    }

    fn jacobian(&self, _t: f64, _y: &DVector<f64>) -> Result<Box<dyn LinearOperator>, ProblemError> {
        Ok(Box::new(DenseOperator(self.matrix.clone())))
    }

    fn is_autonomous(&self) -> bool {
        self.forcing.is_none()
    }

    fn time_derivative(&self, t: f64, _y: &DVector<f64>) -> Result<DVector<f64>, ProblemError> {
        Ok(match &self.forcing {
            Some(g) => g(t).1,
            None => DVector::zeros(self.dim()),
        })
    }

    fn name(&self) -> String {
        format!("linear-{}", self.dim())
    }
}
