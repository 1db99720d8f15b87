use nalgebra::{DMatrix, DVector};

use super::{check_dim, LinearOperator, OdeProblem, ProblemError};

/// The augmented system `(y, tau)' = (f(tau, y), 1)`.
pub struct Autonomized<'a> {
    inner: &'a dyn OdeProblem,
}

/// Wraps `problem` into its `N + 1` dimensional autonomous form.
pub fn autonomize(problem: &dyn OdeProblem) -> Autonomized<'_> {
    Autonomized { inner: problem }
}

impl Autonomized<'_> {
    fn split(&self, y: &DVector<f64>) -> Result<(DVector<f64>, f64), ProblemError> {
        check_dim(y, self.dim())?;
        let n = self.inner.dim();
        Ok((y.rows(0, n).into_owned(), y[n]))
    }
}

impl OdeProblem for Autonomized<'_> {
    fn dim(&self) -> usize {
        self.inner.dim() + 1
    }

    fn t_span(&self) -> (f64, f64) {
        self.inner.t_span()
    }

    fn initial_state(&self) -> DVector<f64> {
        let y0 = self.inner.initial_state();
        let n = y0.len();
        let mut out = y0.resize_vertically(n + 1, 0.0);
        out[n] = self.inner.t_span().0;
        out
    }

    fn rhs(&self, _t: f64, y: &DVector<f64>) -> Result<DVector<f64>, ProblemError> {
        let (state, tau) = self.split(y)?;
        let f = self.inner.rhs(tau, &state)?;
        let n = f.len();
        let mut out = f.resize_vertically(n + 1, 0.0);
        out[n] = 1.0;
        Ok(out)
    }

    fn jacobian(&self, _t: f64, y: &DVector<f64>) -> Result<Box<dyn LinearOperator>, ProblemError> {
        let (state, tau) = self.split(y)?;
        let jac = self.inner.jacobian(tau, &state)?;
        let dfdt = self.inner.time_derivative(tau, &state)?;
        Ok(Box::new(AugmentedOperator { jac, dfdt }))
    }

    fn name(&self) -> String {
        format!("{}+t", self.inner.name())
    }
}

/// `[[J, df/dt], [0, 0]]`.
struct AugmentedOperator {
    jac: Box<dyn LinearOperator>,
    dfdt: DVector<f64>,
}

impl LinearOperator for AugmentedOperator {
    fn dim(&self) -> usize {
        self.jac.dim() + 1
    }

    fn apply_into(&self, x: &DVector<f64>, out: &mut DVector<f64>) {
        let n = self.jac.dim();
        let mut top = DVector::zeros(n);
        self.jac.apply_into(&x.rows(0, n).into_owned(), &mut top);
        top.axpy(x[n], &self.dfdt, 1.0);
        out.rows_mut(0, n).copy_from(&top);
        out[n] = 0.0;
    }

    fn apply_transpose_into(&self, x: &DVector<f64>, out: &mut DVector<f64>) {
        let n = self.jac.dim();
        let top_in = x.rows(0, n).into_owned();
        let mut top = DVector::zeros(n);
        self.jac.apply_transpose_into(&top_in, &mut top);
        out.rows_mut(0, n).copy_from(&top);
        out[n] = self.dfdt.dot(&top_in);
    }

    fn to_dense(&self) -> DMatrix<f64> {
        let n = self.jac.dim();
        let mut m = DMatrix::zeros(n + 1, n + 1);
        m.view_mut((0, 0), (n, n)).copy_from(&self.jac.to_dense());
        m.view_mut((0, n), (n, 1)).copy_from(&self.dfdt);
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{linearize, LinearProblem};

    #[test]
    fn autonomous_input_keeps_rhs_and_appends_one() {
        let m = DMatrix::from_row_slice(2, 2, &[-1.0, 2.0, 0.5, -3.0]);
        let p = LinearProblem::new(m.clone(), DVector::from_vec(vec![1.0, 2.0]), (0.0, 1.0)).unwrap();
        let aug = autonomize(&p);
        let y = DVector::from_vec(vec![0.3, -0.7, 0.25]);
        let f = aug.rhs(0.0, &y).unwrap();
        let inner = p.rhs(0.25, &y.rows(0, 2).into_owned()).unwrap();
        assert_eq!(f.rows(0, 2), inner.rows(0, 2));
        assert_eq!(f[2], 1.0);
        assert_eq!(aug.initial_state().as_slice(), &[1.0, 2.0, 0.0]);
    }

    #[test]
    fn scalar_time_forcing_jacobian() {
        // y' = t
        let p = LinearProblem::new(DMatrix::zeros(1, 1), DVector::zeros(1), (0.0, 1.0))
            .unwrap()
            .with_forcing(|t| (DVector::from_element(1, t), DVector::from_element(1, 1.0)));
        assert!(!p.is_autonomous());
        let aug = autonomize(&p);
        let jac = linearize(&aug, 0.0, &DVector::from_vec(vec![0.0, 0.4])).unwrap();
        assert_eq!(jac.to_dense(), DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]));
        let w = DVector::from_vec(vec![2.0, 3.0]);
        assert_eq!(jac.apply_transpose(&w).as_slice(), &[0.0, 2.0]);
    }
}
