use num_complex::Complex64;

use super::MethodTableau;
use crate::linalg::{LinalgError, SINGULAR_TOL};

/// Stability function `R(z)`: one step of the method on `y' = z y` with
/// `h = 1`, exact Jacobian and `y_0 = 1`.
pub fn stability_function_eval(tableau: &MethodTableau, z: Complex64) -> Result<Complex64, LinalgError> {
    let denom = Complex64::new(1.0, 0.0) - tableau.gamma_diag * z;
    if denom.norm() <= SINGULAR_TOL * (1.0 + tableau.gamma_diag * z.norm()) {
        return Err(LinalgError::SingularSystem { row: 0, pivot: denom.norm(), tol: SINGULAR_TOL });
    }
    let s = tableau.s;
    let mut k: Vec<Complex64> = Vec::with_capacity(s);
    for i in 0..s {
        let mut arg = Complex64::new(1.0, 0.0);
        let mut acc = Complex64::new(0.0, 0.0);
        for (j, kj) in k.iter().enumerate() {
            arg += tableau.alpha[(i, j)] * kj;
            acc += tableau.gamma_lower[(i, j)] * kj;
        }
        k.push((z * arg + z * acc) / denom);
    }
    Ok(k.iter().zip(tableau.b.iter()).fold(Complex64::new(1.0, 0.0), |y, (ki, bi)| y + bi * ki))
}
