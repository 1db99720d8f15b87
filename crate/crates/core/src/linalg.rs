//! Small dense and structured linear algebra for the reduced space.
//!
//! Everything here works on matrices whose dimension is the Krylov basis size
//! (tens to a few hundred), except [`min_norm_least_squares`], whose input has
//! a long dimension `N` but only `k` rows.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Pivots below this fraction of the largest matrix entry are treated as zero.
pub const SINGULAR_TOL: f64 = 1e-14;

/// Singular values below this fraction of the largest one make a
/// least-squares system rank deficient.
pub const RANK_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("singular system: pivot {pivot:e} at row {row} below tolerance {tol:e}")]
    SingularSystem { row: usize, pivot: f64, tol: f64 },
    #[error("rank deficient system: numerical rank {rank} < {rows}")]
    RankDeficient { rank: usize, rows: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// Sparsity structure known for a reduced matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Structure {
    /// Entries with `|row - col| > 1` are exactly zero.
    Tridiagonal,
    /// Entries below the first subdiagonal are exactly zero.
    UpperHessenberg,
    /// A tridiagonal leading block bordered by dense extension rows and columns.
    TridiagonalPlusExtension,
    General,
}

/// The projected Jacobian `T` living in the reduced space.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedMatrix {
    data: DMatrix<f64>,
    structure: Structure,
}

impl ReducedMatrix {
    pub fn new(data: DMatrix<f64>, structure: Structure) -> Result<Self, LinalgError> {
        if data.nrows() != data.ncols() || data.nrows() == 0 {
            return Err(LinalgError::DimensionMismatch(format!(
                "reduced matrix must be square and nonempty, got {}x{}",
                data.nrows(),
                data.ncols()
            )));
        }
        let mut out = Self { data, structure };
        out.enforce_structure();
        Ok(out)
    }

    pub fn general(data: DMatrix<f64>) -> Result<Self, LinalgError> {
        Self::new(data, Structure::General)
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn structure(&self) -> Structure {
        self.structure
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.amax()
    }

    /// Leading `k x k` block. Keeps the structure tag when it still applies.
    pub fn leading(&self, k: usize) -> ReducedMatrix {
        let structure = match self.structure {
            Structure::TridiagonalPlusExtension => Structure::General,
            s => s,
        };
        ReducedMatrix { data: self.data.view((0, 0), (k, k)).into_owned(), structure }
    }

    fn enforce_structure(&mut self) {
        let n = self.dim();
        match self.structure {
            Structure::Tridiagonal => {
                for j in 0..n {
                    for i in 0..n {
                        if i.abs_diff(j) > 1 {
                            self.data[(i, j)] = 0.0;
                        }
                    }
                }
            }
            Structure::UpperHessenberg => {
                for j in 0..n {
                    for i in (j + 2)..n {
                        self.data[(i, j)] = 0.0;
                    }
                }
            }
            _ => {}
        }
    }

    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.data * x
    }
}

/// Solves `(I - scale * T) x = rhs`.
pub fn solve_shifted(t: &ReducedMatrix, scale: f64, rhs: &DVector<f64>) -> Result<DVector<f64>, LinalgError> {
    let m = t.dim();
    if rhs.len() != m {
        return Err(LinalgError::DimensionMismatch(format!("rhs has length {}, reduced matrix is {m}x{m}", rhs.len())));
    }
    let mut shifted = t.as_matrix() * (-scale);
    for i in 0..m {
        shifted[(i, i)] += 1.0;
    }
    match t.structure() {
        Structure::Tridiagonal => solve_tridiagonal(&shifted, rhs),
        Structure::UpperHessenberg => solve_hessenberg(shifted, rhs.clone()),
        _ => {
            let lu = LuFactors::factor(shifted)?;
            Ok(lu.solve_vec(rhs))
        }
    }
}

/// Solves `A X = B` with partial pivoting.
pub fn dense_solve(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>, LinalgError> {
    if a.nrows() != a.ncols() || a.nrows() != b.nrows() {
        return Err(LinalgError::DimensionMismatch(format!(
            "A is {}x{}, B is {}x{}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    let lu = LuFactors::factor(a.clone())?;
    Ok(lu.solve_mat(b))
}

/// LU factorization with partial pivoting, `P A = L U`, stored in place.
#[derive(Debug, Clone)]
pub struct LuFactors {
    lu: DMatrix<f64>,
    perm: Vec<usize>,
}

impl LuFactors {
    pub fn factor(mut a: DMatrix<f64>) -> Result<Self, LinalgError> {
        let n = a.nrows();
        assert_eq!(n, a.ncols(), "LU needs a square matrix");
        let tol = SINGULAR_TOL * a.amax();
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let (p, pivot) =
                (k..n)
                    .map(|i| (i, a[(i, k)].abs()))
                    .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if !(pivot > tol) {
                return Err(LinalgError::SingularSystem { row: k, pivot, tol });
            }
            if p != k {
                a.swap_rows(p, k);
                perm.swap(p, k);
            }
            let akk = a[(k, k)];
            for i in (k + 1)..n {
                let l = a[(i, k)] / akk;
                a[(i, k)] = l;
                if l != 0.0 {
                    for j in (k + 1)..n {
                        a[(i, j)] -= l * a[(k, j)];
                    }
                }
            }
        }
        Ok(Self { lu: a, perm })
    }

    pub fn dim(&self) -> usize {
        self.perm.len()
    }

    pub fn solve_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        let n = self.dim();
        let mut x = DVector::from_fn(n, |i, _| b[self.perm[i]]);
        for i in 0..n {
            let mut s = x[i];
            for j in 0..i {
                s -= self.lu[(i, j)] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in (i + 1)..n {
                s -= self.lu[(i, j)] * x[j];
            }
            x[i] = s / self.lu[(i, i)];
        }
        x
    }

    pub fn solve_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(b.nrows(), b.ncols());
        for c in 0..b.ncols() {
            let col = self.solve_vec(&b.column(c).into_owned());
            out.set_column(c, &col);
        }
        out
    }
}

/// Banded LU with partial pivoting for a tridiagonal matrix, O(m).
fn solve_tridiagonal(a: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>, LinalgError> {
    let n = a.nrows();
    let dl: Vec<f64> = (1..n).map(|i| a[(i, i - 1)]).collect();
    let d: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
    let du: Vec<f64> = (0..n.saturating_sub(1)).map(|i| a[(i, i + 1)]).collect();
    solve_tridiagonal_bands(dl, d, du, rhs)
}

/// Solves a tridiagonal system given by its sub-, main and superdiagonal,
/// using LU with partial pivoting in O(n).
pub fn solve_tridiagonal_bands(
    mut dl: Vec<f64>,
    mut d: Vec<f64>,
    mut du: Vec<f64>,
    rhs: &DVector<f64>,
) -> Result<DVector<f64>, LinalgError> {
    let n = d.len();
    if rhs.len() != n || dl.len() + 1 != n.max(1) || du.len() != dl.len() {
        return Err(LinalgError::DimensionMismatch(format!(
            "bands {}/{}/{} with rhs of length {}",
            dl.len(),
            n,
            du.len(),
            rhs.len()
        )));
    }
    if n == 0 {
        return Ok(DVector::zeros(0));
    }
    let amax = dl.iter().chain(&d).chain(&du).fold(0.0f64, |m, x| m.max(x.abs()));
    let tol = SINGULAR_TOL * amax;
    let mut du2 = vec![0.0; n.saturating_sub(2)];
    let mut x = rhs.clone();
    for i in 0..n.saturating_sub(1) {
        if d[i].abs() >= dl[i].abs() {
            if !(d[i].abs() > tol) {
                return Err(LinalgError::SingularSystem { row: i, pivot: d[i].abs(), tol });
            }
            let l = dl[i] / d[i];
            d[i + 1] -= l * du[i];
            x[i + 1] -= l * x[i];
            dl[i] = 0.0;
        } else {
            // swap rows i and i+1
            let l = d[i] / dl[i];
            d[i] = dl[i];
            let tmp = d[i + 1];
            d[i + 1] = du[i] - l * tmp;
            du[i] = tmp;
            if i + 1 < n - 1 {
                du2[i] = du[i + 1];
                du[i + 1] = -l * du2[i];
            }
            let xi = x[i];
            x[i] = x[i + 1];
            x[i + 1] = xi - l * x[i + 1];
        }
    }
    let last = n - 1;
    if !(d[last].abs() > tol) {
        return Err(LinalgError::SingularSystem { row: last, pivot: d[last].abs(), tol });
    }
    x[last] /= d[last];
    if n >= 2 {
        x[last - 1] = (x[last - 1] - du[last - 1] * x[last]) / d[last - 1];
    }
    for i in (0..n.saturating_sub(2)).rev() {
        x[i] = (x[i] - du[i] * x[i + 1] - du2[i] * x[i + 2]) / d[i];
    }
    Ok(x)
}

/// Hessenberg LU with partial pivoting between adjacent rows, O(m^2).
fn solve_hessenberg(mut a: DMatrix<f64>, mut x: DVector<f64>) -> Result<DVector<f64>, LinalgError> {
    let n = a.nrows();
    let tol = SINGULAR_TOL * a.amax();
    for k in 0..n {
        if k + 1 < n && a[(k + 1, k)].abs() > a[(k, k)].abs() {
            a.swap_rows(k, k + 1);
            x.swap_rows(k, k + 1);
        }
        let pivot = a[(k, k)];
        if !(pivot.abs() > tol) {
            return Err(LinalgError::SingularSystem { row: k, pivot: pivot.abs(), tol });
        }
        if k + 1 < n {
            let l = a[(k + 1, k)] / pivot;
            if l != 0.0 {
                for j in k..n {
                    a[(k + 1, j)] -= l * a[(k, j)];
                }
                x[k + 1] -= l * x[k];
            }
        }
    }
    for i in (0..n).rev() {
        let mut s = x[i];
        for j in (i + 1)..n {
            s -= a[(i, j)] * x[j];
        }
        x[i] = s / a[(i, i)];
    }
    Ok(x)
}

/// Minimum-Frobenius-norm solution `W` of the underdetermined system `C W = D`,
/// where `C` is `k x N` with `k <= N`.
///
/// Computed as `W = C^T Y` with `(C C^T) Y = D`, using a Cholesky factorization
/// of the small Gram matrix and one step of iterative refinement against the
/// original rows.
pub fn min_norm_least_squares(c: &DMatrix<f64>, d: &DMatrix<f64>) -> Result<DMatrix<f64>, LinalgError> {
    let k = c.nrows();
    if d.nrows() != k || k > c.ncols() || k == 0 {
        return Err(LinalgError::DimensionMismatch(format!(
            "C is {}x{}, D is {}x{}",
            k,
            c.ncols(),
            d.nrows(),
            d.ncols()
        )));
    }
    let gram = c * c.transpose();
    let chol = Cholesky::factor(&gram)?;
    let mut y = chol.solve_mat(d);
    let mut w = c.transpose() * &y;
    let resid = d - c * &w;
    y = chol.solve_mat(&resid);
    w += c.transpose() * &y;
    Ok(w)
}

struct Cholesky {
    l: DMatrix<f64>,
}

impl Cholesky {
    fn factor(g: &DMatrix<f64>) -> Result<Self, LinalgError> {
        let n = g.nrows();
        let scale = (0..n).map(|i| g[(i, i)]).fold(0.0_f64, f64::max);
        // Pivots of the Gram matrix behave like squared singular values.
        let tol = RANK_TOL * RANK_TOL * scale;
        let mut l = DMatrix::zeros(n, n);
        for j in 0..n {
            let mut diag = g[(j, j)];
            for p in 0..j {
                diag -= l[(j, p)] * l[(j, p)];
            }
            if !(diag > tol) {
                return Err(LinalgError::RankDeficient { rank: j, rows: n });
            }
            let ljj = diag.sqrt();
            l[(j, j)] = ljj;
            for i in (j + 1)..n {
                let mut s = g[(i, j)];
                for p in 0..j {
                    s -= l[(i, p)] * l[(j, p)];
                }
                l[(i, j)] = s / ljj;
            }
        }
        Ok(Self { l })
    }

    fn solve_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let n = self.l.nrows();
        let mut x = b.clone();
        for c in 0..b.ncols() {
            for i in 0..n {
                let mut s = x[(i, c)];
                for p in 0..i {
                    s -= self.l[(i, p)] * x[(p, c)];
                }
                x[(i, c)] = s / self.l[(i, i)];
            }
            for i in (0..n).rev() {
                let mut s = x[(i, c)];
                for p in (i + 1)..n {
                    s -= self.l[(p, i)] * x[(p, c)];
                }
                x[(i, c)] = s / self.l[(i, i)];
            }
        }
        x
    }
}
