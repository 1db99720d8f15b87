use nalgebra::{DMatrix, DVector};

use super::{check_seed, seed_residual, AdaptiveOptions, KrylovError, ReducedBasis, Termination, BREAKDOWN_TOL};
use crate::linalg::{ReducedMatrix, Structure};
use crate::problem::JacobianHandle;

/// Orthonormal Arnoldi basis with `J V = V H + h_{m+1,m} v_{m+1} e_m^T`.
#[derive(Debug, Clone)]
pub struct ArnoldiBasis {
    v: Vec<DVector<f64>>,
    h: ReducedMatrix,
    h_next: f64,
    v_next: DVector<f64>,
    termination: Termination,
    first_residual: Option<f64>,
    matvecs: usize,
}

impl ArnoldiBasis {
    pub fn termination(&self) -> Termination {
        self.termination
    }

    /// `h_{m+1,m}`.
    pub fn h_next(&self) -> f64 {
        self.h_next
    }

    pub fn first_residual(&self) -> Option<f64> {
        self.first_residual
    }

    pub fn matvecs(&self) -> usize {
        self.matvecs
    }

    /// `max |V^T V - I|`.
    pub fn orthogonality_defect(&self) -> f64 {
        let v = self.v_matrix();
        (v.transpose() * &v - DMatrix::identity(self.dim(), self.dim())).amax()
    }
}

impl ReducedBasis for ArnoldiBasis {
    fn v(&self) -> &[DVector<f64>] {
        &self.v
    }

    fn w(&self) -> &[DVector<f64>] {
        &self.v
    }

    fn reduced(&self) -> &ReducedMatrix {
        &self.h
    }

    fn krylov_size(&self) -> usize {
        self.v.len()
    }

    fn next_coeff(&self) -> f64 {
        self.h_next
    }

    fn v_next(&self) -> &DVector<f64> {
        &self.v_next
    }
}

struct Process<'a> {
    jac: &'a JacobianHandle,
    seed_norm: f64,
    v: Vec<DVector<f64>>,
    /// Column `j` of `H` above the subdiagonal.
    cols: Vec<Vec<f64>>,
    h_next: f64,
    v_next: DVector<f64>,
}

impl<'a> Process<'a> {
    fn new(jac: &'a JacobianHandle, f: &DVector<f64>, seed_norm: f64) -> Self {
        Self { jac, seed_norm, v: vec![f / seed_norm], cols: Vec::new(), h_next: 0.0, v_next: DVector::zeros(f.len()) }
    }

    fn size(&self) -> usize {
        self.cols.len()
    }

    /// One modified Gram-Schmidt step with a second orthogonalization pass;
    /// returns true on breakdown.
    fn advance(&mut self) -> Result<bool, KrylovError> {
        let j = self.v.len() - 1;
        let av = self.jac.apply(&self.v[j]);
        let scale = av.norm();
        let mut u = av;
        let mut col = vec![0.0; j + 1];
        for _pass in 0..2 {
            for (vi, hij) in self.v.iter().zip(col.iter_mut()) {
                let c = vi.dot(&u);
                u.axpy(-c, vi, 1.0);
                *hij += c;
            }
        }
        let hn = u.norm();
        if !hn.is_finite() || col.iter().any(|x| !x.is_finite()) {
            return Err(KrylovError::NonFinite(j + 1));
        }
        self.cols.push(col);
        if hn <= BREAKDOWN_TOL * scale {
            self.h_next = 0.0;
            self.v_next = DVector::zeros(u.len());
            return Ok(true);
        }
        self.h_next = hn;
        self.v_next = u / hn;
        Ok(false)
    }

    /// Accepts `v_next` as the next basis vector; `h_next` becomes part of `H`.
    fn push_next(&mut self) {
        let h = self.h_next;
        self.cols.last_mut().expect("advanced").push(h);
        self.v.push(self.v_next.clone());
    }

    fn hessenberg(&self) -> ReducedMatrix {
        let m = self.size();
        let mut h = DMatrix::zeros(m, m);
        for (j, col) in self.cols.iter().enumerate() {
            for (i, &x) in col.iter().enumerate().take(m) {
                h[(i, j)] = x;
            }
        }
        ReducedMatrix::new(h, Structure::UpperHessenberg).expect("square hessenberg")
    }

    fn residual(&self, opts: &AdaptiveOptions) -> Result<f64, KrylovError> {
        Ok(seed_residual(&self.hessenberg(), self.h_next, self.seed_norm, opts)?)
    }

    fn finish(self, termination: Termination, first_residual: Option<f64>) -> ArnoldiBasis {
        let h = self.hessenberg();
        let m = h.dim();
        let mut v = self.v;
        v.truncate(m);
        ArnoldiBasis { v, h, h_next: self.h_next, v_next: self.v_next, termination, first_residual, matvecs: m }
    }
}

/// Builds an `m`-dimensional orthonormal Arnoldi basis of `K_m(J, f)` with
/// modified Gram-Schmidt. Costs `m` products with `J`.
pub fn arnoldi(jac: &JacobianHandle, f: &DVector<f64>, m: usize) -> Result<ArnoldiBasis, KrylovError> {
    let seed_norm = check_seed(f, m)?;
    if m > f.len() {
        return Err(KrylovError::InvalidSize(format!("m = {m} exceeds the problem size {}", f.len())));
    }
    let mut p = Process::new(jac, f, seed_norm);
    loop {
        let lucky = p.advance()?;
        if lucky {
            return Ok(p.finish(Termination::LuckyBreakdown, None));
        }
        if p.size() == m {
            return Ok(p.finish(Termination::Complete, None));
        }
        p.push_next();
    }
}

/// Residual-adaptive Arnoldi; same stopping rule as
/// [`lanczos_biorth_adaptive`](super::lanczos_biorth_adaptive).
pub fn arnoldi_adaptive(
    jac: &JacobianHandle,
    f: &DVector<f64>,
    opts: &AdaptiveOptions,
) -> Result<ArnoldiBasis, KrylovError> {
    let seed_norm = check_seed(f, opts.m_max)?;
    if opts.m_min == 0 || opts.m_min > opts.m_max {
        return Err(KrylovError::InvalidSize(format!("need 1 <= m_min ({}) <= m_max ({})", opts.m_min, opts.m_max)));
    }
    let m_max = opts.m_max.min(f.len());
    let mut p = Process::new(jac, f, seed_norm);
    loop {
        if p.advance()? {
            return Ok(p.finish(Termination::LuckyBreakdown, Some(0.0)));
        }
        let j = p.size();
        let res = if j >= opts.m_min || j == m_max { Some(p.residual(opts)?) } else { None };
        if let Some(r) = res {
            if r <= opts.res_tol {
                return Ok(p.finish(Termination::Converged, Some(r)));
            }
        }
        if j == m_max {
            return Ok(p.finish(Termination::MaxSizeReached, res));
        }
        p.push_next();
    }
}
