use nalgebra::{DMatrix, DVector};

use super::{
    check_seed, first_stage_residual, AdaptiveOptions, ExtensionBlock, KrylovError, ReducedBasis, Termination,
    BREAKDOWN_TOL,
};
use crate::linalg::{solve_tridiagonal_bands, ReducedMatrix, Structure};
use crate::problem::JacobianHandle;

/// Biorthogonal Lanczos basis pair with `W^T V = I` and
/// `J V = V T + theta_{m+1} v_{m+1} e_m^T`.
#[derive(Debug, Clone)]
pub struct BiorthBasis {
    pub(crate) v: Vec<DVector<f64>>,
    pub(crate) w: Vec<DVector<f64>>,
    pub(crate) t: ReducedMatrix,
    pub(crate) krylov_size: usize,
    pub(crate) theta_next: f64,
    pub(crate) beta_next: f64,
    pub(crate) v_next: DVector<f64>,
    pub(crate) w_next: DVector<f64>,
    pub(crate) termination: Termination,
    pub(crate) seed_norm: f64,
    pub(crate) first_residual: Option<f64>,
    pub(crate) extensions: Vec<ExtensionBlock>,
    pub(crate) matvecs: usize,
    pub(crate) tmatvecs: usize,
}

impl BiorthBasis {
    pub fn termination(&self) -> Termination {
        self.termination
    }

    /// `theta_{m+1}`.
    pub fn theta_next(&self) -> f64 {
        self.theta_next
    }

    /// `beta_{m+1}`.
    pub fn beta_next(&self) -> f64 {
        self.beta_next
    }

    /// `w_{m+1}`; zero when the recurrence stopped before computing it.
    pub fn w_next(&self) -> &DVector<f64> {
        &self.w_next
    }

    /// Norm of the seed vector, so that `W^T f = |f| e_1`.
    pub fn seed_norm(&self) -> f64 {
        self.seed_norm
    }

    /// First-stage residual norm, when the basis was built adaptively.
    pub fn first_residual(&self) -> Option<f64> {
        self.first_residual
    }

    pub fn extensions(&self) -> &[ExtensionBlock] {
        &self.extensions
    }

    /// Number of columns added by extension.
    pub fn extension_count(&self) -> usize {
        self.v.len() - self.krylov_size
    }

    /// Jacobian products spent building and extending the basis.
    pub fn matvecs(&self) -> usize {
        self.matvecs
    }

    /// Transposed Jacobian products spent building and extending the basis.
    pub fn tmatvecs(&self) -> usize {
        self.tmatvecs
    }

    /// `max |W^T V - I|`, a diagnostic for loss of biorthogonality.
    pub fn biorthogonality_defect(&self) -> f64 {
        let g = self.w_matrix().transpose() * self.v_matrix();
        (g - DMatrix::identity(self.dim(), self.dim())).amax()
    }
}

impl ReducedBasis for BiorthBasis {
    fn v(&self) -> &[DVector<f64>] {
        &self.v
    }

    fn w(&self) -> &[DVector<f64>] {
        &self.w
    }

    fn reduced(&self) -> &ReducedMatrix {
        &self.t
    }

    fn krylov_size(&self) -> usize {
        self.krylov_size
    }

    fn next_coeff(&self) -> f64 {
        self.theta_next
    }

    fn v_next(&self) -> &DVector<f64> {
        &self.v_next
    }
}

enum Advance {
    Continue,
    Lucky,
    Serious,
}

/// Three-term recurrence state. After `advance` the `*_next` fields hold the
/// candidates for iteration `j + 1`.
struct Recurrence<'a> {
    jac: &'a JacobianHandle,
    seed_norm: f64,
    v: Vec<DVector<f64>>,
    w: Vec<DVector<f64>>,
    kappa: Vec<f64>,
    sub: Vec<f64>,
    sup: Vec<f64>,
    theta_next: f64,
    beta_next: f64,
    v_next: DVector<f64>,
    w_next: DVector<f64>,
    matvecs: usize,
    tmatvecs: usize,
}

impl<'a> Recurrence<'a> {
    fn new(jac: &'a JacobianHandle, f: &DVector<f64>, seed_norm: f64) -> Self {
        let v1 = f / seed_norm;
        let n = f.len();
        Self {
            jac,
            seed_norm,
            v: vec![v1.clone()],
            w: vec![v1],
            kappa: Vec::new(),
            sub: Vec::new(),
            sup: Vec::new(),
            theta_next: 0.0,
            beta_next: 0.0,
            v_next: DVector::zeros(n),
            w_next: DVector::zeros(n),
            matvecs: 0,
            tmatvecs: 0,
        }
    }

    fn size(&self) -> usize {
        self.kappa.len()
    }

    fn advance(&mut self) -> Result<Advance, KrylovError> {
        let j = self.v.len() - 1;
        let n = self.v[j].len();
        let av = self.jac.apply(&self.v[j]);
        let atw = self.jac.apply_transpose(&self.w[j]);
        self.matvecs += 1;
        self.tmatvecs += 1;
        let kappa = av.dot(&self.w[j]);
        let mut vh = av.clone();
        vh.axpy(-kappa, &self.v[j], 1.0);
        let mut wh = atw;
        wh.axpy(-kappa, &self.w[j], 1.0);
        if j > 0 {
            vh.axpy(-self.sup[j - 1], &self.v[j - 1], 1.0);
            wh.axpy(-self.sub[j - 1], &self.w[j - 1], 1.0);
        }
        self.kappa.push(kappa);
        let theta = vh.norm();
        if !kappa.is_finite() || !theta.is_finite() {
            return Err(KrylovError::NonFinite(j + 1));
        }
        if theta <= BREAKDOWN_TOL * av.norm() {
            self.theta_next = 0.0;
            self.beta_next = 0.0;
            self.v_next = DVector::zeros(n);
            self.w_next = DVector::zeros(n);
            return Ok(Advance::Lucky);
        }
        let dot = vh.dot(&wh);
        let beta = dot / theta;
        self.theta_next = theta;
        self.beta_next = beta;
        self.v_next = vh / theta;
        if !(dot.abs() > BREAKDOWN_TOL * theta * wh.norm()) {
            self.w_next = DVector::zeros(n);
            return Ok(Advance::Serious);
        }
        self.w_next = wh / beta;
        Ok(Advance::Continue)
    }

    fn push_next(&mut self) {
        self.v.push(self.v_next.clone());
        self.w.push(self.w_next.clone());
        self.sub.push(self.theta_next);
        self.sup.push(self.beta_next);
    }

    /// First-stage residual of the current size with `W^T f = |f| e_1`.
    fn residual(&self, opts: &AdaptiveOptions) -> Result<f64, KrylovError> {
        let j = self.size();
        let s = opts.h * opts.gamma;
        let d = self.kappa.iter().map(|k| 1.0 - s * k).collect();
        let dl = self.sub.iter().map(|x| -s * x).collect();
        let du = self.sup.iter().map(|x| -s * x).collect();
        let mut rhs = DVector::zeros(j);
        rhs[0] = opts.h * self.seed_norm;
        let lambda = solve_tridiagonal_bands(dl, d, du, &rhs)?;
        Ok(first_stage_residual(self.theta_next, &lambda, j, opts.h, opts.gamma))
    }

    fn finish(self, termination: Termination, first_residual: Option<f64>) -> BiorthBasis {
        let m = self.size();
        let mut t = DMatrix::zeros(m, m);
        for i in 0..m {
            t[(i, i)] = self.kappa[i];
            if i + 1 < m {
                t[(i + 1, i)] = self.sub[i];
                t[(i, i + 1)] = self.sup[i];
            }
        }
        let mut v = self.v;
        let mut w = self.w;
        v.truncate(m);
        w.truncate(m);
        BiorthBasis {
            v,
            w,
            t: ReducedMatrix::new(t, Structure::Tridiagonal).expect("square tridiagonal"),
            krylov_size: m,
            theta_next: self.theta_next,
            beta_next: self.beta_next,
            v_next: self.v_next,
            w_next: self.w_next,
            termination,
            seed_norm: self.seed_norm,
            first_residual,
            extensions: Vec::new(),
            matvecs: self.matvecs,
            tmatvecs: self.tmatvecs,
        }
    }
}

/// Builds an `m`-dimensional biorthogonal Lanczos basis seeded with `f`.
///
/// Costs exactly `m` products with `J` and `m` with `J^T` unless the
/// recurrence stops early. A lucky breakdown returns the smaller invariant
/// basis with [`Termination::LuckyBreakdown`]; a serious breakdown before
/// size `m` returns [`KrylovError::SeriousBreakdown`] carrying the usable
/// partial basis.
pub fn lanczos_biorth(jac: &JacobianHandle, f: &DVector<f64>, m: usize) -> Result<BiorthBasis, KrylovError> {
    let seed_norm = check_seed(f, m)?;
    if m > f.len() {
        return Err(KrylovError::InvalidSize(format!("m = {m} exceeds the problem size {}", f.len())));
    }
    let mut rec = Recurrence::new(jac, f, seed_norm);
    loop {
        let outcome = rec.advance()?;
        let j = rec.size();
        match outcome {
            Advance::Lucky => return Ok(rec.finish(Termination::LuckyBreakdown, None)),
            _ if j == m => return Ok(rec.finish(Termination::Complete, None)),
            Advance::Serious => {
                let basis = rec.finish(Termination::Complete, None);
                return Err(KrylovError::SeriousBreakdown { basis: Box::new(basis) });
            }
            Advance::Continue => rec.push_next(),
        }
    }
}

/// Grows the Lanczos basis until the first-stage residual
/// `|h gamma theta_{j+1} e_j^T lambda_1|` drops to `res_tol`, testing from
/// size `m_min` on. Each test is an O(j) tridiagonal solve.
///
/// When `m_max` is reached first the basis of size `m_max` is returned with
/// [`Termination::MaxSizeReached`].
pub fn lanczos_biorth_adaptive(
    jac: &JacobianHandle,
    f: &DVector<f64>,
    opts: &AdaptiveOptions,
) -> Result<BiorthBasis, KrylovError> {
    let seed_norm = check_seed(f, opts.m_max)?;
    if opts.m_min == 0 || opts.m_min > opts.m_max {
        return Err(KrylovError::InvalidSize(format!("need 1 <= m_min ({}) <= m_max ({})", opts.m_min, opts.m_max)));
    }
    let m_max = opts.m_max.min(f.len());
    let mut rec = Recurrence::new(jac, f, seed_norm);
    loop {
        let outcome = rec.advance()?;
        let j = rec.size();
        if let Advance::Lucky = outcome {
            return Ok(rec.finish(Termination::LuckyBreakdown, Some(0.0)));
        }
        let res = if j >= opts.m_min || j == m_max { Some(rec.residual(opts)?) } else { None };
        if let Some(r) = res {
            if r <= opts.res_tol {
                return Ok(rec.finish(Termination::Converged, Some(r)));
            }
        }
        if j == m_max {
            return Ok(rec.finish(Termination::MaxSizeReached, res));
        }
        if let Advance::Serious = outcome {
            let basis = rec.finish(Termination::MaxSizeReached, res);
            return Err(KrylovError::SeriousBreakdown { basis: Box::new(basis) });
        }
        rec.push_next();
    }
}
