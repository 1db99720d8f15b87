use std::collections::BTreeMap;
use std::time::Instant;

use nalgebra::DVector;
use thiserror::Error;

use super::{next_stepsize, BasisKind, BasisStrategy, ConfigError, ControllerConfig, Integrator};
use crate::integrator::{
    borok_step_extended, borok_step_seeded, rok_step_seeded, MethodTableau, StageWorkspace, StepError, StepRecord,
};
use crate::krylov::{
    arnoldi, arnoldi_adaptive, lanczos_biorth, lanczos_biorth_adaptive, AdaptiveOptions, KrylovError, ReducedBasis,
    Termination,
};
use crate::problem::{autonomize, linearize, OdeProblem, ProblemError};

/// Step counts and work of one integration.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunStats {
    pub steps_accepted: usize,
    pub steps_rejected: usize,
    pub rhs_evals: usize,
    pub matvecs: usize,
    pub tmatvecs: usize,
    /// Basis size of every construction, including rejected steps.
    pub basis_size_histogram: BTreeMap<usize, usize>,
    /// Adaptive constructions that hit `m_max` without meeting the tolerance.
    pub max_size_hits: usize,
    pub serious_breakdowns: usize,
    pub extension_skips: usize,
    /// Largest `max |W^T V - I|` over the biorthogonal bases built. The
    /// recurrence is not re-biorthogonalized; this is a diagnostic only.
    pub max_biorthogonality_defect: f64,
    /// Largest first-stage residual over tolerance ratio on accepted
    /// residual-adaptive steps.
    pub max_residual_ratio: f64,
    pub wall_time: f64,
}

impl RunStats {
    pub fn steps(&self) -> usize {
        self.steps_accepted + self.steps_rejected
    }

    pub fn mean_basis_size(&self) -> f64 {
        let (sum, count) =
            self.basis_size_histogram.iter().fold((0usize, 0usize), |(s, c), (&m, &k)| (s + m * k, c + k));
        if count == 0 {
            0.0
        } else {
            sum as f64 / count as f64
        }
    }

    pub fn min_basis_size(&self) -> Option<usize> {
        self.basis_size_histogram.keys().next().copied()
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("adaptive stepping needs a tableau with embedded weights ({0} has none)")]
    NoEmbeddedMethod(String),
    #[error("step size underflow at t = {t}: h = {h:e}")]
    StepsizeUnderflow { t: f64, h: f64, stats: Box<RunStats> },
    #[error("exceeded {max_steps} steps at t = {t}")]
    MaxStepsExceeded { t: f64, max_steps: usize, stats: Box<RunStats> },
    #[error("basis residual not met within m_max = {m_max} at t = {t}")]
    BasisLimit { t: f64, m_max: usize, stats: Box<RunStats> },
    #[error("step failed at t = {t}: {source}")]
    StepFailed {
        t: f64,
        y: DVector<f64>,
        stats: Box<RunStats>,
        #[source]
        source: StepError,
    },
}

/// Upper bound on the number of fixed steps.
const MAX_FIXED_STEPS: usize = 100_000_000;

/// Integrates over the problem's time span with constant step `h`; the last
/// step is shortened to end exactly at `t_F`. A residual strategy that hits
/// `m_max` aborts the run with [`RunError::BasisLimit`].
pub fn integrate_fixed(
    problem: &dyn OdeProblem,
    tableau: &MethodTableau,
    integrator: Integrator,
    strategy: &BasisStrategy,
    h: f64,
) -> Result<(DVector<f64>, RunStats), RunError> {
    strategy.validate(tableau.order, integrator)?;
    if matches!(strategy.kind, BasisKind::TolMatched) {
        return Err(ConfigError::Strategy("a tolerance-matched basis needs an adaptive run".into()).into());
    }
    let (t0, tf) = problem.t_span();
    if !(h > 0.0) || !h.is_finite() {
        return Err(RunError::StepFailed {
            t: t0,
            y: problem.initial_state(),
            stats: Box::default(),
            source: StepError::InvalidStepsize(h),
        });
    }
    let res_tol = match strategy.kind {
        BasisKind::Residual(tol) => Some(tol),
        _ => None,
    };
    let ratio = (tf - t0) / h;
    let n_steps = ((ratio - 1e-9 * ratio.max(1.0)).ceil() as usize).max(1);
    if n_steps > MAX_FIXED_STEPS {
        return Err(RunError::MaxStepsExceeded { t: t0, max_steps: MAX_FIXED_STEPS, stats: Box::default() });
    }
    run_autonomous(problem, |sys, y0| {
        let mut stats = RunStats::default();
        let start = Instant::now();
        let mut y = y0;
        for i in 0..n_steps {
            let t = t0 + i as f64 * h;
            let h_i = if i + 1 == n_steps { tf - t } else { h };
            match attempt(sys, tableau, integrator, strategy, res_tol, &y, h_i, &mut stats) {
                Ok(Attempt::Done(rec)) => {
                    y = rec.record.y_next;
                    stats.steps_accepted += 1;
                }
                Ok(Attempt::MaxSize) => {
                    // A fixed step cannot be retried with a smaller h.
                    stats.wall_time = start.elapsed().as_secs_f64();
                    return Err(RunError::BasisLimit { t, m_max: strategy.m_max, stats: Box::new(stats) });
                }
                Err(source) => {
                    stats.wall_time = start.elapsed().as_secs_f64();
                    return Err(RunError::StepFailed { t, y, stats: Box::new(stats), source });
                }
            }
        }
        stats.wall_time = start.elapsed().as_secs_f64();
        Ok((y, stats))
    })
}

/// Integrates with the elementary error controller. Steps whose adaptive
/// basis reaches `m_max`, or whose stage solves fail, are rejected and
/// retried with half the step.
pub fn integrate_adaptive(
    problem: &dyn OdeProblem,
    tableau: &MethodTableau,
    integrator: Integrator,
    strategy: &BasisStrategy,
    cfg: &ControllerConfig,
) -> Result<(DVector<f64>, RunStats), RunError> {
    strategy.validate(tableau.order, integrator)?;
    cfg.validate()?;
    if tableau.b_hat.is_none() {
        return Err(RunError::NoEmbeddedMethod(tableau.name.clone()));
    }
    let res_tol = match strategy.kind {
        BasisKind::Fixed(_) => None,
        BasisKind::Residual(tol) => Some(tol),
        BasisKind::TolMatched => Some(cfg.rel_tol),
    };
    let (t0, tf) = problem.t_span();
    let span = tf - t0;
    let h_max = cfg.h_max.unwrap_or(span);
    run_autonomous(problem, |sys, y0| {
        let mut stats = RunStats::default();
        let start = Instant::now();
        let mut y = y0;
        let mut t = t0;
        let mut h = cfg.h_init.unwrap_or(1e-3 * span).min(h_max);
        let done = |t: f64| tf - t <= 1e-12 * span.abs().max(1.0);
        let underflow = |mut stats: RunStats, t: f64, h: f64| {
            stats.wall_time = start.elapsed().as_secs_f64();
            RunError::StepsizeUnderflow { t, h, stats: Box::new(stats) }
        };
        while !done(t) {
            if stats.steps() >= cfg.max_steps {
                stats.wall_time = start.elapsed().as_secs_f64();
                return Err(RunError::MaxStepsExceeded { t, max_steps: cfg.max_steps, stats: Box::new(stats) });
            }
            let last = h >= tf - t;
            let h_try = if last { tf - t } else { h };
            let outcome = attempt(sys, tableau, integrator, strategy, res_tol, &y, h_try, &mut stats);
            let rec = match outcome {
                Ok(Attempt::Done(rec)) => rec,
                Ok(Attempt::MaxSize)
                | Err(StepError::Linalg(_))
                | Err(StepError::Problem(ProblemError::NonFiniteState(_))) => {
                    stats.steps_rejected += 1;
                    h = 0.5 * h_try;
                    if h < cfg.h_min {
                        return Err(underflow(stats, t, h));
                    }
                    continue;
                }
                Err(source) => {
                    stats.wall_time = start.elapsed().as_secs_f64();
                    return Err(RunError::StepFailed { t, y, stats: Box::new(stats), source });
                }
            };
            let err = rec.record.err_est(cfg.abs_tol, cfg.rel_tol).expect("embedded weights checked");
            let (accept, h_new) = match next_stepsize(h_try, err, tableau.order_hat, cfg) {
                Ok(v) => v,
                Err(u) => {
                    stats.steps_rejected += 1;
                    return Err(underflow(stats, t, u.h_new));
                }
            };
            if accept {
                stats.steps_accepted += 1;
                if let (Some(tol), Some(r)) = (res_tol, rec.first_residual) {
                    stats.max_residual_ratio = stats.max_residual_ratio.max(r / tol);
                }
                t = if last { tf } else { t + h_try };
                y = rec.record.y_next;
            } else {
                stats.steps_rejected += 1;
            }
            h = h_new.min(h_max);
        }
        stats.wall_time = start.elapsed().as_secs_f64();
        Ok((y, stats))
    })
}

/// Runs `body` on the autonomous form of `problem` and strips the time
/// component from the result again.
fn run_autonomous<F>(problem: &dyn OdeProblem, body: F) -> Result<(DVector<f64>, RunStats), RunError>
where
    F: FnOnce(&dyn OdeProblem, DVector<f64>) -> Result<(DVector<f64>, RunStats), RunError>,
{
    if problem.is_autonomous() {
        return body(problem, problem.initial_state());
    }
    let n = problem.dim();
    let aug = autonomize(problem);
    let strip = |y: DVector<f64>| y.rows(0, n).into_owned();
    match body(&aug, aug.initial_state()) {
        Ok((y, stats)) => Ok((strip(y), stats)),
        Err(RunError::StepFailed { t, y, stats, source }) => {
            Err(RunError::StepFailed { t, y: strip(y), stats, source })
        }
        Err(e) => Err(e),
    }
}

struct Accepted {
    record: StepRecord,
    first_residual: Option<f64>,
}

enum Attempt {
    Done(Accepted),
    MaxSize,
}

impl Attempt {
    fn done(record: StepRecord, first_residual: Option<f64>) -> Self {
        Attempt::Done(Accepted { record, first_residual })
    }
}

/// Builds the basis at `y` and takes one step of size `h`.
#[allow(clippy::too_many_arguments)]
fn attempt(
    sys: &dyn OdeProblem,
    tableau: &MethodTableau,
    integrator: Integrator,
    strategy: &BasisStrategy,
    res_tol: Option<f64>,
    y: &DVector<f64>,
    h: f64,
    stats: &mut RunStats,
) -> Result<Attempt, StepError> {
    let t = sys.t_span().0;
    let f1 = sys.rhs(t, y)?;
    stats.rhs_evals += 1;
    if f1.iter().all(|&x| x == 0.0) {
        // Equilibrium: every stage vector vanishes.
        let mut rec = equilibrium_record(tableau, y);
        rec.rhs_evals = 0;
        return Ok(Attempt::done(rec, Some(0.0)));
    }
    let jac = linearize(sys, t, y)?;
    let m_min = strategy.resolved_m_min(tableau.order).min(y.len());
    let m_max = strategy.m_max.min(y.len()).max(m_min);
    let opts = res_tol.map(|res_tol| AdaptiveOptions { h, gamma: tableau.gamma_diag, res_tol, m_min, m_max });
    let fixed_m = match strategy.kind {
        BasisKind::Fixed(m) => m.min(y.len()),
        _ => 0,
    };

    let result = match integrator {
        Integrator::Rok => {
            let basis = match &opts {
                Some(o) => arnoldi_adaptive(&jac, &f1, o)?,
                None => arnoldi(&jac, &f1, fixed_m)?,
            };
            *stats.basis_size_histogram.entry(basis.dim()).or_default() += 1;
            if basis.termination() == Termination::MaxSizeReached {
                stats.max_size_hits += 1;
                Ok(Attempt::MaxSize)
            } else {
                let first = basis.first_residual();
                rok_step_seeded(sys, tableau, &basis, y, h, f1).map(|rec| Attempt::done(rec, first))
            }
        }
        Integrator::Borok => {
            let built = match &opts {
                Some(o) => lanczos_biorth_adaptive(&jac, &f1, o),
                None => lanczos_biorth(&jac, &f1, fixed_m),
            };
            let mut basis = match built {
                Ok(b) => b,
                Err(KrylovError::SeriousBreakdown { basis }) => {
                    stats.serious_breakdowns += 1;
                    if opts.is_some() {
                        // The residual test was not met before the breakdown.
                        *stats.basis_size_histogram.entry(basis.dim()).or_default() += 1;
                        stats.matvecs += jac.matvecs();
                        stats.tmatvecs += jac.tmatvecs();
                        return Ok(Attempt::MaxSize);
                    }
                    *basis
                }
                Err(e) => return Err(e.into()),
            };
            *stats.basis_size_histogram.entry(basis.dim()).or_default() += 1;
            stats.max_biorthogonality_defect = stats.max_biorthogonality_defect.max(basis.biorthogonality_defect());
            if basis.termination() == Termination::MaxSizeReached {
                stats.max_size_hits += 1;
                Ok(Attempt::MaxSize)
            } else {
                let first = basis.first_residual();
                let rec = if strategy.extension {
                    borok_step_extended(sys, tableau, &mut basis, &jac, y, h, Some(f1), 1.0)
                } else {
                    borok_step_seeded(sys, tableau, &basis, y, h, f1)
                };
                rec.map(|rec| {
                    stats.extension_skips += rec.extension_skips;
                    Attempt::done(rec, first)
                })
            }
        }
    };
    stats.matvecs += jac.matvecs();
    stats.tmatvecs += jac.tmatvecs();
    if let Ok(Attempt::Done(a)) = &result {
        stats.rhs_evals += a.record.rhs_evals;
    }
    result
}

fn equilibrium_record(tableau: &MethodTableau, y: &DVector<f64>) -> StepRecord {
    StepRecord {
        y_next: y.clone(),
        err_vec: tableau.b_hat.as_ref().map(|_| DVector::zeros(y.len())),
        basis_size: 0,
        workspace: StageWorkspace::default(),
        rhs_evals: 0,
        matvecs: 0,
        tmatvecs: 0,
        extension_skips: 0,
    }
}
