//! Convergence, work-precision and plain integration sweeps.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use borok::stepcontrol::{integrate_adaptive, integrate_fixed, RunError, RunStats};
use nalgebra::DVector;
use thiserror::Error;

use crate::config::ExperimentConfig;
use crate::label::Configuration;
use crate::reference::{load_checked, load_or_generate, relative_error, Reference, ReferenceError};

/// Environment variable bounding the number of concurrent runs.
pub const PARALLEL_ENV: &str = "BOROK_NUM_PARALLEL";

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("no step sizes in [sweep]")]
    NoStepSizes,
    #[error("no tolerances in [sweep]")]
    NoTolerances,
    #[error("no configuration matches the label filter")]
    NoConfigurations,
    #[error("[reference] needs h_ref to generate a reference for a tolerance sweep")]
    NoReferenceStep,
    #[error(transparent)]
    Reference(#[from] ReferenceError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    pub parallel: usize,
    /// Print one line per finished run to standard error.
    pub log: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { parallel: 1, log: false }
    }
}

impl RunOptions {
    /// Parallelism from [`PARALLEL_ENV`] (default 1), logging on.
    pub fn from_env() -> Self {
        let parallel =
            std::env::var(PARALLEL_ENV).ok().and_then(|v| v.trim().parse().ok()).filter(|&n| n > 0).unwrap_or(1);
        Self { parallel, log: true }
    }
}

/// Short machine-readable outcome of one run.
pub fn status(result: &Result<(DVector<f64>, RunStats), RunError>) -> &'static str {
    match result {
        Ok(_) => "ok",
        Err(RunError::Config(_)) => "config-error",
        Err(RunError::NoEmbeddedMethod(_)) => "no-embedded-method",
        Err(RunError::StepsizeUnderflow { .. }) => "stepsize-underflow",
        Err(RunError::MaxStepsExceeded { .. }) => "max-steps",
        Err(RunError::BasisLimit { .. }) => "basis-limit",
        Err(RunError::StepFailed { .. }) => "step-failed",
    }
}

/// Statistics of a run, also for failed runs that carry them.
pub fn stats_of(result: &Result<(DVector<f64>, RunStats), RunError>) -> RunStats {
    match result {
        Ok((_, s)) => s.clone(),
        Err(RunError::StepsizeUnderflow { stats, .. })
        | Err(RunError::MaxStepsExceeded { stats, .. })
        | Err(RunError::BasisLimit { stats, .. })
        | Err(RunError::StepFailed { stats, .. }) => (**stats).clone(),
        Err(_) => RunStats::default(),
    }
}

/// One integration in a sweep.
#[derive(Debug)]
pub struct RunOutcome {
    pub label: String,
    pub configuration: Configuration,
    /// Step size for fixed-step sweeps, tolerance for adaptive ones.
    pub value: f64,
    pub result: Result<(DVector<f64>, RunStats), RunError>,
}

impl RunOutcome {
    pub fn ok(&self) -> bool {
        self.result.is_ok()
    }

    pub fn stats(&self) -> RunStats {
        stats_of(&self.result)
    }

    pub fn error_against(&self, reference: Option<&Reference>) -> Option<f64> {
        match (&self.result, reference) {
            (Ok((y, _)), Some(r)) => Some(relative_error(y, &r.y)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub label: String,
    pub h: f64,
    pub global_error: Option<f64>,
    /// `log(e_prev / e) / log(h_prev / h)` against the previous step size.
    pub observed_order: Option<f64>,
    pub steps: usize,
    pub rhs_evals: usize,
    pub matvecs: usize,
    pub tmatvecs: usize,
    pub status: String,
    pub wall_time: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorkPrecisionRow {
    pub label: String,
    pub tol: f64,
    pub final_error: Option<f64>,
    pub steps_accepted: usize,
    pub steps_rejected: usize,
    pub rhs_evals: usize,
    pub matvecs: usize,
    pub tmatvecs: usize,
    pub status: String,
    pub wall_time: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntegrateRow {
    pub label: String,
    /// `h` for fixed-step runs, `tol` for adaptive ones.
    pub mode: &'static str,
    pub value: f64,
    pub steps_accepted: usize,
    pub steps_rejected: usize,
    pub rhs_evals: usize,
    pub matvecs: usize,
    pub tmatvecs: usize,
    pub mean_basis_size: f64,
    pub final_norm: Option<f64>,
    pub final_error: Option<f64>,
    pub status: String,
    pub wall_time: f64,
}

/// Fixed-step runs of every configuration over the step-size ladder,
/// ordered by configuration then step size.
pub fn run_fixed_sweep(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Vec<RunOutcome>, ExperimentError> {
    if cfg.step_sizes.is_empty() {
        return Err(ExperimentError::NoStepSizes);
    }
    sweep(cfg, opts, &cfg.step_sizes, "h", |problem, c, h| {
        integrate_fixed(problem, &cfg.tableau, c.integrator, &c.strategy, h)
    })
}

/// Adaptive runs of every configuration over the tolerance sweep.
pub fn run_adaptive_sweep(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Vec<RunOutcome>, ExperimentError> {
    if cfg.tolerances.is_empty() {
        return Err(ExperimentError::NoTolerances);
    }
    sweep(cfg, opts, &cfg.tolerances, "tol", |problem, c, tol| {
        integrate_adaptive(problem, &cfg.tableau, c.integrator, &c.strategy, &cfg.controller.controller(tol))
    })
}

fn sweep<F>(
    cfg: &ExperimentConfig,
    opts: &RunOptions,
    values: &[f64],
    what: &str,
    run: F,
) -> Result<Vec<RunOutcome>, ExperimentError>
where
    F: Fn(&dyn borok::problem::OdeProblem, &Configuration, f64) -> Result<(DVector<f64>, RunStats), RunError> + Sync,
{
    if cfg.configurations.is_empty() {
        return Err(ExperimentError::NoConfigurations);
    }
    let problem = cfg.problem.build().map_err(|e| ReferenceError::Unavailable(e.to_string()))?;
    let jobs: Vec<(&String, &Configuration, f64)> =
        cfg.configurations.iter().flat_map(|(l, c)| values.iter().map(move |&v| (l, c, v))).collect();
    let outcomes = run_ordered(&jobs, opts.parallel, |&(label, c, value)| {
        let result = run(problem.as_ref(), c, value);
        if opts.log {
            let s = stats_of(&result);
            eprintln!(
                "{} {label} {what}={value:e}: {} accepted={} rejected={} matvecs={} {:.3}s",
                cfg.problem.kind(),
                status(&result),
                s.steps_accepted,
                s.steps_rejected,
                s.matvecs,
                s.wall_time
            );
        }
        RunOutcome { label: label.clone(), configuration: *c, value, result }
    });
    Ok(outcomes)
}

/// Runs `f` over `jobs` on up to `threads` threads, keeping job order.
pub fn run_ordered<J, T, F>(jobs: &[J], threads: usize, f: F) -> Vec<T>
where
    J: Sync,
    T: Send,
    F: Fn(&J) -> T + Sync,
{
    let threads = threads.clamp(1, jobs.len().max(1));
    if threads == 1 {
        return jobs.iter().map(&f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<T>>> = Mutex::new((0..jobs.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..threads {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(job) = jobs.get(i) else { break };
                let out = f(job);
                slots.lock().expect("no panics while holding the lock")[i] = Some(out);
            });
        }
    });
    slots.into_inner().expect("workers finished").into_iter().map(|s| s.expect("every job ran")).collect()
}

/// Reference for `cfg`, generated at `h_ref` (or `default_h`) when no file exists.
pub fn reference_for(cfg: &ExperimentConfig, default_h: Option<f64>) -> Result<Reference, ExperimentError> {
    let file = cfg.reference.file.as_deref();
    let h_ref = cfg.reference.h_ref.or(default_h);
    match h_ref {
        Some(h) => Ok(load_or_generate(&cfg.problem, &cfg.tableau, file, h)?),
        None => match file {
            Some(path) if path.exists() => Ok(load_checked(&cfg.problem, path)?),
            _ => Err(ExperimentError::NoReferenceStep),
        },
    }
}

fn has_reference(cfg: &ExperimentConfig) -> bool {
    cfg.reference.file.is_some() || cfg.reference.h_ref.is_some()
}

/// Fixed-step convergence table against a reference at (by default) the
/// smallest step over 16.
pub fn run_convergence(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Vec<ConvergenceRow>, ExperimentError> {
    if cfg.step_sizes.is_empty() {
        return Err(ExperimentError::NoStepSizes);
    }
    let h_min = cfg.step_sizes.iter().copied().fold(f64::INFINITY, f64::min);
    let reference = reference_for(cfg, Some(h_min / 16.0))?;
    let outcomes = run_fixed_sweep(cfg, opts)?;
    Ok(convergence_rows(&outcomes, &reference))
}

pub fn convergence_rows(outcomes: &[RunOutcome], reference: &Reference) -> Vec<ConvergenceRow> {
    let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(outcomes.len());
    for o in outcomes {
        let s = o.stats();
        let err = o.error_against(Some(reference));
        let observed_order = match (rows.last(), err) {
            (Some(prev), Some(e)) if prev.label == o.label => prev.global_error.and_then(|pe| {
                let order = (pe / e).ln() / (prev.h / o.value).ln();
                order.is_finite().then_some(order)
            }),
            _ => None,
        };
        rows.push(ConvergenceRow {
            label: o.label.clone(),
            h: o.value,
            global_error: err,
            observed_order,
            steps: s.steps(),
            rhs_evals: s.rhs_evals,
            matvecs: s.matvecs,
            tmatvecs: s.tmatvecs,
            status: status(&o.result).to_string(),
            wall_time: s.wall_time,
        });
    }
    rows
}

/// Adaptive runs over the tolerance sweep; final errors are filled in when
/// the configuration names a reference.
pub fn run_work_precision(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Vec<WorkPrecisionRow>, ExperimentError> {
    if cfg.tolerances.is_empty() {
        return Err(ExperimentError::NoTolerances);
    }
    let reference = if has_reference(cfg) { Some(reference_for(cfg, None)?) } else { None };
    let outcomes = run_adaptive_sweep(cfg, opts)?;
    Ok(outcomes
        .iter()
        .map(|o| {
            let s = o.stats();
            WorkPrecisionRow {
                label: o.label.clone(),
                tol: o.value,
                final_error: o.error_against(reference.as_ref()),
                steps_accepted: s.steps_accepted,
                steps_rejected: s.steps_rejected,
                rhs_evals: s.rhs_evals,
                matvecs: s.matvecs,
                tmatvecs: s.tmatvecs,
                status: status(&o.result).to_string(),
                wall_time: s.wall_time,
            }
        })
        .collect())
}

/// Every configuration at every sweep value: fixed-step runs over the step
/// sizes, then adaptive runs over the tolerances.
pub fn run_integrate(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Vec<IntegrateRow>, ExperimentError> {
    let reference = if has_reference(cfg) {
        let h_min = cfg.step_sizes.iter().copied().fold(f64::INFINITY, f64::min);
        Some(reference_for(cfg, h_min.is_finite().then_some(h_min / 16.0))?)
    } else {
        None
    };
    let mut outcomes = Vec::new();
    if !cfg.step_sizes.is_empty() {
        outcomes.extend(run_fixed_sweep(cfg, opts)?.into_iter().map(|o| ("h", o)));
    }
    if !cfg.tolerances.is_empty() {
        outcomes.extend(run_adaptive_sweep(cfg, opts)?.into_iter().map(|o| ("tol", o)));
    }
    Ok(outcomes
        .iter()
        .map(|(mode, o)| {
            let s = o.stats();
            IntegrateRow {
                label: o.label.clone(),
                mode,
                value: o.value,
                steps_accepted: s.steps_accepted,
                steps_rejected: s.steps_rejected,
                rhs_evals: s.rhs_evals,
                matvecs: s.matvecs,
                tmatvecs: s.tmatvecs,
                mean_basis_size: s.mean_basis_size(),
                final_norm: o.result.as_ref().ok().map(|(y, _)| y.norm()),
                final_error: o.error_against(reference.as_ref()),
                status: status(&o.result).to_string(),
                wall_time: s.wall_time,
            }
        })
        .collect())
}
