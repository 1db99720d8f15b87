//! Integration drivers: fixed-step and adaptive loops, the error norm,
//! the step-size controller and the basis-size strategies.

mod driver;

pub use driver::{integrate_adaptive, integrate_fixed, RunError, RunStats};

use std::fmt;

use nalgebra::DVector;
use thiserror::Error;

/// Which Krylov basis the steps are built on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Integrator {
    /// Orthonormal Arnoldi basis.
    Rok,
    /// Biorthogonal Lanczos basis.
    Borok,
}

impl fmt::Display for Integrator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Integrator::Rok => "rok",
            Integrator::Borok => "borok",
        })
    }
}

/// How the basis size is chosen each step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BasisKind {
    /// Always `m` vectors.
    Fixed(usize),
    /// Grow until the first-stage residual is at most the given tolerance.
    Residual(f64),
    /// As `Residual`, with the tolerance equal to the run's relative tolerance.
    TolMatched,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BasisStrategy {
    pub kind: BasisKind,
    /// Extend the basis with the stage right-hand sides (biorthogonal only).
    pub extension: bool,
    /// Smallest size at which the residual test is applied; defaults to the method order.
    pub m_min: Option<usize>,
    pub m_max: usize,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("invalid basis strategy: {0}")]
    Strategy(String),
    #[error("invalid controller setting: {0}")]
    Controller(String),
}

impl BasisStrategy {
    pub const DEFAULT_M_MAX: usize = 100;

    pub fn fixed(m: usize) -> Self {
        Self { kind: BasisKind::Fixed(m), extension: false, m_min: None, m_max: Self::DEFAULT_M_MAX }
    }

    pub fn residual(res_tol: f64) -> Self {
        Self { kind: BasisKind::Residual(res_tol), extension: false, m_min: None, m_max: Self::DEFAULT_M_MAX }
    }

    pub fn tol_matched() -> Self {
        Self { kind: BasisKind::TolMatched, extension: false, m_min: None, m_max: Self::DEFAULT_M_MAX }
    }

    pub fn with_extension(mut self, on: bool) -> Self {
        self.extension = on;
        self
    }

    pub fn with_m_min(mut self, m_min: usize) -> Self {
        self.m_min = Some(m_min);
        self
    }

    pub fn with_m_max(mut self, m_max: usize) -> Self {
        self.m_max = m_max;
        self
    }

    /// `m_min`, falling back to the method order.
    pub fn resolved_m_min(&self, order: usize) -> usize {
        self.m_min.unwrap_or(order).max(1)
    }

    pub fn validate(&self, order: usize, integrator: Integrator) -> Result<(), ConfigError> {
        let m_min = self.resolved_m_min(order);
        if self.m_max < m_min {
            return Err(ConfigError::Strategy(format!("m_max = {} is below m_min = {m_min}", self.m_max)));
        }
        match self.kind {
            BasisKind::Fixed(m) if m < m_min => {
                return Err(ConfigError::Strategy(format!("fixed size {m} is below m_min = {m_min}")))
            }
            BasisKind::Residual(tol) if !(tol > 0.0) => {
                return Err(ConfigError::Strategy(format!("residual tolerance must be positive, got {tol}")))
            }
            _ => {}
        }
        if self.extension && integrator == Integrator::Rok {
            return Err(ConfigError::Strategy("extension needs the biorthogonal basis".into()));
        }
        Ok(())
    }
}

/// Elementary step-size controller settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerConfig {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub safety: f64,
    pub fac_min: f64,
    pub fac_max: f64,
    /// Defaults to `1e-3 (t_F - t_0)`.
    pub h_init: Option<f64>,
    pub h_min: f64,
    /// Defaults to the length of the interval.
    pub h_max: Option<f64>,
    /// Limit on accepted plus rejected steps.
    pub max_steps: usize,
}

impl ControllerConfig {
    pub fn new(abs_tol: f64, rel_tol: f64) -> Self {
        Self {
            abs_tol,
            rel_tol,
            safety: 0.9,
            fac_min: 0.2,
            fac_max: 5.0,
            h_init: None,
            h_min: 1e-14,
            h_max: None,
            max_steps: 1_000_000,
        }
    }

    /// Same absolute and relative tolerance.
    pub fn with_tol(tol: f64) -> Self {
        Self::new(tol, tol)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Controller(m));
        if !(self.abs_tol > 0.0 && self.rel_tol >= 0.0) {
            return bad(format!("tolerances must be positive (abs {}, rel {})", self.abs_tol, self.rel_tol));
        }
        if !(self.safety > 0.0 && self.safety <= 1.0) {
            return bad(format!("safety factor {} outside (0, 1]", self.safety));
        }
        if !(self.fac_min < 1.0 && 1.0 < self.fac_max && self.fac_min > 0.0) {
            return bad(format!("need 0 < fac_min < 1 < fac_max, got {} and {}", self.fac_min, self.fac_max));
        }
        if !(self.h_min > 0.0) {
            return bad("h_min must be positive".into());
        }
        if let Some(h) = self.h_init {
            if !(h >= self.h_min) || self.h_max.is_some_and(|hm| h > hm) {
                return bad(format!("h_init = {h} outside [h_min, h_max]"));
            }
        }
        Ok(())
    }
}

/// Weighted RMS norm `sqrt(mean((err_i / (abs_tol + rel_tol |y_i|))^2))`.
/// Non-finite input gives `+inf`.
pub fn error_norm(y_new: &DVector<f64>, err_vec: &DVector<f64>, cfg: &ControllerConfig) -> f64 {
    error_norm_tol(y_new, err_vec, cfg.abs_tol, cfg.rel_tol)
}

pub(crate) fn error_norm_tol(y_new: &DVector<f64>, err_vec: &DVector<f64>, abs_tol: f64, rel_tol: f64) -> f64 {
    let n = err_vec.len();
    if n == 0 {
        return 0.0;
    }
    let sum: f64 = err_vec
        .iter()
        .zip(y_new.iter())
        .map(|(e, y)| {
            let q = e / (abs_tol + rel_tol * y.abs());
            q * q
        })
        .sum();
    let norm = (sum / n as f64).sqrt();
    if norm.is_finite() {
        norm
    } else {
        f64::INFINITY
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
#[error("step size {h_new:e} fell below the minimum {h_min:e}")]
pub struct StepsizeUnderflow {
    pub h_new: f64,
    pub h_min: f64,
}

/// Elementary controller: accept when `err <= 1`, propose
/// `h clamp(safety err^{-1/(p_hat + 1)}, fac_min, fac_max)` within `[h_min, h_max]`.
pub fn next_stepsize(h: f64, err: f64, p_hat: usize, cfg: &ControllerConfig) -> Result<(bool, f64), StepsizeUnderflow> {
    let accept = err <= 1.0;
    let factor = if err == 0.0 {
        cfg.fac_max
    } else if !err.is_finite() {
        cfg.fac_min
    } else {
        (cfg.safety * err.powf(-1.0 / (p_hat as f64 + 1.0))).clamp(cfg.fac_min, cfg.fac_max)
    };
    let mut h_new = h * factor;
    if !accept && h_new < cfg.h_min {
        return Err(StepsizeUnderflow { h_new, h_min: cfg.h_min });
    }
    if let Some(h_max) = cfg.h_max {
        h_new = h_new.min(h_max);
    }
    Ok((accept, h_new.max(cfg.h_min)))
}
