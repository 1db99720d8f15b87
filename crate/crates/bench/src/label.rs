//! Configuration labels.
//!
//! A label names an integrator and a basis strategy: `M=16` is ROK with 16
//! basis vectors, `R=1e-8` grows the basis until the first-stage residual is
//! below `1e-8`, `R=tol` ties that tolerance to the run tolerance. A leading
//! `L` selects BOROK, a trailing ` ext` turns on basis extension (BOROK only).

use std::fmt;
use std::str::FromStr;

use borok::stepcontrol::{BasisKind, BasisStrategy, Integrator};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("bad configuration label {label:?}: {reason}")]
pub struct LabelError {
    pub label: String,
    pub reason: String,
}

/// An integrator and basis strategy, as named by a label.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Configuration {
    pub integrator: Integrator,
    pub strategy: BasisStrategy,
}

impl Configuration {
    pub fn new(integrator: Integrator, strategy: BasisStrategy) -> Self {
        Self { integrator, strategy }
    }

    /// Canonical label text.
    pub fn label(&self) -> String {
        self.to_string()
    }

    pub fn is_adaptive_basis(&self) -> bool {
        !matches!(self.strategy.kind, BasisKind::Fixed(_))
    }
}

impl fmt::Display for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.integrator == Integrator::Borok {
            f.write_str("L")?;
        }
        match self.strategy.kind {
            BasisKind::Fixed(m) => write!(f, "M={m}")?,
            BasisKind::Residual(tol) => write!(f, "R={tol:e}")?,
            BasisKind::TolMatched => f.write_str("R=tol")?,
        }
        if self.strategy.extension {
            f.write_str(" ext")?;
        }
        Ok(())
    }
}

impl FromStr for Configuration {
    type Err = LabelError;

    fn from_str(label: &str) -> Result<Self, LabelError> {
        let err = |reason: &str| LabelError { label: label.to_string(), reason: reason.to_string() };
        let mut words = label.split_whitespace();
        let head = words.next().ok_or_else(|| err("empty label"))?;
        let extension = match words.next() {
            None => false,
            Some("ext") => true,
            Some(_) => return Err(err("only the suffix `ext` may follow the strategy")),
        };
        if words.next().is_some() {
            return Err(err("trailing text after `ext`"));
        }
        let (integrator, rest) = match head.strip_prefix('L') {
            Some(rest) => (Integrator::Borok, rest),
            None => (Integrator::Rok, head),
        };
        let strategy = if let Some(m) = rest.strip_prefix("M=") {
            let m: usize = m.parse().map_err(|_| err("M= needs a positive integer"))?;
            if m == 0 {
                return Err(err("M= needs a positive integer"));
            }
            BasisStrategy::fixed(m)
        } else if let Some(r) = rest.strip_prefix("R=") {
            if r == "tol" {
                BasisStrategy::tol_matched()
            } else {
                let tol: f64 = r.parse().map_err(|_| err("R= needs a number or `tol`"))?;
                if !(tol > 0.0 && tol.is_finite()) {
                    return Err(err("R= needs a positive tolerance"));
                }
                BasisStrategy::residual(tol)
            }
        } else {
            return Err(err("expected M=<size> or R=<tolerance>, optionally prefixed by L"));
        };
        if extension && integrator == Integrator::Rok {
            return Err(err("`ext` needs the biorthogonal basis (L prefix)"));
        }
        Ok(Self { integrator, strategy: strategy.with_extension(extension) })
    }
}
