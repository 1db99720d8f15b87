//! Reference solutions.
//!
//! File layout: one JSON header line (`n`, `t_final`, `problem_hash`,
//! `h_ref`), a newline, then `n` little-endian `f64` values.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use borok::integrator::MethodTableau;
use borok::stepcontrol::{integrate_fixed, BasisStrategy, Integrator, RunError};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::problems::ProblemSpec;

/// Residual tolerance of the basis used for reference runs.
pub const REFERENCE_RES_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceHeader {
    pub problem: String,
    pub n: usize,
    pub t_final: f64,
    pub problem_hash: String,
    pub h_ref: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reference {
    pub header: ReferenceHeader,
    pub y: DVector<f64>,
}

#[derive(Debug, Error)]
pub enum ReferenceError {
    #[error("reference file {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("reference file {path} is malformed: {message}")]
    Format { path: PathBuf, message: String },
    #[error("reference file {path} belongs to a different problem (hash {found}, expected {expected})")]
    HashMismatch { path: PathBuf, expected: String, found: String },
    #[error("reference unavailable: {0}")]
    Unavailable(String),
}

impl Reference {
    pub fn write(&self, path: &Path) -> Result<(), ReferenceError> {
        let io = |source| ReferenceError::Io { path: path.to_path_buf(), source };
        let mut buf = serde_json::to_vec(&self.header).expect("header serializes");
        buf.push(b'\n');
        buf.reserve(8 * self.y.len());
        for v in self.y.iter() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        let mut file = fs::File::create(path).map_err(io)?;
        file.write_all(&buf).map_err(io)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self, ReferenceError> {
        let bytes = fs::read(path).map_err(|source| ReferenceError::Io { path: path.to_path_buf(), source })?;
        let bad = |message: String| ReferenceError::Format { path: path.to_path_buf(), message };
        let nl = bytes.iter().position(|&b| b == b'\n').ok_or_else(|| bad("no header line".into()))?;
        let header: ReferenceHeader = serde_json::from_slice(&bytes[..nl]).map_err(|e| bad(e.to_string()))?;
        let body = &bytes[nl + 1..];
        if body.len() != 8 * header.n {
            return Err(bad(format!("expected {} values, found {} bytes", header.n, body.len())));
        }
        let y = DVector::from_iterator(
            header.n,
            body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk"))),
        );
        Ok(Self { header, y })
    }
}

/// Fixed-step BOROK run with an unrestricted residual-adaptive basis.
pub fn generate_reference(
    spec: &ProblemSpec,
    tableau: &MethodTableau,
    h_ref: f64,
) -> Result<Reference, ReferenceError> {
    let problem = spec.build().map_err(|e| ReferenceError::Unavailable(e.to_string()))?;
    let strategy = BasisStrategy::residual(REFERENCE_RES_TOL).with_m_max(problem.dim());
    let (y, _) = integrate_fixed(problem.as_ref(), tableau, Integrator::Borok, &strategy, h_ref)
        .map_err(|e: RunError| ReferenceError::Unavailable(e.to_string()))?;
    Ok(Reference {
        header: ReferenceHeader {
            problem: spec.kind().to_string(),
            n: y.len(),
            t_final: spec.t_span().1,
            problem_hash: spec.hash(),
            h_ref,
        },
        y,
    })
}

/// Reads a stored reference and checks that it belongs to `spec`.
pub fn load_checked(spec: &ProblemSpec, path: &Path) -> Result<Reference, ReferenceError> {
    let r = Reference::read(path)?;
    let expected = spec.hash();
    if r.header.problem_hash != expected {
        return Err(ReferenceError::HashMismatch { path: path.to_path_buf(), expected, found: r.header.problem_hash });
    }
    Ok(r)
}

/// Reads `file` when it exists, otherwise generates the reference and, if a
/// path was given, stores it there.
pub fn load_or_generate(
    spec: &ProblemSpec,
    tableau: &MethodTableau,
    file: Option<&Path>,
    h_ref: f64,
) -> Result<Reference, ReferenceError> {
    if let Some(path) = file.filter(|p| p.exists()) {
        return load_checked(spec, path);
    }
    let r = generate_reference(spec, tableau, h_ref)?;
    if let Some(path) = file {
        r.write(path)?;
    }
    Ok(r)
}

/// `||y - y_ref|| / ||y_ref||`, or the absolute error when the reference is zero.
pub fn relative_error(y: &DVector<f64>, reference: &DVector<f64>) -> f64 {
    let diff = (y - reference).norm();
    let scale = reference.norm();
    if scale > 0.0 {
        diff / scale
    } else {
        diff
    }
}
