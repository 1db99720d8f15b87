//! CSV tables. Floats use Rust's shortest round-trip scientific notation,
//! missing values are empty fields, `wall_time` is always the last column.

use std::io::Write;

use crate::experiment::{ConvergenceRow, IntegrateRow, WorkPrecisionRow};

pub const CONVERGENCE_HEADER: [&str; 10] = [
    "label",
    "h",
    "global_error",
    "observed_order",
    "steps",
    "rhs_evals",
    "matvecs",
    "tmatvecs",
    "status",
    "wall_time",
];

pub const WORK_PRECISION_HEADER: [&str; 10] = [
    "label",
    "tol",
    "final_error",
    "steps_accepted",
    "steps_rejected",
    "rhs_evals",
    "matvecs",
    "tmatvecs",
    "status",
    "wall_time",
];

pub const INTEGRATE_HEADER: [&str; 13] = [
    "label",
    "mode",
    "value",
    "steps_accepted",
    "steps_rejected",
    "rhs_evals",
    "matvecs",
    "tmatvecs",
    "mean_basis_size",
    "final_norm",
    "final_error",
    "status",
    "wall_time",
];

pub fn float(v: f64) -> String {
    format!("{v:e}")
}

fn opt(v: Option<f64>) -> String {
    v.map(float).unwrap_or_default()
}

fn writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out)
}

pub fn write_convergence<W: Write>(out: W, rows: &[ConvergenceRow]) -> csv::Result<()> {
    let mut w = writer(out);
    w.write_record(CONVERGENCE_HEADER)?;
    for r in rows {
        w.write_record([
            r.label.clone(),
            float(r.h),
            opt(r.global_error),
            opt(r.observed_order),
            r.steps.to_string(),
            r.rhs_evals.to_string(),
            r.matvecs.to_string(),
            r.tmatvecs.to_string(),
            r.status.clone(),
            float(r.wall_time),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_work_precision<W: Write>(out: W, rows: &[WorkPrecisionRow]) -> csv::Result<()> {
    let mut w = writer(out);
    w.write_record(WORK_PRECISION_HEADER)?;
    for r in rows {
        w.write_record([
            r.label.clone(),
            float(r.tol),
            opt(r.final_error),
            r.steps_accepted.to_string(),
            r.steps_rejected.to_string(),
            r.rhs_evals.to_string(),
            r.matvecs.to_string(),
            r.tmatvecs.to_string(),
            r.status.clone(),
            float(r.wall_time),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_integrate<W: Write>(out: W, rows: &[IntegrateRow]) -> csv::Result<()> {
    let mut w = writer(out);
    w.write_record(INTEGRATE_HEADER)?;
    for r in rows {
        w.write_record([
            r.label.clone(),
            r.mode.to_string(),
            float(r.value),
            r.steps_accepted.to_string(),
            r.steps_rejected.to_string(),
            r.rhs_evals.to_string(),
            r.matvecs.to_string(),
            r.tmatvecs.to_string(),
            float(r.mean_basis_size),
            opt(r.final_norm),
            opt(r.final_error),
            r.status.clone(),
            float(r.wall_time),
        ])?;
    }
    w.flush()?;
    Ok(())
}
