//! Single steps of ROK and BOROK methods, the dense full-space oracle,
//! stage residuals and method tableaus.

mod residual;
mod stability;
mod step;
mod tableau;

pub use residual::{stage_residual_direct, stage_residual_first, stage_residual_full};
pub use stability::stability_function_eval;
pub use step::{
    borok_step, borok_step_extended, borok_step_seeded, full_space_row_step, full_space_stages, rok_step,
    rok_step_seeded, StageWorkspace, StepRecord,
};
pub use tableau::{load_tableau, MethodTableau, TableauError};

use thiserror::Error;

use crate::krylov::KrylovError;
use crate::linalg::LinalgError;
use crate::problem::ProblemError;

#[derive(Debug, Error)]
pub enum StepError {
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Krylov(#[from] KrylovError),
    #[error("steps need an autonomous problem; wrap it with `autonomize` first")]
    NonAutonomous,
    #[error("step size must be positive and finite, got {0}")]
    InvalidStepsize(f64),
}
