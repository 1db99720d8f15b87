//! Problems the harness can run, and their canonical descriptions.

use borok::problem::{
    GrayScott, GrayScottParams, LinearProblem, OdeProblem, ProblemError, ShallowWater, ShallowWaterParams,
};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// `y' = M y` with `M = -diag(lambda) + E`, the `lambda` log-spaced in
/// `[1, stiffness]` and `E` a seeded random perturbation of norm about one.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearTestParams {
    pub size: usize,
    pub stiffness: f64,
    pub seed: u64,
    pub t_span: (f64, f64),
}

impl Default for LinearTestParams {
    fn default() -> Self {
        Self { size: 50, stiffness: 1e3, seed: 7, t_span: (0.0, 1.0) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProblemSpec {
    Swe(ShallowWaterParams),
    GrayScott(GrayScottParams),
    LinearTest(LinearTestParams),
}

impl ProblemSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            ProblemSpec::Swe(_) => "swe",
            ProblemSpec::GrayScott(_) => "gray-scott",
            ProblemSpec::LinearTest(_) => "linear-test",
        }
    }

    /// Replaces the random seed; problems without randomness ignore it.
    pub fn set_seed(&mut self, seed: u64) {
        match self {
            ProblemSpec::Swe(_) => {}
            ProblemSpec::GrayScott(p) => p.seed = seed,
            ProblemSpec::LinearTest(p) => p.seed = seed,
        }
    }

    pub fn t_span(&self) -> (f64, f64) {
        match self {
            ProblemSpec::Swe(p) => p.t_span,
            ProblemSpec::GrayScott(p) => p.t_span,
            ProblemSpec::LinearTest(p) => p.t_span,
        }
    }

    pub fn build(&self) -> Result<Box<dyn OdeProblem>, ProblemError> {
        Ok(match self {
            ProblemSpec::Swe(p) => Box::new(ShallowWater::new(p.clone())?),
            ProblemSpec::GrayScott(p) => Box::new(GrayScott::new(p.clone())?),
            ProblemSpec::LinearTest(p) => Box::new(linear_test(p)?),
        })
    }

    /// Every parameter that affects the solution, as text.
    pub fn canonical(&self) -> String {
        match self {
            ProblemSpec::Swe(p) => format!("swe {p:?}"),
            ProblemSpec::GrayScott(p) => format!("gray-scott {p:?}"),
            ProblemSpec::LinearTest(p) => format!("linear-test {p:?}"),
        }
    }

    /// Hex SHA-256 of [`Self::canonical`].
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn linear_test(p: &LinearTestParams) -> Result<LinearProblem, ProblemError> {
    if p.size == 0 || !(p.stiffness >= 1.0) {
        return Err(ProblemError::InvalidParameter("linear-test needs size >= 1 and stiffness >= 1".into()));
    }
    let n = p.size;
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let scale = 1.0 / (n as f64).sqrt();
    let mut m = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0) * scale);
    let log_top = p.stiffness.log10();
    for i in 0..n {
        let frac = if n == 1 { 0.0 } else { i as f64 / (n - 1) as f64 };
        m[(i, i)] -= 10f64.powf(frac * log_top);
    }
    let y0 = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
    LinearProblem::new(m, y0, p.t_span)
}
