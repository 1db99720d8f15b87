use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{check_dim, check_finite, Grid, LinearOperator, OdeProblem, PatternCache, ProblemError};

/// Gray-Scott model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayScottParams {
    pub grid_n: usize,
    /// Diffusion rate of `u`.
    pub eps1: f64,
    /// Diffusion rate of `v`.
    pub eps2: f64,
    pub feed: f64,
    pub kill: f64,
    /// Side length of the periodic square domain.
    pub domain: f64,
    pub t_span: (f64, f64),
    pub seed: u64,
    /// Relative amplitude of the random perturbation of the initial state.
    pub perturbation: f64,
}

impl Default for GrayScottParams {
    fn default() -> Self {
        Self {
            grid_n: 128,
            eps1: 0.2,
            eps2: 0.1,
            feed: 0.04,
            kill: 0.06,
            domain: 2.5,
            t_span: (0.0, 2.0),
            seed: 42,
            perturbation: 0.01,
        }
    }
}

/// Gray-Scott reaction-diffusion on a periodic grid, state `[u; v]`.
///
/// `u_t = eps1 lap(u) - u v^2 + F (1 - u)`,
/// `v_t = eps2 lap(v) + u v^2 - (F + k) v`,
/// with the 5-point Laplacian.
#[derive(Debug, Clone)]
pub struct GrayScott {
    params: GrayScottParams,
    grid: Grid,
    inv_dx2: f64,
    pattern: PatternCache,
}

impl GrayScott {
    pub fn new(params: GrayScottParams) -> Result<Self, ProblemError> {
        if params.grid_n < 3 {
            return Err(ProblemError::InvalidParameter("gray-scott grid needs at least 3 points per side".into()));
        }
        if !(params.domain > 0.0) || !(params.t_span.0 < params.t_span.1) {
            return Err(ProblemError::InvalidParameter("gray-scott domain and time span must be positive".into()));
        }
        let dx = params.domain / params.grid_n as f64;
        Ok(Self { grid: Grid { n: params.grid_n }, inv_dx2: 1.0 / (dx * dx), params, pattern: PatternCache::default() })
    }

    pub fn params(&self) -> &GrayScottParams {
        &self.params
    }

    fn neighbors(&self, i: usize, j: usize) -> [usize; 4] {
        let n = self.grid.n;
        [
            self.grid.idx((i + 1) % n, j),
            self.grid.idx((i + n - 1) % n, j),
            self.grid.idx(i, (j + 1) % n),
            self.grid.idx(i, (j + n - 1) % n),
        ]
    }

    fn laplacian_at(&self, field: &[f64], i: usize, j: usize) -> f64 {
        let c = field[self.grid.idx(i, j)];
        let s: f64 = self.neighbors(i, j).iter().map(|&k| field[k]).sum();
        (s - 4.0 * c) * self.inv_dx2
    }
}

impl OdeProblem for GrayScott {
    fn dim(&self) -> usize {
        2 * self.grid.points()
    }

    fn t_span(&self) -> (f64, f64) {
        self.params.t_span
    }

    fn initial_state(&self) -> DVector<f64> {
        let n = self.grid.n;
        let np = self.grid.points();
        let l = self.params.domain;
        let dx = l / n as f64;
        let mut rng = ChaCha8Rng::seed_from_u64(self.params.seed);
        let mut y = DVector::zeros(2 * np);
        for i in 0..n {
            for j in 0..n {
                let (x, yy) = (j as f64 * dx, i as f64 * dx);
                let inside = (x - 0.5 * l).abs() <= 0.125 * l && (yy - 0.5 * l).abs() <= 0.125 * l;
                let (u, v) = if inside { (0.5, 0.25) } else { (1.0, 0.0) };
                let k = self.grid.idx(i, j);
                let amp = self.params.perturbation;
                y[k] = u * (1.0 + amp * rng.gen_range(-1.0..1.0));
                y[np + k] = v * (1.0 + amp * rng.gen_range(-1.0..1.0));
            }
        }
        y
    }

    fn rhs(&self, _t: f64, y: &DVector<f64>) -> Result<DVector<f64>, ProblemError> {
        check_dim(y, self.dim())?;
        check_finite(y, "gray-scott state")?;
        let np = self.grid.points();
        let (u, v) = y.as_slice().split_at(np);
        let GrayScottParams { eps1, eps2, feed, kill, .. } = self.params;
        let mut out = DVector::zeros(2 * np);
        for i in 0..self.grid.n {
            for j in 0..self.grid.n {
                let k = self.grid.idx(i, j);
                let uvv = u[k] * v[k] * v[k];
                out[k] = eps1 * self.laplacian_at(u, i, j) - uvv + feed * (1.0 - u[k]);
                out[np + k] = eps2 * self.laplacian_at(v, i, j) + uvv - (feed + kill) * v[k];
            }
        }
        check_finite(&out, "gray-scott rhs")?;
        Ok(out)
    }

    fn jacobian(&self, _t: f64, y: &DVector<f64>) -> Result<Box<dyn LinearOperator>, ProblemError> {
        check_dim(y, self.dim())?;
        check_finite(y, "gray-scott state")?;
        let np = self.grid.points();
        let GrayScottParams { eps1, eps2, feed, kill, .. } = self.params;
        let mut trip = Vec::with_capacity(14 * np);
        for i in 0..self.grid.n {
            for j in 0..self.grid.n {
                let k = self.grid.idx(i, j);
                let (u, v) = (y[k], y[np + k]);
                for &nb in &self.neighbors(i, j) {
                    trip.push((k, nb, eps1 * self.inv_dx2));
                    trip.push((np + k, np + nb, eps2 * self.inv_dx2));
                }
                trip.push((k, k, -4.0 * eps1 * self.inv_dx2 - v * v - feed));
                trip.push((k, np + k, -2.0 * u * v));
                trip.push((np + k, k, v * v));
                trip.push((np + k, np + k, -4.0 * eps2 * self.inv_dx2 + 2.0 * u * v - (feed + kill)));
            }
        }
        Ok(Box::new(self.pattern.assemble(self.dim(), trip)))
    }

    fn name(&self) -> String {
        format!("gray-scott-{}", self.grid.n)
    }
}
