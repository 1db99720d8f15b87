use nalgebra::DVector;

use super::{check_dim, check_finite, Grid, LinearOperator, OdeProblem, PatternCache, ProblemError};

#[derive(Debug, Clone, PartialEq)]
pub struct ShallowWaterParams {
    pub grid_n: usize,
    pub gravity: f64,
    pub t_span: (f64, f64),
    /// Height of the initial Gaussian bump above the unit rest level.
    pub bump_height: f64,
    /// Decay rate of the Gaussian bump, `exp(-width * r^2)`.
    pub bump_width: f64,
}

impl Default for ShallowWaterParams {
    fn default() -> Self {
        Self { grid_n: 64, gravity: 9.81, t_span: (0.0, 5.0), bump_height: 0.5, bump_width: 100.0 }
    }
}

/// 2D shallow water equations on `[0, 1]^2`, state `[u; v; h]`.
///
/// The conservation-form fluxes are differenced with second-order centered
/// stencils on a node-centered grid (`dx = 1 / (n - 1)`). Walls are
/// reflective: ghost nodes mirror the first interior node with the normal
/// velocity negated. Velocity tendencies follow from the momentum tendencies
/// as `u_t = ((uh)_t - u h_t) / h`.
#[derive(Debug, Clone)]
pub struct ShallowWater {
    params: ShallowWaterParams,
    grid: Grid,
    inv_2dx: f64,
    pattern: PatternCache,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Axis {
    X,
    Y,
}

/// One side of a centered difference: node, signed weight, and whether the
/// node stands in for a reflected ghost.
#[derive(Debug, Clone, Copy)]
struct Tap {
    node: usize,
    weight: f64,
    axis: Axis,
    ghost: bool,
}

impl Tap {
    /// Parity of the (h, uh, vh) fluxes under reflection across this tap's wall.
    fn signs(&self) -> [f64; 3] {
        match (self.ghost, self.axis) {
            (false, _) => [1.0, 1.0, 1.0],
            (true, Axis::X) => [-1.0, 1.0, -1.0],
            (true, Axis::Y) => [-1.0, -1.0, 1.0],
        }
    }
}

struct Tendencies {
    ht: Vec<f64>,
    ut: Vec<f64>,
    vt: Vec<f64>,
}

impl ShallowWater {
    pub fn new(params: ShallowWaterParams) -> Result<Self, ProblemError> {
        if params.grid_n < 3 {
            return Err(ProblemError::InvalidParameter("shallow water grid needs at least 3 points per side".into()));
        }
        if !(params.t_span.0 < params.t_span.1) {
            return Err(ProblemError::InvalidParameter("t_span must satisfy t0 < tF".into()));
        }
        let dx = 1.0 / (params.grid_n - 1) as f64;
        Ok(Self { grid: Grid { n: params.grid_n }, inv_2dx: 0.5 / dx, params, pattern: PatternCache::default() })
    }

    pub fn params(&self) -> &ShallowWaterParams {
        &self.params
    }

    fn taps(&self, i: usize, j: usize) -> [Tap; 4] {
        let n = self.grid.n;
        let w = self.inv_2dx;
        let side = |a: usize, up: bool| -> (usize, bool) {
            if up {
                if a + 1 < n {
                    (a + 1, false)
                } else {
                    (a - 1, true)
                }
            } else if a > 0 {
                (a - 1, false)
            } else {
                (a + 1, true)
            }
        };
        let (je, ge) = side(j, true);
        let (jw, gw) = side(j, false);
        let (in_, gn) = side(i, true);
        let (is, gs) = side(i, false);
        [
            Tap { node: self.grid.idx(i, je), weight: w, axis: Axis::X, ghost: ge },
            Tap { node: self.grid.idx(i, jw), weight: -w, axis: Axis::X, ghost: gw },
            Tap { node: self.grid.idx(in_, j), weight: w, axis: Axis::Y, ghost: gn },
            Tap { node: self.grid.idx(is, j), weight: -w, axis: Axis::Y, ghost: gs },
        ]
    }

    /// Fluxes of (h, uh, vh) along `axis` at a node.
    fn fluxes(&self, axis: Axis, u: f64, v: f64, h: f64) -> [f64; 3] {
        let g = self.params.gravity;
        match axis {
            Axis::X => [u * h, u * u * h + 0.5 * g * h * h, u * v * h],
            Axis::Y => [v * h, u * v * h, v * v * h + 0.5 * g * h * h],
        }
    }

    /// Gradients of [`Self::fluxes`] with respect to (u, v, h).
    fn flux_gradients(&self, axis: Axis, u: f64, v: f64, h: f64) -> [[f64; 3]; 3] {
        let g = self.params.gravity;
        match axis {
            Axis::X => [[h, 0.0, u], [2.0 * u * h, 0.0, u * u + g * h], [v * h, u * h, u * v]],
            Axis::Y => [[0.0, h, v], [v * h, u * h, u * v], [0.0, 2.0 * v * h, v * v + g * h]],
        }
    }

    fn split<'a>(&self, y: &'a DVector<f64>) -> (&'a [f64], &'a [f64], &'a [f64]) {
        let np = self.grid.points();
        let s = y.as_slice();
        (&s[..np], &s[np..2 * np], &s[2 * np..])
    }

    fn tendencies(&self, y: &DVector<f64>) -> Tendencies {
        let np = self.grid.points();
        let (u, v, h) = self.split(y);
        let mut ht = vec![0.0; np];
        let mut ut = vec![0.0; np];
        let mut vt = vec![0.0; np];
        for i in 0..self.grid.n {
            for j in 0..self.grid.n {
                let c = self.grid.idx(i, j);
                let mut div = [0.0; 3];
                for tap in self.taps(i, j) {
                    let p = tap.node;
                    let f = self.fluxes(tap.axis, u[p], v[p], h[p]);
                    let s = tap.signs();
                    for q in 0..3 {
                        div[q] += tap.weight * s[q] * f[q];
                    }
                }
                ht[c] = -div[0];
                ut[c] = (-div[1] - u[c] * ht[c]) / h[c];
                vt[c] = (-div[2] - v[c] * ht[c]) / h[c];
            }
        }
        Tendencies { ht, ut, vt }
    }
}

impl OdeProblem for ShallowWater {
    fn dim(&self) -> usize {
        3 * self.grid.points()
    }

    fn t_span(&self) -> (f64, f64) {
        self.params.t_span
    }

    fn initial_state(&self) -> DVector<f64> {
        let n = self.grid.n;
        let np = self.grid.points();
        let dx = 1.0 / (n - 1) as f64;
        let mut y = DVector::zeros(3 * np);
        for i in 0..n {
            for j in 0..n {
                let (x, yy) = (j as f64 * dx, i as f64 * dx);
                let r2 = (x - 0.5).powi(2) + (yy - 0.5).powi(2);
                y[2 * np + self.grid.idx(i, j)] = 1.0 + self.params.bump_height * (-self.params.bump_width * r2).exp();
            }
        }
        y
    }

    fn rhs(&self, _t: f64, y: &DVector<f64>) -> Result<DVector<f64>, ProblemError> {
        check_dim(y, self.dim())?;
        check_finite(y, "shallow water state")?;
        let Tendencies { ht, ut, vt } = self.tendencies(y);
        let mut out = DVector::zeros(self.dim());
        let np = self.grid.points();
        out.as_mut_slice()[..np].copy_from_slice(&ut);
        out.as_mut_slice()[np..2 * np].copy_from_slice(&vt);
        out.as_mut_slice()[2 * np..].copy_from_slice(&ht);
        check_finite(&out, "shallow water rhs")?;
        Ok(out)
    }

    fn jacobian(&self, _t: f64, y: &DVector<f64>) -> Result<Box<dyn LinearOperator>, ProblemError> {
        check_dim(y, self.dim())?;
        check_finite(y, "shallow water state")?;
        let np = self.grid.points();
        let (u, v, h) = self.split(y);
        let Tendencies { ht, ut, vt } = self.tendencies(y);
        let col = |field: usize, p: usize| field * np + p;
        let mut trip = Vec::with_capacity(4 * 3 * 9 * np + 4 * np);
        for i in 0..self.grid.n {
            for j in 0..self.grid.n {
                let c = self.grid.idx(i, j);
                let (row_u, row_v, row_h) = (c, np + c, 2 * np + c);
                for tap in self.taps(i, j) {
                    let p = tap.node;
                    let grads = self.flux_gradients(tap.axis, u[p], v[p], h[p]);
                    let s = tap.signs();
                    for field in 0..3 {
                        let dht = -tap.weight * s[0] * grads[0][field];
                        let dq1 = -tap.weight * s[1] * grads[1][field];
                        let dq2 = -tap.weight * s[2] * grads[2][field];
                        trip.push((row_h, col(field, p), dht));
                        trip.push((row_u, col(field, p), (dq1 - u[c] * dht) / h[c]));
                        trip.push((row_v, col(field, p), (dq2 - v[c] * dht) / h[c]));
                    }
                }
                trip.push((row_u, col(0, c), -ht[c] / h[c]));
                trip.push((row_u, col(2, c), -ut[c] / h[c]));
                trip.push((row_v, col(1, c), -ht[c] / h[c]));
                trip.push((row_v, col(2, c), -vt[c] / h[c]));
            }
        }
        Ok(Box::new(self.pattern.assemble(self.dim(), trip)))
    }

    fn name(&self) -> String {
        format!("swe-{}", self.grid.n)
    }
}
