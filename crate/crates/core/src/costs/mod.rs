//! Step and terminal costs of the form `l(x) + ½ uᵀ R u`, where `l` is a
//! quadratic pull towards the goal plus exponential obstacle barriers.

mod barrier;
pub mod mvee;

use nalgebra::{DMatrix, DVector};

pub use barrier::{BarrierObstacle, Ellipsoid};
pub use mvee::mvee;

use crate::error::{check_dim, Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct CostModel {
    q: DMatrix<f64>,
    q_f: DMatrix<f64>,
    r: DMatrix<f64>,
    goal: DVector<f64>,
    obstacles: Vec<BarrierObstacle>,
}

/// Derivatives of the step cost at a nominal point.
#[derive(Clone, Debug)]
pub struct CostDerivatives {
    /// `L_t`, gradient of `l` (stored as a column).
    pub lx: DVector<f64>,
    /// `L_tt`, Hessian of `l`.
    pub lxx: DMatrix<f64>,
    pub r_u: DVector<f64>,
    pub r: DMatrix<f64>,
}

fn symmetric(name: &str, m: &DMatrix<f64>) -> Result<()> {
    if !m.is_square() {
        return Err(Error::InvalidParameter(format!("{name} must be square")));
    }
    if (m - m.transpose()).amax() > 1e-12 {
        return Err(Error::InvalidParameter(format!("{name} must be symmetric")));
    }
    Ok(())
}

fn psd(name: &str, m: &DMatrix<f64>) -> Result<()> {
    symmetric(name, m)?;
    let min = m.clone().symmetric_eigenvalues().min();
    if min < -1e-12 * (1.0 + m.amax()) {
        return Err(Error::InvalidParameter(format!(
            "{name} must be positive semidefinite (min eigenvalue {min:e})"
        )));
    }
    Ok(())
}

impl CostModel {
    pub fn new(
        q: DMatrix<f64>,
        q_f: DMatrix<f64>,
        r: DMatrix<f64>,
        goal: DVector<f64>,
        obstacles: Vec<BarrierObstacle>,
    ) -> Result<Self> {
        let n = goal.len();
        check_dim("Q", n, q.nrows())?;
        check_dim("Q_f", n, q_f.nrows())?;
        psd("Q", &q)?;
        psd("Q_f", &q_f)?;
        symmetric("R", &r)?;
        if r.clone().cholesky().is_none() {
            return Err(Error::InvalidParameter("R must be positive definite".into()));
        }
        for (k, o) in obstacles.iter().enumerate() {
            if let Some(&bad) = o.position_indices.iter().find(|&&i| i >= n) {
                return Err(Error::InvalidParameter(format!(
                    "obstacle {k} selects state index {bad} but n_x = {n}"
                )));
            }
        }
        Ok(Self {
            q,
            q_f,
            r,
            goal,
            obstacles,
        })
    }

    /// Diagonal weights, no obstacles.
    pub fn diagonal(q: &[f64], q_f: &[f64], r: &[f64], goal: DVector<f64>) -> Result<Self> {
        let diag = |v: &[f64]| DMatrix::from_diagonal(&DVector::from_row_slice(v));
        Self::new(diag(q), diag(q_f), diag(r), goal, Vec::new())
    }

    pub fn with_obstacles(mut self, obstacles: Vec<BarrierObstacle>) -> Result<Self> {
        self.obstacles = obstacles;
        Self::new(self.q, self.q_f, self.r, self.goal, self.obstacles)
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn q_f(&self) -> &DMatrix<f64> {
        &self.q_f
    }

    pub fn r(&self) -> &DMatrix<f64> {
        &self.r
    }

    pub fn goal(&self) -> &DVector<f64> {
        &self.goal
    }

    pub fn obstacles(&self) -> &[BarrierObstacle] {
        &self.obstacles
    }

    pub fn n_x(&self) -> usize {
        self.goal.len()
    }

    pub fn n_u(&self) -> usize {
        self.r.nrows()
    }

    /// State part `l(x)`: goal quadratic plus barriers.
    pub fn state_cost(&self, x: &DVector<f64>) -> f64 {
        let d = x - &self.goal;
        0.5 * d.dot(&(&self.q * &d)) + self.obstacles.iter().map(|o| o.value(x)).sum::<f64>()
    }

    pub fn control_cost(&self, u: &DVector<f64>) -> f64 {
        0.5 * u.dot(&(&self.r * u))
    }

    pub fn step_cost(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<f64> {
        check_dim("state", self.n_x(), x.len())?;
        check_dim("control", self.n_u(), u.len())?;
        Ok(self.state_cost(x) + self.control_cost(u))
    }

    pub fn cost_derivatives(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<CostDerivatives> {
        check_dim("state", self.n_x(), x.len())?;
        check_dim("control", self.n_u(), u.len())?;
        let mut lx = &self.q * (x - &self.goal);
        let mut lxx = self.q.clone();
        for (index, o) in self.obstacles.iter().enumerate() {
            o.accumulate(x, &mut lx, &mut lxx);
            if !(lx.iter().all(|v| v.is_finite()) && lxx.iter().all(|v| v.is_finite())) {
                return Err(Error::BarrierOverflow { index });
            }
        }
        Ok(CostDerivatives {
            lx,
            lxx,
            r_u: &self.r * u,
            r: self.r.clone(),
        })
    }

    pub fn terminal_cost(&self, x: &DVector<f64>) -> f64 {
        let d = x - &self.goal;
        0.5 * d.dot(&(&self.q_f * &d))
    }

    /// `(C_N, G_N, P_N)` with `G_N` stored as a column.
    pub fn terminal_derivatives(&self, x: &DVector<f64>) -> (f64, DVector<f64>, DMatrix<f64>) {
        let d = x - &self.goal;
        let g = &self.q_f * &d;
        (0.5 * d.dot(&g), g, self.q_f.clone())
    }
}
