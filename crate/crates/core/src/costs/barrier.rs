use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// `{p : (p - c)ᵀ E (p - c) ≤ 1}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ellipsoid {
    pub center: DVector<f64>,
    pub shape: DMatrix<f64>,
}

impl Ellipsoid {
    pub fn new(center: DVector<f64>, shape: DMatrix<f64>) -> Result<Self> {
        let d = center.len();
        check_dim("ellipsoid shape rows", d, shape.nrows())?;
        check_dim("ellipsoid shape cols", d, shape.ncols())?;
        if (&shape - shape.transpose()).amax() > 1e-12 {
            return Err(Error::InvalidParameter(
                "ellipsoid shape matrix is not symmetric".into(),
            ));
        }
        let min_eig = shape.clone().symmetric_eigenvalues().min();
        if !(min_eig > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "ellipsoid shape matrix is not positive definite (min eigenvalue {min_eig:e})"
            )));
        }
        Ok(Self { center, shape })
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    /// `(p - c)ᵀ E (p - c)`; below one inside, one on the boundary.
    pub fn level(&self, p: &DVector<f64>) -> f64 {
        let d = p - &self.center;
        d.dot(&(&self.shape * &d))
    }
}

/// Exponential barrier `Γ exp(-ρ (p - c)ᵀ E (p - c))` on the position
/// components of the state selected by `position_indices`.
#[derive(Clone, Debug, PartialEq)]
pub struct BarrierObstacle {
    pub ellipsoid: Ellipsoid,
    pub gamma: f64,
    pub rho: f64,
    pub position_indices: Vec<usize>,
}

impl BarrierObstacle {
    pub fn new(ellipsoid: Ellipsoid, gamma: f64, rho: f64, position_indices: Vec<usize>) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) || !(rho > 0.0 && rho.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "barrier scale and decay must be positive (gamma = {gamma}, rho = {rho})"
            )));
        }
        check_dim("barrier position selector", ellipsoid.dim(), position_indices.len())?;
        Ok(Self {
            ellipsoid,
            gamma,
            rho,
            position_indices,
        })
    }

    fn offset(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.position_indices.len(),
            self.position_indices
                .iter()
                .zip(self.ellipsoid.center.iter())
                .map(|(&i, c)| x[i] - c),
        )
    }

    pub fn value(&self, x: &DVector<f64>) -> f64 {
        let d = self.offset(x);
        self.gamma * (-self.rho * d.dot(&(&self.ellipsoid.shape * &d))).exp()
    }

    /// Adds this barrier's gradient and Hessian into the full-state buffers.
    pub(crate) fn accumulate(&self, x: &DVector<f64>, grad: &mut DVector<f64>, hess: &mut DMatrix<f64>) {
        let e = &self.ellipsoid.shape;
        let d = self.offset(x);
        let ed = e * &d;
        let b = self.gamma * (-self.rho * d.dot(&ed)).exp();
        let g = &ed * (-2.0 * self.rho * b);
        let h = (&ed * ed.transpose()) * (4.0 * self.rho * self.rho * b) - e * (2.0 * self.rho * b);
        for (a, &i) in self.position_indices.iter().enumerate() {
            grad[i] += g[a];
            for (c, &j) in self.position_indices.iter().enumerate() {
                hess[(i, j)] += h[(a, c)];
            }
        }
    }
}
