use nalgebra::{DMatrix, DVector};

/// Continuous linear model `x' = M x + G u`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearModel {
    pub system: DMatrix<f64>,
    pub input: DMatrix<f64>,
}

impl LinearModel {
    pub fn drift(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.system * x
    }
}
