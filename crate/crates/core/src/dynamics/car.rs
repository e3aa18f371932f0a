use super::jet::Real;
use super::Field;

/// Kinematic car with state `(x, y, heading, steering angle)` and control
/// `(driving speed, steering rate)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Car4 {
    pub wheelbase: f64,
}

impl Field<4, 2> for Car4 {
    fn drift<S: Real>(&self, _x: &[S; 4]) -> [S; 4] {
        [S::cst(0.0); 4]
    }

    fn input<S: Real>(&self, x: &[S; 4]) -> [[S; 2]; 4] {
        let zero = S::cst(0.0);
        [
            [x[2].cos(), zero],
            [x[2].sin(), zero],
            [x[3].tan() * (1.0 / self.wheelbase), zero],
            [zero, S::cst(1.0)],
        ]
    }
}

/// Car pulling two trailers; state `(x, y, heading, steering, trailer1
/// heading, trailer2 heading)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Trailer6 {
    pub wheelbase: f64,
    /// Hitch length shared by both trailers.
    pub hitch: f64,
}

impl Field<6, 2> for Trailer6 {
    fn drift<S: Real>(&self, _x: &[S; 6]) -> [S; 6] {
        [S::cst(0.0); 6]
    }

    fn input<S: Real>(&self, x: &[S; 6]) -> [[S; 2]; 6] {
        let zero = S::cst(0.0);
        let inv_hitch = 1.0 / self.hitch;
        let rel1 = x[2] - x[4];
        let rel2 = x[4] - x[5];
        [
            [x[2].cos(), zero],
            [x[2].sin(), zero],
            [x[3].tan() * (1.0 / self.wheelbase), zero],
            [zero, S::cst(1.0)],
            [rel1.sin() * inv_hitch, zero],
            [rel1.cos() * rel2.sin() * inv_hitch, zero],
        ]
    }
}
