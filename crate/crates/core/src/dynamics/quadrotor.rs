use serde::{Deserialize, Serialize};

use super::jet::Real;
use super::Field;

/// How the four control inputs map onto body thrust and torques.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Mixing {
    /// Per-rotor thrusts in a plus configuration.
    #[default]
    Rotors,
    /// Controls are the body wrench `(F_z, tau_x, tau_y, tau_z)` directly.
    Wrench,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Quadrotor12 {
    pub mass: f64,
    pub drag: f64,
    /// Diagonal of the body inertia tensor.
    pub inertia: [f64; 3],
    pub gravity: f64,
    pub arm_length: f64,
    pub yaw_coefficient: f64,
    pub mixing: Mixing,
}

impl Quadrotor12 {
    /// Rows: body z-force, roll, pitch and yaw torque. Columns: controls.
    pub fn mixing_matrix(&self) -> [[f64; 4]; 4] {
        match self.mixing {
            Mixing::Wrench => [
                [1.0, 0.0, 0.0, 0.0],
                [0.0, 1.0, 0.0, 0.0],
                [0.0, 0.0, 1.0, 0.0],
                [0.0, 0.0, 0.0, 1.0],
            ],
            Mixing::Rotors => {
                let l = self.arm_length;
                let c = self.yaw_coefficient;
                [
                    [1.0, 1.0, 1.0, 1.0],
                    [0.0, l, 0.0, -l],
                    [-l, 0.0, l, 0.0],
                    [c, -c, c, -c],
                ]
            }
        }
    }

    /// Control that balances gravity at zero attitude.
    pub fn hover_control(&self) -> [f64; 4] {
        let thrust = self.mass * self.gravity;
        match self.mixing {
            Mixing::Wrench => [thrust, 0.0, 0.0, 0.0],
            Mixing::Rotors => [thrust / 4.0; 4],
        }
    }
}

// State layout: position (0..3), ZYX Euler angles roll/pitch/yaw (3..6),
// world-frame velocity (6..9), body angular rate (9..12).
impl Field<12, 4> for Quadrotor12 {
    fn drift<S: Real>(&self, x: &[S; 12]) -> [S; 12] {
        let (phi, theta) = (x[3], x[4]);
        let (sp, cp) = (phi.sin(), phi.cos());
        let tt = theta.tan();
        let sec = S::cst(1.0) / theta.cos();
        let (p, q, r) = (x[9], x[10], x[11]);
        let damp = -self.drag / self.mass;
        let zero = S::cst(0.0);
        [
            x[6],
            x[7],
            x[8],
            p + (sp * q + cp * r) * tt,
            cp * q - sp * r,
            (sp * q + cp * r) * sec,
            x[6] * damp,
            x[7] * damp,
            x[8] * damp + (-self.gravity),
            zero,
            zero,
            zero,
        ]
    }

    fn input<S: Real>(&self, x: &[S; 12]) -> [[S; 4]; 12] {
        let (sp, cp) = (x[3].sin(), x[3].cos());
        let (st, ct) = (x[4].sin(), x[4].cos());
        let (sy, cy) = (x[5].sin(), x[5].cos());
        // Third column of R = Rz(yaw) Ry(pitch) Rx(roll).
        let body_z = [cy * st * cp + sy * sp, sy * st * cp - cy * sp, ct * cp];
        let mix = self.mixing_matrix();
        let zero = S::cst(0.0);
        let mut g = [[zero; 4]; 12];
        for j in 0..4 {
            let thrust = mix[0][j] / self.mass;
            for k in 0..3 {
                g[6 + k][j] = body_z[k] * thrust;
                g[9 + k][j] = S::cst(mix[1 + k][j] / self.inertia[k]);
            }
        }
        g
    }
}
