//! Control-affine models `x' = f̄(x) + ḡ(x) u`, their explicit Euler
//! discretization and exact derivatives of the discrete map.
//!
//! The discrete step is `x + dT f̄(x) + dT ḡ(x) u`. Linearizing about
//! `(x̄, ū)` gives
//!
//! ```text
//! A   = I + dT (∂f̄/∂x + Σ_j ∂ḡ_j/∂x ū_j)
//! B   = dT ḡ(x̄)
//! Rxx = dT ∇²_xx (f̄ + ḡ ū)          (one n_x × n_x slice per output)
//! Rxu = dT ∂ḡ/∂x                     (one n_x × n_u slice per output)
//! ```
//!
//! Nonlinear models are written once over [`jet::Real`] and differentiated
//! with forward-mode jets, so the derivatives are exact up to rounding.

mod car;
mod fd;
pub mod jet;
mod linear;
mod quadrotor;

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

pub use car::{Car4, Trailer6};
pub use fd::fd_derivatives;
pub use linear::LinearModel;
pub use quadrotor::{Mixing, Quadrotor12};

use crate::error::{check_dim, Error, Result};
use jet::{Jet1, Jet2, Real};

pub type StateVector = DVector<f64>;
pub type ControlVector = DVector<f64>;

/// A control-affine vector field with compile-time dimensions.
pub(crate) trait Field<const NX: usize, const NU: usize> {
    fn drift<S: Real>(&self, x: &[S; NX]) -> [S; NX];
    fn input<S: Real>(&self, x: &[S; NX]) -> [[S; NU]; NX];
}

/// Third-order tensor stored as one matrix per leading (output) index.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor3 {
    pub slices: Vec<DMatrix<f64>>,
}

impl Tensor3 {
    pub fn zeros(n: usize, rows: usize, cols: usize) -> Self {
        Self {
            slices: vec![DMatrix::zeros(rows, cols); n],
        }
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        let (r, c) = self.slices.first().map_or((0, 0), |s| s.shape());
        (self.slices.len(), r, c)
    }

    pub fn max_abs(&self) -> f64 {
        self.slices.iter().map(|s| s.amax()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.slices.iter().all(|s| s.iter().all(|v| v.is_finite()))
    }
}

/// First and second derivatives of the discrete map about a nominal point.
#[derive(Clone, Debug, PartialEq)]
pub struct Linearization {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub rxx: Tensor3,
    pub rxu: Tensor3,
}

impl Linearization {
    fn ensure_finite(self) -> Result<Self> {
        let finite =
            self.a.iter().chain(self.b.iter()).all(|v| v.is_finite()) && self.rxx.is_finite() && self.rxu.is_finite();
        if finite {
            Ok(self)
        } else {
            Err(Error::NonFinite("model linearization".into()))
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ModelKind {
    Car4(Car4),
    Trailer6(Trailer6),
    Quadrotor12(Quadrotor12),
    Linear(LinearModel),
}

#[derive(Clone, Debug, PartialEq)]
pub struct DynamicsModel {
    kind: ModelKind,
    dt: f64,
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")))
    }
}

impl DynamicsModel {
    fn new(kind: ModelKind, dt: f64) -> Result<Self> {
        positive("dT", dt)?;
        Ok(Self { kind, dt })
    }

    pub fn car4(wheelbase: f64, dt: f64) -> Result<Self> {
        let wheelbase = positive("wheelbase L", wheelbase)?;
        Self::new(ModelKind::Car4(Car4 { wheelbase }), dt)
    }

    pub fn trailer6(wheelbase: f64, hitch: f64, dt: f64) -> Result<Self> {
        let wheelbase = positive("wheelbase L", wheelbase)?;
        let hitch = positive("hitch length", hitch)?;
        Self::new(ModelKind::Trailer6(Trailer6 { wheelbase, hitch }), dt)
    }

    pub fn quadrotor12(params: Quadrotor12, dt: f64) -> Result<Self> {
        positive("mass m", params.mass)?;
        if !(params.drag.is_finite() && params.drag >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "drag k_d must be non-negative, got {}",
                params.drag
            )));
        }
        for (k, i) in params.inertia.iter().enumerate() {
            positive(&format!("inertia[{k}]"), *i)?;
        }
        positive("arm length", params.arm_length)?;
        positive("yaw coefficient", params.yaw_coefficient)?;
        Self::new(ModelKind::Quadrotor12(params), dt)
    }

    /// `x' = M x + G u`.
    pub fn linear(system: DMatrix<f64>, input: DMatrix<f64>, dt: f64) -> Result<Self> {
        check_dim("linear model system columns", system.nrows(), system.ncols())?;
        check_dim("linear model input rows", system.nrows(), input.nrows())?;
        Self::new(ModelKind::Linear(LinearModel { system, input }), dt)
    }

    /// Builds a model from its string id and a named-parameter map. Missing
    /// parameters fall back to the library defaults.
    pub fn from_id(id: &str, params: &BTreeMap<String, f64>, mixing: Mixing, dt: f64) -> Result<Self> {
        let get = |k: &str, d: f64| params.get(k).copied().unwrap_or(d);
        let known: &[&str] = match id {
            "car4" => &["wheelbase"],
            "trailer6" => &["wheelbase", "hitch"],
            "quadrotor12" => &[
                "mass",
                "drag",
                "ixx",
                "iyy",
                "izz",
                "gravity",
                "arm_length",
                "yaw_coefficient",
            ],
            other => return Err(Error::Scenario(format!("unknown model id `{other}`"))),
        };
        if let Some(unknown) = params.keys().find(|k| !known.contains(&k.as_str())) {
            return Err(Error::Scenario(format!(
                "model.params: unknown parameter `{unknown}` for `{id}`"
            )));
        }
        match id {
            "car4" => Self::car4(get("wheelbase", 0.5), dt),
            "trailer6" => {
                let l = get("wheelbase", 0.5);
                Self::trailer6(l, get("hitch", l), dt)
            }
            _ => Self::quadrotor12(
                Quadrotor12 {
                    mass: get("mass", 0.5),
                    drag: get("drag", 0.1),
                    inertia: [get("ixx", 5e-3), get("iyy", 5e-3), get("izz", 9e-3)],
                    gravity: get("gravity", 9.81),
                    arm_length: get("arm_length", 0.17),
                    yaw_coefficient: get("yaw_coefficient", 0.016),
                    mixing,
                },
                dt,
            ),
        }
    }

    pub fn id(&self) -> &'static str {
        match self.kind {
            ModelKind::Car4(_) => "car4",
            ModelKind::Trailer6(_) => "trailer6",
            ModelKind::Quadrotor12(_) => "quadrotor12",
            ModelKind::Linear(_) => "linear",
        }
    }

    pub fn kind(&self) -> &ModelKind {
        &self.kind
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn n_x(&self) -> usize {
        match &self.kind {
            ModelKind::Car4(_) => 4,
            ModelKind::Trailer6(_) => 6,
            ModelKind::Quadrotor12(_) => 12,
            ModelKind::Linear(m) => m.system.nrows(),
        }
    }

    pub fn n_u(&self) -> usize {
        match &self.kind {
            ModelKind::Car4(_) | ModelKind::Trailer6(_) => 2,
            ModelKind::Quadrotor12(_) => 4,
            ModelKind::Linear(m) => m.input.ncols(),
        }
    }

    /// Linear models have constant Jacobians and vanishing second derivatives.
    pub fn is_linear(&self) -> bool {
        matches!(self.kind, ModelKind::Linear(_))
    }

    fn check(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<()> {
        check_dim("state", self.n_x(), x.len())?;
        check_dim("control", self.n_u(), u.len())
    }

    /// Continuous drift `f̄(x)`.
    pub fn drift(&self, x: &StateVector) -> Result<StateVector> {
        check_dim("state", self.n_x(), x.len())?;
        Ok(match &self.kind {
            ModelKind::Car4(m) => drift_f64(m, x),
            ModelKind::Trailer6(m) => drift_f64(m, x),
            ModelKind::Quadrotor12(m) => drift_f64(m, x),
            ModelKind::Linear(m) => m.drift(x),
        })
    }

    /// Continuous input matrix `ḡ(x)`.
    pub fn input_matrix(&self, x: &StateVector) -> Result<DMatrix<f64>> {
        check_dim("state", self.n_x(), x.len())?;
        Ok(match &self.kind {
            ModelKind::Car4(m) => input_f64(m, x),
            ModelKind::Trailer6(m) => input_f64(m, x),
            ModelKind::Quadrotor12(m) => input_f64(m, x),
            ModelKind::Linear(m) => m.input.clone(),
        })
    }

    /// One explicit Euler step of the noise-free dynamics.
    pub fn step(&self, x: &StateVector, u: &ControlVector) -> Result<StateVector> {
        self.check(x, u)?;
        let next = match &self.kind {
            ModelKind::Car4(m) => step_f64(m, x, u, self.dt),
            ModelKind::Trailer6(m) => step_f64(m, x, u, self.dt),
            ModelKind::Quadrotor12(m) => step_f64(m, x, u, self.dt),
            ModelKind::Linear(m) => x + (m.drift(x) + &m.input * u) * self.dt,
        };
        if next.iter().all(|v| v.is_finite()) {
            Ok(next)
        } else {
            Err(Error::NonFinite(format!("{} step", self.id())))
        }
    }

    /// `A` and `B` only; the solver's inner loop does not need the tensors.
    pub fn jacobians(&self, x: &StateVector, u: &ControlVector) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        self.check(x, u)?;
        let (a, b) = match &self.kind {
            ModelKind::Car4(m) => first_order(m, x, u, self.dt),
            ModelKind::Trailer6(m) => first_order(m, x, u, self.dt),
            ModelKind::Quadrotor12(m) => first_order(m, x, u, self.dt),
            ModelKind::Linear(m) => linear_jacobians(m, self.dt),
        };
        if a.iter().chain(b.iter()).all(|v| v.is_finite()) {
            Ok((a, b))
        } else {
            Err(Error::NonFinite("model Jacobian".into()))
        }
    }

    /// Full linearization including the second-derivative tensors.
    pub fn linearize(&self, x: &StateVector, u: &ControlVector) -> Result<Linearization> {
        self.check(x, u)?;
        let lin = match &self.kind {
            ModelKind::Car4(m) => second_order(m, x, u, self.dt),
            ModelKind::Trailer6(m) => second_order(m, x, u, self.dt),
            ModelKind::Quadrotor12(m) => second_order(m, x, u, self.dt),
            ModelKind::Linear(m) => {
                let (a, b) = linear_jacobians(m, self.dt);
                let (n, k) = (self.n_x(), self.n_u());
                Linearization {
                    a,
                    b,
                    rxx: Tensor3::zeros(n, n, n),
                    rxu: Tensor3::zeros(n, n, k),
                }
            }
        };
        lin.ensure_finite()
    }
}

fn linear_jacobians(m: &LinearModel, dt: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = m.system.nrows();
    (DMatrix::identity(n, n) + &m.system * dt, &m.input * dt)
}

fn to_array<const NX: usize>(x: &DVector<f64>) -> [f64; NX] {
    std::array::from_fn(|i| x[i])
}

fn drift_f64<F: Field<NX, NU>, const NX: usize, const NU: usize>(f: &F, x: &DVector<f64>) -> DVector<f64> {
    DVector::from_row_slice(&f.drift(&to_array::<NX>(x)))
}

fn input_f64<F: Field<NX, NU>, const NX: usize, const NU: usize>(f: &F, x: &DVector<f64>) -> DMatrix<f64> {
    let g = f.input(&to_array::<NX>(x));
    DMatrix::from_fn(NX, NU, |i, j| g[i][j])
}

fn step_f64<F: Field<NX, NU>, const NX: usize, const NU: usize>(
    f: &F,
    x: &DVector<f64>,
    u: &DVector<f64>,
    dt: f64,
) -> DVector<f64> {
    let xa = to_array::<NX>(x);
    let drift = f.drift(&xa);
    let g = f.input(&xa);
    DVector::from_fn(NX, |i, _| {
        let forced: f64 = (0..NU).map(|j| g[i][j] * u[j]).sum();
        x[i] + (drift[i] + forced) * dt
    })
}

fn first_order<F: Field<NX, NU>, const NX: usize, const NU: usize>(
    f: &F,
    x: &DVector<f64>,
    u: &DVector<f64>,
    dt: f64,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let xj: [Jet1<NX>; NX] = std::array::from_fn(|i| Jet1::variable(x[i], i));
    let drift = f.drift(&xj);
    let g = f.input(&xj);
    let mut a = DMatrix::identity(NX, NX);
    let mut b = DMatrix::zeros(NX, NU);
    for i in 0..NX {
        let mut flow = drift[i];
        for j in 0..NU {
            flow = flow + g[i][j] * u[j];
            b[(i, j)] = g[i][j].v * dt;
        }
        for k in 0..NX {
            a[(i, k)] += flow.g[k] * dt;
        }
    }
    (a, b)
}

fn second_order<F: Field<NX, NU>, const NX: usize, const NU: usize>(
    f: &F,
    x: &DVector<f64>,
    u: &DVector<f64>,
    dt: f64,
) -> Linearization {
    let xj: [Jet2<NX>; NX] = std::array::from_fn(|i| Jet2::variable(x[i], i));
    let drift = f.drift(&xj);
    let g = f.input(&xj);
    let mut a = DMatrix::identity(NX, NX);
    let mut b = DMatrix::zeros(NX, NU);
    let mut rxx = Tensor3::zeros(NX, NX, NX);
    let mut rxu = Tensor3::zeros(NX, NX, NU);
    for i in 0..NX {
        let mut flow = drift[i];
        for j in 0..NU {
            flow = flow + g[i][j] * u[j];
            b[(i, j)] = g[i][j].v * dt;
            for k in 0..NX {
                rxu.slices[i][(k, j)] = g[i][j].g[k] * dt;
            }
        }
        for k in 0..NX {
            a[(i, k)] += flow.g[k] * dt;
            for l in 0..NX {
                rxx.slices[i][(k, l)] = flow.h[k][l] * dt;
            }
        }
    }
    Linearization { a, b, rxx, rxu }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::FRAC_PI_2;

    fn car() -> DynamicsModel {
        DynamicsModel::car4(0.5, 0.1).unwrap()
    }

    #[test]
    fn car_straight_step() {
        let x = DVector::zeros(4);
        let u = DVector::from_vec(vec![1.0, 0.0]);
        let next = car().step(&x, &u).unwrap();
        assert_relative_eq!(next, DVector::from_vec(vec![0.1, 0.0, 0.0, 0.0]));
    }

    #[test]
    fn car_heading_north_step() {
        let x = DVector::from_vec(vec![0.0, 0.0, FRAC_PI_2, 0.0]);
        let u = DVector::from_vec(vec![1.0, 0.0]);
        let next = car().step(&x, &u).unwrap();
        // cos(pi/2) is 6e-17, not zero.
        assert!(next[0].abs() < 1e-16);
        assert_relative_eq!(next[1], 0.1);
        assert_relative_eq!(next[2], FRAC_PI_2);
        assert_eq!(next[3], 0.0);
    }

    #[test]
    fn linear_model_equilibrium_and_derivatives() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -2.0, -0.3]);
        let g = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let model = DynamicsModel::linear(m.clone(), g, 0.05).unwrap();
        let zero = DVector::zeros(2);
        let u = DVector::zeros(1);
        assert_eq!(model.step(&zero, &u).unwrap(), zero);
        let lin = model.linearize(&zero, &u).unwrap();
        assert_relative_eq!(lin.a, DMatrix::identity(2, 2) + m * 0.05);
        assert_eq!(lin.rxx.max_abs(), 0.0);
        assert_eq!(lin.rxu.max_abs(), 0.0);
    }

    #[test]
    fn car_heading_derivative_vanishes_at_zero_heading() {
        let x = DVector::zeros(4);
        let u = DVector::from_vec(vec![1.0, 0.0]);
        let lin = car().linearize(&x, &u).unwrap();
        assert_eq!(lin.a[(0, 2)], 0.0);
        assert_relative_eq!(lin.a[(1, 2)], 0.1);
    }

    #[test]
    fn trailer_at_aligned_headings_has_no_trailer_rates() {
        let model = DynamicsModel::trailer6(0.5, 0.5, 0.1).unwrap();
        let x = DVector::from_vec(vec![1.0, 2.0, 0.0, 0.0, 0.0, 0.0]);
        let g = model.input_matrix(&x).unwrap();
        assert_eq!(g[(4, 0)], 0.0);
        assert_eq!(g[(5, 0)], 0.0);
    }

    fn quad(mixing: Mixing) -> DynamicsModel {
        DynamicsModel::from_id("quadrotor12", &BTreeMap::new(), mixing, 0.1).unwrap()
    }

    #[test]
    fn quadrotor_free_fall() {
        let model = quad(Mixing::Rotors);
        let x = DVector::zeros(12);
        let accel = model.drift(&x).unwrap();
        assert_relative_eq!(accel[8], -9.81);
        for i in (0..12).filter(|&i| i != 8) {
            assert_eq!(accel[i], 0.0);
        }
    }

    #[test]
    fn quadrotor_hover_is_equilibrium() {
        for mixing in [Mixing::Rotors, Mixing::Wrench] {
            let model = quad(mixing);
            let ModelKind::Quadrotor12(q) = model.kind() else {
                unreachable!()
            };
            let hover = DVector::from_row_slice(&q.hover_control());
            let mut x = DVector::zeros(12);
            x[2] = 1.0;
            let next = model.step(&x, &hover).unwrap();
            assert_relative_eq!(next, x, epsilon = 1e-14);
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(DynamicsModel::car4(0.0, 0.1).is_err());
        assert!(DynamicsModel::car4(0.5, -0.1).is_err());
        let mut p = BTreeMap::new();
        p.insert("mass".to_string(), -1.0);
        assert!(DynamicsModel::from_id("quadrotor12", &p, Mixing::Rotors, 0.1).is_err());
        assert!(DynamicsModel::from_id("boat", &BTreeMap::new(), Mixing::Rotors, 0.1).is_err());
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let err = car().step(&DVector::zeros(3), &DVector::zeros(2)).unwrap_err();
        assert!(matches!(
            err,
            Error::Dimension {
                expected: 4,
                got: 3,
                ..
            }
        ));
    }

    #[test]
    fn jacobians_agree_with_full_linearization() {
        let model = DynamicsModel::trailer6(0.5, 0.5, 0.1).unwrap();
        let x = DVector::from_vec(vec![0.3, -0.2, 0.4, 0.1, -0.3, 0.2]);
        let u = DVector::from_vec(vec![0.6, -0.4]);
        let (a, b) = model.jacobians(&x, &u).unwrap();
        let lin = model.linearize(&x, &u).unwrap();
        assert_relative_eq!(a, lin.a, epsilon = 1e-15);
        assert_relative_eq!(b, lin.b, epsilon = 1e-15);
    }
}
