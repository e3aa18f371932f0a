//! JSON scenario files and the embedded presets.
//!
//! A scenario names a model, the boundary conditions, weights, obstacles,
//! solver settings and replanning policy. Obstacles are given either as
//! polygon vertex lists, enclosed by their minimum-volume ellipsoid when the
//! scenario is built, or directly as an ellipsoid.
//!
//! Weight matrices are diagonal and given as vectors. Seed controls are
//! piecewise-constant segments whose step counts must sum to the horizon.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::costs::{mvee, BarrierObstacle, CostModel, Ellipsoid};
use crate::dynamics::{ControlVector, DynamicsModel, Mixing};
use crate::error::{Error, Result};
use crate::simulation::{NoiseMode, Problem, ReplanPolicy, TlqrWeights};
use crate::solver::{ControlBounds, SolverConfig};

pub const DEFAULT_GAMMA: f64 = 1e3;
pub const DEFAULT_RHO: f64 = 1.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub id: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    #[serde(default)]
    pub mixing: Mixing,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Weights {
    pub q: Vec<f64>,
    pub q_f: Vec<f64>,
    pub r: Vec<f64>,
}

fn default_gamma() -> f64 {
    DEFAULT_GAMMA
}

fn default_rho() -> f64 {
    DEFAULT_RHO
}

fn default_positions() -> Vec<usize> {
    vec![0, 1]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ObstacleGeometry {
    Polygon { vertices: Vec<Vec<f64>> },
    Ellipsoid { center: Vec<f64>, shape: Vec<Vec<f64>> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObstacleSpec {
    #[serde(flatten)]
    pub geometry: ObstacleGeometry,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default = "default_positions")]
    pub position_indices: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedSegment {
    pub steps: usize,
    pub control: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    pub model: ModelSpec,
    pub dt: f64,
    pub horizon: usize,
    pub x0: Vec<f64>,
    pub goal: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<ControlBounds>,
    pub cost: Weights,
    #[serde(default)]
    pub obstacles: Vec<ObstacleSpec>,
    /// Weights of the tracking LQR baseline; defaults to the nominal weights.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tlqr: Option<Weights>,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub replan: ReplanPolicy,
    #[serde(default)]
    pub noise_mode: NoiseMode,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub seed_controls: Vec<SeedSegment>,
}

const PRESETS: [(&str, &str); 3] = [
    ("car4_table2", include_str!("../presets/car4_table2.json")),
    ("trailer6_table2", include_str!("../presets/trailer6_table2.json")),
    ("quadrotor12_table2", include_str!("../presets/quadrotor12_table2.json")),
];

pub fn preset_names() -> Vec<&'static str> {
    PRESETS.iter().map(|(n, _)| *n).collect()
}

pub fn preset(name: &str) -> Result<Scenario> {
    let (_, text) = PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| Error::Scenario(format!("no preset named {name:?} (have {:?})", preset_names())))?;
    Scenario::from_json(text)
}

/// Loads a preset by name, or a JSON file by path.
pub fn load_scenario(name_or_path: &str) -> Result<Scenario> {
    if PRESETS.iter().any(|(n, _)| *n == name_or_path) {
        return preset(name_or_path);
    }
    Scenario::from_path(Path::new(name_or_path))
}

fn diag(v: &[f64]) -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_row_slice(v))
}

fn field_len(field: &str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Scenario(format!(
            "{field}: expected {expected} entries, got {got}"
        )))
    }
}

fn finite(field: &str, v: &[f64]) -> Result<()> {
    match v.iter().position(|x| !x.is_finite()) {
        Some(i) => Err(Error::Scenario(format!("{field}[{i}] is not finite"))),
        None => Ok(()),
    }
}

impl ObstacleSpec {
    pub fn build(&self) -> Result<BarrierObstacle> {
        let ellipsoid = match &self.geometry {
            ObstacleGeometry::Polygon { vertices } => {
                let pts: Vec<DVector<f64>> = vertices.iter().map(|p| DVector::from_row_slice(p)).collect();
                mvee(&pts, crate::costs::mvee::DEFAULT_TOL)?
            }
            ObstacleGeometry::Ellipsoid { center, shape } => {
                let d = center.len();
                if shape.len() != d || shape.iter().any(|r| r.len() != d) {
                    return Err(Error::Scenario(format!("ellipsoid shape must be {d}x{d}")));
                }
                let e = DMatrix::from_fn(d, d, |i, j| shape[i][j]);
                Ellipsoid::new(DVector::from_row_slice(center), e)?
            }
        };
        BarrierObstacle::new(ellipsoid, self.gamma, self.rho, self.position_indices.clone())
    }
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        let s: Self = serde_json::from_str(text).map_err(|e| Error::Scenario(e.to_string()))?;
        s.to_problem()?;
        Ok(s)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Scenario(m) => Error::Scenario(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn build_model(&self) -> Result<DynamicsModel> {
        DynamicsModel::from_id(&self.model.id, &self.model.params, self.model.mixing, self.dt)
    }

    pub fn build_cost(&self, n_x: usize, n_u: usize) -> Result<CostModel> {
        let w = &self.cost;
        field_len("cost.q", n_x, w.q.len())?;
        field_len("cost.q_f", n_x, w.q_f.len())?;
        field_len("cost.r", n_u, w.r.len())?;
        let obstacles = self
            .obstacles
            .iter()
            .enumerate()
            .map(|(k, o)| o.build().map_err(|e| Error::Scenario(format!("obstacles[{k}]: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        CostModel::new(
            diag(&w.q),
            diag(&w.q_f),
            diag(&w.r),
            DVector::from_row_slice(&self.goal),
            obstacles,
        )
        .map_err(|e| Error::Scenario(format!("cost: {e}")))
    }

    pub fn seed(&self, n_u: usize) -> Result<Option<Vec<ControlVector>>> {
        if self.seed_controls.is_empty() {
            return Ok(None);
        }
        let mut out = Vec::with_capacity(self.horizon);
        for (k, seg) in self.seed_controls.iter().enumerate() {
            field_len(&format!("seed_controls[{k}].control"), n_u, seg.control.len())?;
            out.extend(std::iter::repeat_n(DVector::from_row_slice(&seg.control), seg.steps));
        }
        field_len("seed_controls (total steps)", self.horizon, out.len())?;
        Ok(Some(out))
    }

    /// Validates every field and assembles the solver and rollout inputs.
    pub fn to_problem(&self) -> Result<Problem> {
        let model = self.build_model().map_err(|e| Error::Scenario(format!("model: {e}")))?;
        let (n_x, n_u) = (model.n_x(), model.n_u());
        if self.horizon == 0 {
            return Err(Error::Scenario("horizon must be at least 1".into()));
        }
        field_len("x0", n_x, self.x0.len())?;
        field_len("goal", n_x, self.goal.len())?;
        finite("x0", &self.x0)?;
        finite("goal", &self.goal)?;
        let cost = self.build_cost(n_x, n_u)?;

        let mut solver = self.solver.clone();
        if solver.bounds.is_some() {
            return Err(Error::Scenario(
                "give control bounds at the top level, not under solver".into(),
            ));
        }
        if let Some(b) = &self.bounds {
            field_len("bounds.lower", n_u, b.lower.len())?;
            b.validate().map_err(|e| Error::Scenario(format!("bounds: {e}")))?;
            solver.bounds = Some(b.clone());
        }
        solver
            .validate(n_u)
            .map_err(|e| Error::Scenario(format!("solver: {e}")))?;
        self.replan
            .validate()
            .map_err(|e| Error::Scenario(format!("replan: {e}")))?;

        let tlqr = match &self.tlqr {
            Some(w) => {
                field_len("tlqr.q", n_x, w.q.len())?;
                field_len("tlqr.q_f", n_x, w.q_f.len())?;
                field_len("tlqr.r", n_u, w.r.len())?;
                if w.r.iter().any(|&r| !(r > 0.0)) || w.q.iter().chain(&w.q_f).any(|&q| !(q >= 0.0)) {
                    return Err(Error::Scenario("tlqr: need q, q_f >= 0 and r > 0".into()));
                }
                TlqrWeights {
                    q: diag(&w.q),
                    r: diag(&w.r),
                    q_f: diag(&w.q_f),
                }
            }
            None => TlqrWeights {
                q: cost.q().clone(),
                r: cost.r().clone(),
                q_f: cost.q_f().clone(),
            },
        };
        let seed_controls = self.seed(n_u)?;
        Ok(Problem {
            model,
            cost,
            x0: DVector::from_row_slice(&self.x0),
            horizon: self.horizon,
            solver,
            seed_controls,
            tlqr,
            replan: self.replan,
        })
    }
}
