//! Closed-loop execution under noise: perturbation feedback with
//! cost-triggered replanning, the shrinking-horizon NMPC baseline, and the
//! Monte Carlo driver.

mod monte_carlo;

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::costs::CostModel;
use crate::dynamics::{ControlVector, DynamicsModel, StateVector};
use crate::error::{check_dim, Error, Result};
use crate::feedback::{backward_pass_tlqr, backward_pass_tpfc, ilqg_gains, GainSchedule};
use crate::solver::{solve_ocp, NominalTrajectory, SolverConfig};

pub use monte_carlo::{
    monte_carlo, seed_averaged_control_deviation, write_csv, EpsilonStats, MonteCarloSummary, RunRecord, TimingRecord,
};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMode {
    /// `ε √dT ω` added to the state after every step.
    #[default]
    Process,
    /// Gaussian of standard deviation `ε σ_j` added to each applied control,
    /// where `σ_j` is the larger bound magnitude of component `j`.
    Actuator,
}

impl std::str::FromStr for NoiseMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "process" => Ok(Self::Process),
            "actuator" => Ok(Self::Actuator),
            other => Err(Error::InvalidParameter(format!(
                "noise mode must be process or actuator, got {other:?}"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub eps: f64,
    pub dt: f64,
    pub seed: u64,
    pub mode: NoiseMode,
}

impl NoiseConfig {
    pub fn new(eps: f64, dt: f64, seed: u64) -> Result<Self> {
        if !(eps >= 0.0 && eps.is_finite()) {
            return Err(Error::InvalidParameter(format!("noise scale must be >= 0, got {eps}")));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("dT must be positive, got {dt}")));
        }
        Ok(Self {
            eps,
            dt,
            seed,
            mode: NoiseMode::Process,
        })
    }

    pub fn with_mode(mut self, mode: NoiseMode) -> Self {
        self.mode = mode;
        self
    }

    /// The run's dedicated random stream.
    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }
}

fn standard_normal<R: Rng>(rng: &mut R, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Adds `ε √dT ω`, `ω ~ N(0, I)`, to a noise-free successor state.
pub fn disturb<R: Rng>(noise: &NoiseConfig, rng: &mut R, x_next: &StateVector) -> StateVector {
    if noise.eps == 0.0 {
        return x_next.clone();
    }
    x_next + standard_normal(rng, x_next.len()) * (noise.eps * noise.dt.sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReplanPolicy {
    pub enabled: bool,
    /// Replan once the cost fraction reaches this; zero replans every step.
    pub c_th: f64,
    /// Also replan unconditionally one step before the horizon ends.
    pub replan_at_final_step: bool,
}

impl Default for ReplanPolicy {
    fn default() -> Self {
        Self {
            enabled: true,
            c_th: 0.05,
            replan_at_final_step: false,
        }
    }
}

impl ReplanPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(self.c_th >= 0.0 && self.c_th.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "replan threshold must be >= 0, got {}",
                self.c_th
            )));
        }
        Ok(())
    }
}

/// Weights for the separately tuned tracking LQR.
#[derive(Clone, Debug, PartialEq)]
pub struct TlqrWeights {
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub q_f: DMatrix<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Controller {
    Tpfc,
    Nmpc,
    Tlqr,
    Ilqg,
}

impl Controller {
    pub const ALL: [Controller; 4] = [Self::Tpfc, Self::Nmpc, Self::Tlqr, Self::Ilqg];

    pub fn id(self) -> &'static str {
        match self {
            Self::Tpfc => "tpfc",
            Self::Nmpc => "nmpc",
            Self::Tlqr => "tlqr",
            Self::Ilqg => "ilqg",
        }
    }
}

impl std::fmt::Display for Controller {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.id())
    }
}

impl std::str::FromStr for Controller {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.id() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown controller {s:?}")))
    }
}

/// Everything a rollout needs besides the noise.
#[derive(Clone, Debug)]
pub struct Problem {
    pub model: DynamicsModel,
    pub cost: CostModel,
    pub x0: StateVector,
    pub horizon: usize,
    pub solver: SolverConfig,
    pub seed_controls: Option<Vec<ControlVector>>,
    pub tlqr: TlqrWeights,
    pub replan: ReplanPolicy,
}

impl Problem {
    pub fn validate(&self) -> Result<()> {
        check_dim("x0", self.model.n_x(), self.x0.len())?;
        check_dim("cost state dimension", self.model.n_x(), self.cost.n_x())?;
        check_dim("cost control dimension", self.model.n_u(), self.cost.n_u())?;
        if self.horizon == 0 {
            return Err(Error::InvalidParameter("horizon N must be at least 1".into()));
        }
        self.solver.validate(self.model.n_u())?;
        self.replan.validate()
    }

    pub fn solve(&self, x0: &StateVector, horizon: usize, seed: Option<&[ControlVector]>) -> Result<NominalTrajectory> {
        solve_ocp(&self.model, &self.cost, x0, horizon, &self.solver, seed)
    }

    fn gains(&self, traj: &NominalTrajectory, controller: Controller) -> Result<GainSchedule> {
        match controller {
            Controller::Tpfc => backward_pass_tpfc(traj, &self.cost),
            Controller::Tlqr => backward_pass_tlqr(traj, &self.tlqr.q, &self.tlqr.r, &self.tlqr.q_f),
            Controller::Ilqg => ilqg_gains(traj),
            Controller::Nmpc => Err(Error::InvalidParameter("NMPC has no gain schedule".into())),
        }
    }
}

/// The offline stage shared by every rollout: one nominal and all three
/// gain schedules.
#[derive(Clone, Debug)]
pub struct OfflinePlan {
    pub nominal: NominalTrajectory,
    pub tpfc: GainSchedule,
    pub tlqr: GainSchedule,
    pub ilqg: GainSchedule,
    /// Seconds spent solving the nominal and synthesizing all gains.
    pub plan_time: f64,
}

impl OfflinePlan {
    pub fn compute(problem: &Problem) -> Result<Self> {
        problem.validate()?;
        let start = Instant::now();
        let nominal = problem.solve(&problem.x0, problem.horizon, problem.seed_controls.as_deref())?;
        let tpfc = problem.gains(&nominal, Controller::Tpfc)?;
        let tlqr = problem.gains(&nominal, Controller::Tlqr)?;
        let ilqg = problem.gains(&nominal, Controller::Ilqg)?;
        Ok(Self {
            nominal,
            tpfc,
            tlqr,
            ilqg,
            plan_time: start.elapsed().as_secs_f64(),
        })
    }

    pub fn gains(&self, controller: Controller) -> Option<&GainSchedule> {
        match controller {
            Controller::Tpfc => Some(&self.tpfc),
            Controller::Tlqr => Some(&self.tlqr),
            Controller::Ilqg => Some(&self.ilqg),
            Controller::Nmpc => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RolloutResult {
    pub controller: Controller,
    pub eps: f64,
    pub seed: u64,
    pub states: Vec<StateVector>,
    /// Commanded controls, after clamping and before actuator noise.
    pub controls: Vec<ControlVector>,
    pub cost: f64,
    pub replan_times: Vec<usize>,
    /// Replans that returned without meeting the stationarity tolerance.
    pub solver_nonconverged: usize,
    /// Replans whose T-PFC gains could not be formed and were replaced by
    /// the iLQG gains of the same plan.
    pub gain_fallbacks: usize,
    /// Seconds per policy evaluation.
    pub policy_times: Vec<f64>,
    /// Seconds spent planning inside this rollout (excludes the shared
    /// offline plan).
    pub plan_time: f64,
}

impl RolloutResult {
    pub fn replans(&self) -> usize {
        self.replan_times.len()
    }

    pub fn exec_time(&self) -> f64 {
        self.policy_times.iter().sum()
    }

    /// Equality on everything except wall-clock measurements.
    pub fn same_outcome(&self, other: &Self) -> bool {
        self.controller == other.controller
            && self.eps.to_bits() == other.eps.to_bits()
            && self.seed == other.seed
            && self.states == other.states
            && self.controls == other.controls
            && self.cost.to_bits() == other.cost.to_bits()
            && self.replan_times == other.replan_times
            && self.solver_nonconverged == other.solver_nonconverged
            && self.gain_fallbacks == other.gain_fallbacks
    }
}

/// `ū_t + K_t (x_t - x̄_t)`, clamped to the nominal's control bounds.
pub fn tpfc_policy(traj: &NominalTrajectory, gains: &GainSchedule, x: &StateVector, t: usize) -> ControlVector {
    let u = &traj.controls[t] + &gains.k[t] * (x - &traj.states[t]);
    match &traj.bounds {
        Some(b) => b.clamp(&u),
        None => u,
    }
}

/// Deviation of the cost incurred since the last plan from what the plan
/// predicted for the same stretch, relative to the plan's total.
pub fn cost_fraction(traj: &NominalTrajectory, incurred_since_plan: f64, t: usize) -> f64 {
    let total = traj.cost_to_go[0];
    if total == 0.0 {
        return 0.0;
    }
    let predicted = total - traj.cost_to_go[t];
    ((incurred_since_plan - predicted) / total).abs()
}

fn actuator_scale(traj: &NominalTrajectory, n_u: usize) -> DVector<f64> {
    match &traj.bounds {
        Some(b) => DVector::from_fn(n_u, |j, _| b.lower[j].abs().max(b.upper[j].abs())),
        None => DVector::from_element(n_u, 1.0),
    }
}

/// Applies one noisy step; the draw order is identical for every
/// controller so that seeds give common random numbers.
fn advance<R: Rng>(
    model: &DynamicsModel,
    noise: &NoiseConfig,
    rng: &mut R,
    sigma: &DVector<f64>,
    x: &StateVector,
    u: &ControlVector,
) -> Result<StateVector> {
    match noise.mode {
        NoiseMode::Process => Ok(disturb(noise, rng, &model.step(x, u)?)),
        NoiseMode::Actuator => {
            let applied = if noise.eps == 0.0 {
                u.clone()
            } else {
                u + standard_normal(rng, u.len()).component_mul(sigma) * noise.eps
            };
            model.step(x, &applied)
        }
    }
}

struct Partial {
    controller: Controller,
    noise: NoiseConfig,
    states: Vec<StateVector>,
    controls: Vec<ControlVector>,
    cost: f64,
    replan_times: Vec<usize>,
    nonconverged: usize,
    gain_fallbacks: usize,
    policy_times: Vec<f64>,
    plan_time: f64,
}

impl Partial {
    fn new(controller: Controller, noise: &NoiseConfig, x0: StateVector, n: usize) -> Self {
        let mut states = Vec::with_capacity(n + 1);
        states.push(x0);
        Self {
            controller,
            noise: *noise,
            states,
            controls: Vec::with_capacity(n),
            cost: 0.0,
            replan_times: Vec::new(),
            nonconverged: 0,
            gain_fallbacks: 0,
            policy_times: Vec::with_capacity(n),
            plan_time: 0.0,
        }
    }

    fn finish(self) -> RolloutResult {
        RolloutResult {
            controller: self.controller,
            eps: self.noise.eps,
            seed: self.noise.seed,
            states: self.states,
            controls: self.controls,
            cost: self.cost,
            replan_times: self.replan_times,
            solver_nonconverged: self.nonconverged,
            gain_fallbacks: self.gain_fallbacks,
            policy_times: self.policy_times,
            plan_time: self.plan_time,
        }
    }

    fn fail(self, step: usize, source: Error) -> Error {
        Error::Rollout {
            step,
            source: Box::new(source),
            partial: Some(Box::new(self.finish())),
        }
    }
}

/// Controls of a noise-free run of the current feedback policy from `x`.
/// Tracking the old plan keeps the seed close to it, which an open-loop
/// replay of the old controls from a perturbed state does not.
fn closed_loop_seed(
    model: &DynamicsModel,
    traj: &NominalTrajectory,
    gains: &GainSchedule,
    x: &StateVector,
    from: usize,
) -> Result<Vec<ControlVector>> {
    let mut x = x.clone();
    let mut seed = Vec::with_capacity(traj.horizon() - from);
    for s in from..traj.horizon() {
        let u = tpfc_policy(traj, gains, &x, s);
        x = model.step(&x, &u)?;
        seed.push(u);
    }
    Ok(seed)
}

/// Solves from `x` warm-started with `seed`, retrying once from zero
/// controls when the warm start leads the solver astray.
fn replan(problem: &Problem, x: &StateVector, seed: &[ControlVector]) -> Result<NominalTrajectory> {
    problem.solve(x, seed.len(), Some(seed)).or_else(|e| {
        log::debug!("warm-started replan failed ({e}), retrying from zero controls");
        problem.solve(x, seed.len(), None)
    })
}

/// Perturbation feedback about a stored plan with cost-triggered
/// replanning. Works for any controller with a gain schedule.
pub fn run_feedback(
    problem: &Problem,
    plan: &OfflinePlan,
    controller: Controller,
    noise: &NoiseConfig,
) -> Result<RolloutResult> {
    let gains = plan
        .gains(controller)
        .ok_or_else(|| Error::InvalidParameter(format!("{controller} is not a feedback controller")))?;
    let n = plan.nominal.horizon();
    let mut rng = noise.rng();
    let sigma = actuator_scale(&plan.nominal, problem.model.n_u());
    let mut out = Partial::new(controller, noise, plan.nominal.states[0].clone(), n);

    // Replans replace the borrowed offline plan with owned data.
    let mut replanned: Option<(NominalTrajectory, GainSchedule)> = None;
    let mut t0 = 0;
    let mut since_plan = 0.0;

    for t in 0..n {
        let x = out.states[t].clone();
        let policy = &problem.replan;
        if t > 0 && policy.enabled {
            let traj = replanned.as_ref().map_or(&plan.nominal, |r| &r.0);
            let trigger =
                cost_fraction(traj, since_plan, t - t0) >= policy.c_th || (policy.replan_at_final_step && t == n - 1);
            if trigger {
                let start = Instant::now();
                let k = replanned.as_ref().map_or(gains, |r| &r.1);
                let fresh = closed_loop_seed(&problem.model, traj, k, &x, t - t0)
                    .and_then(|seed| replan(problem, &x, &seed))
                    .and_then(|tr| {
                        let g = match problem.gains(&tr, controller) {
                            // An unconverged replan can leave S indefinite;
                            // track it with the solver's own gains instead.
                            Err(Error::NotPositiveDefinite { t: bad }) if controller == Controller::Tpfc => {
                                log::warn!("replan at step {t}: S not positive definite at {bad}, using iLQG gains");
                                out.gain_fallbacks += 1;
                                ilqg_gains(&tr)?
                            }
                            other => other?,
                        };
                        Ok((tr, g))
                    });
                out.plan_time += start.elapsed().as_secs_f64();
                match fresh {
                    Ok((tr, g)) => {
                        if !tr.report.converged {
                            out.nonconverged += 1;
                        }
                        replanned = Some((tr, g));
                        t0 = t;
                        since_plan = 0.0;
                        out.replan_times.push(t);
                    }
                    Err(e) => return Err(out.fail(t, e)),
                }
            }
        }
        let (traj, k) = match &replanned {
            Some((tr, g)) => (tr, g),
            None => (&plan.nominal, gains),
        };

        let start = Instant::now();
        let u = tpfc_policy(traj, k, &x, t - t0);
        out.policy_times.push(start.elapsed().as_secs_f64());

        let c = match problem.cost.step_cost(&x, &u) {
            Ok(c) => c,
            Err(e) => return Err(out.fail(t, e)),
        };
        out.cost += c;
        since_plan += c;
        match advance(&problem.model, noise, &mut rng, &sigma, &x, &u) {
            Ok(next) => {
                out.controls.push(u);
                out.states.push(next);
            }
            Err(e) => return Err(out.fail(t, e)),
        }
    }
    out.cost += problem.cost.terminal_cost(&out.states[n]);
    Ok(out.finish())
}

pub fn run_tpfc(problem: &Problem, plan: &OfflinePlan, noise: &NoiseConfig) -> Result<RolloutResult> {
    run_feedback(problem, plan, Controller::Tpfc, noise)
}

pub fn run_tlqr(problem: &Problem, plan: &OfflinePlan, noise: &NoiseConfig) -> Result<RolloutResult> {
    run_feedback(problem, plan, Controller::Tlqr, noise)
}

pub fn run_ilqg_feedback(problem: &Problem, plan: &OfflinePlan, noise: &NoiseConfig) -> Result<RolloutResult> {
    run_feedback(problem, plan, Controller::Ilqg, noise)
}

/// Shrinking-horizon NMPC: re-solve over the remaining `N - t` steps from
/// the measured state, warm-started from the previous solution's tail, and
/// apply the first control. Step 0 uses the offline nominal.
pub fn run_nmpc(problem: &Problem, plan: &OfflinePlan, noise: &NoiseConfig) -> Result<RolloutResult> {
    let n = plan.nominal.horizon();
    let mut rng = noise.rng();
    let sigma = actuator_scale(&plan.nominal, problem.model.n_u());
    let mut out = Partial::new(Controller::Nmpc, noise, plan.nominal.states[0].clone(), n);
    // The warm start for step t tracks the step t-1 solution with that
    // solution's own iLQG gains; with no noise this is its control tail.
    let mut current: Option<NominalTrajectory> = None;

    for t in 0..n {
        let x = out.states[t].clone();
        if t > 0 {
            let start = Instant::now();
            let prev = current.as_ref().unwrap_or(&plan.nominal);
            let offset = if current.is_some() { 1 } else { t };
            let seed = match prev.ilqg_gains() {
                Some(k) => closed_loop_seed(&problem.model, prev, k, &x, offset),
                None => Ok(prev.controls[offset..].to_vec()),
            };
            let solved = seed.and_then(|seed| replan(problem, &x, &seed));
            out.plan_time += start.elapsed().as_secs_f64();
            match solved {
                Ok(tr) => {
                    if !tr.report.converged {
                        out.nonconverged += 1;
                    }
                    current = Some(tr);
                    out.replan_times.push(t);
                }
                Err(e) => return Err(out.fail(t, e)),
            }
        }
        let u = current.as_ref().unwrap_or(&plan.nominal).controls[0].clone();
        out.policy_times.push(0.0);
        let c = match problem.cost.step_cost(&x, &u) {
            Ok(c) => c,
            Err(e) => return Err(out.fail(t, e)),
        };
        out.cost += c;
        match advance(&problem.model, noise, &mut rng, &sigma, &x, &u) {
            Ok(next) => {
                out.controls.push(u);
                out.states.push(next);
            }
            Err(e) => return Err(out.fail(t, e)),
        }
    }
    out.cost += problem.cost.terminal_cost(&out.states[n]);
    Ok(out.finish())
}

pub fn run(
    problem: &Problem,
    plan: &OfflinePlan,
    controller: Controller,
    noise: &NoiseConfig,
) -> Result<RolloutResult> {
    match controller {
        Controller::Nmpc => run_nmpc(problem, plan, noise),
        c => run_feedback(problem, plan, c, noise),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_noise_is_identity() {
        let noise = NoiseConfig::new(0.0, 0.1, 7).unwrap();
        let x = DVector::from_vec(vec![1.0, -2.0, 3.0]);
        assert_eq!(disturb(&noise, &mut noise.rng(), &x), x);
    }

    #[test]
    fn rejects_negative_noise() {
        assert!(NoiseConfig::new(-0.1, 0.1, 0).is_err());
        assert!(NoiseConfig::new(0.1, 0.0, 0).is_err());
    }

    #[test]
    fn controller_ids_round_trip() {
        for c in Controller::ALL {
            assert_eq!(c.id().parse::<Controller>().unwrap(), c);
        }
        assert!("lqg".parse::<Controller>().is_err());
    }
}
