//! Deterministic trajectory optimization by iLQG/DDP iterations with box
//! control bounds. Convergence is declared on the projected first-order
//! residual `u - clamp(u - (R u + Bᵀ G_{t+1}))`, so the fixed point does not
//! depend on the regularization path.

mod boxqp;

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::costs::CostModel;
use crate::dynamics::{ControlVector, DynamicsModel, Linearization, StateVector};
use crate::error::{check_dim, Error, Result};
use crate::feedback::{tensor_dot, GainSchedule};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlBounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl ControlBounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let b = Self { lower, upper };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        check_dim("control bounds", self.lower.len(), self.upper.len())?;
        for (j, (lo, hi)) in self.lower.iter().zip(&self.upper).enumerate() {
            if !(lo < hi) {
                return Err(Error::InvalidParameter(format!(
                    "control bound {j}: lower {lo} must be below upper {hi}"
                )));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn clamp(&self, u: &ControlVector) -> ControlVector {
        DVector::from_fn(u.len(), |j, _| u[j].max(self.lower[j]).min(self.upper[j]))
    }

    pub fn contains(&self, u: &ControlVector) -> bool {
        (0..u.len()).all(|j| self.lower[j] <= u[j] && u[j] <= self.upper[j])
    }
}

fn clamp_opt(bounds: Option<&ControlBounds>, u: ControlVector) -> ControlVector {
    match bounds {
        Some(b) => b.clamp(&u),
        None => u,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Regularization {
    pub initial: f64,
    /// Multiplier applied when a backward or forward pass is rejected.
    pub increase: f64,
    /// Divisor applied after an accepted iteration.
    pub decrease: f64,
    pub min: f64,
    pub max: f64,
}

impl Default for Regularization {
    fn default() -> Self {
        Self {
            initial: 1e-6,
            increase: 10.0,
            decrease: 2.0,
            min: 1e-9,
            max: 1e10,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LineSearch {
    pub backtrack: f64,
    pub min_step: f64,
    /// Fraction of the predicted reduction an accepted step must achieve.
    pub armijo: f64,
}

impl Default for LineSearch {
    fn default() -> Self {
        Self {
            backtrack: 0.5,
            min_step: 1e-4,
            armijo: 1e-4,
        }
    }
}

/// Second-order model used inside the solver's backward pass.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HessianMode {
    /// iLQG: dynamics curvature dropped.
    GaussNewton,
    /// DDP: dynamics curvature contracted with the value gradient.
    #[default]
    Full,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub max_iterations: usize,
    pub stationarity_tol: f64,
    pub regularization: Regularization,
    pub line_search: LineSearch,
    pub bounds: Option<ControlBounds>,
    pub hessian: HessianMode,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            stationarity_tol: 1e-8,
            regularization: Regularization::default(),
            line_search: LineSearch::default(),
            bounds: None,
            hessian: HessianMode::default(),
        }
    }
}

impl SolverConfig {
    pub fn validate(&self, n_u: usize) -> Result<()> {
        let reg = &self.regularization;
        let positive = [
            ("stationarity_tol", self.stationarity_tol),
            ("regularization.min", reg.min),
            ("line_search.min_step", self.line_search.min_step),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        if !(reg.min <= reg.initial && reg.initial <= reg.max) {
            return Err(Error::InvalidParameter(
                "regularization must satisfy min <= initial <= max".into(),
            ));
        }
        if !(reg.increase > 1.0 && reg.decrease > 1.0) {
            return Err(Error::InvalidParameter(
                "regularization increase and decrease factors must exceed 1".into(),
            ));
        }
        let ls = &self.line_search;
        if !(ls.backtrack > 0.0 && ls.backtrack < 1.0 && ls.min_step <= 1.0) {
            return Err(Error::InvalidParameter(
                "line search needs 0 < backtrack < 1 and min_step <= 1".into(),
            ));
        }
        if !(ls.armijo > 0.0 && ls.armijo < 1.0) {
            return Err(Error::InvalidParameter("line_search.armijo must lie in (0, 1)".into()));
        }
        if let Some(b) = &self.bounds {
            b.validate()?;
            check_dim("control bounds", n_u, b.dim())?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub iterations: usize,
    pub residual: f64,
    /// Total cost of the initial guess followed by every accepted iterate.
    pub cost_trace: Vec<f64>,
    pub converged: bool,
    pub wall_time: f64,
    pub final_regularization: f64,
}

/// Noise-free nominal `(x̄, ū)` with the quantities needed downstream.
#[derive(Clone, Debug)]
pub struct NominalTrajectory {
    pub states: Vec<StateVector>,
    pub controls: Vec<ControlVector>,
    pub linearizations: Vec<Linearization>,
    /// Suffix sums of step costs plus the terminal cost; entry `N` is terminal.
    pub cost_to_go: Vec<f64>,
    pub bounds: Option<ControlBounds>,
    pub report: SolveReport,
    ilqg: Option<GainSchedule>,
}

impl NominalTrajectory {
    /// Builds a nominal from a control sequence without optimizing it.
    pub fn from_controls(
        model: &DynamicsModel,
        cost: &CostModel,
        x0: &StateVector,
        controls: Vec<ControlVector>,
        bounds: Option<ControlBounds>,
    ) -> Result<Self> {
        let states = forward_rollout(model, x0, &controls)?;
        let cost_to_go = suffix_costs(cost, &states, &controls)?;
        let linearizations = states
            .iter()
            .zip(&controls)
            .map(|(x, u)| model.linearize(x, u))
            .collect::<Result<Vec<_>>>()?;
        let report = SolveReport {
            iterations: 0,
            residual: f64::NAN,
            cost_trace: vec![cost_to_go[0]],
            converged: false,
            wall_time: 0.0,
            final_regularization: 0.0,
        };
        let mut traj = Self {
            states,
            controls,
            linearizations,
            cost_to_go,
            bounds,
            report,
            ilqg: None,
        };
        traj.report.residual = stationarity_residual(&traj, model, cost)?;
        Ok(traj)
    }

    pub fn horizon(&self) -> usize {
        self.controls.len()
    }

    pub fn total_cost(&self) -> f64 {
        self.cost_to_go[0]
    }

    /// Gains from the solver's closing backward pass, if this nominal came
    /// from [`solve_ocp`].
    pub fn ilqg_gains(&self) -> Option<&GainSchedule> {
        self.ilqg.as_ref()
    }
}

/// Deterministic rollout of `step` from `x0`.
pub fn forward_rollout(
    model: &DynamicsModel,
    x0: &StateVector,
    controls: &[ControlVector],
) -> Result<Vec<StateVector>> {
    let mut states = Vec::with_capacity(controls.len() + 1);
    states.push(x0.clone());
    for u in controls {
        let next = model.step(states.last().unwrap(), u)?;
        states.push(next);
    }
    Ok(states)
}

fn suffix_costs(cost: &CostModel, states: &[StateVector], controls: &[ControlVector]) -> Result<Vec<f64>> {
    let n = controls.len();
    let mut ctg = vec![0.0; n + 1];
    ctg[n] = cost.terminal_cost(&states[n]);
    for t in (0..n).rev() {
        ctg[t] = ctg[t + 1] + cost.step_cost(&states[t], &controls[t])?;
    }
    Ok(ctg)
}

fn total_cost(cost: &CostModel, states: &[StateVector], controls: &[ControlVector]) -> Result<f64> {
    let mut total = cost.terminal_cost(&states[controls.len()]);
    for (x, u) in states.iter().zip(controls) {
        total += cost.step_cost(x, u)?;
    }
    Ok(total)
}

/// Maximum over `t` of the projected first-order residual, with the costate
/// `G_t = L_t + G_{t+1} A_t` run backward from the terminal gradient.
pub fn stationarity_residual(traj: &NominalTrajectory, model: &DynamicsModel, cost: &CostModel) -> Result<f64> {
    let n = traj.horizon();
    check_dim("nominal states", n + 1, traj.states.len())?;
    let mut lins = Vec::with_capacity(n);
    for t in 0..n {
        let cached = traj.linearizations.get(t).map(|l| (l.a.clone(), l.b.clone()));
        lins.push(match cached {
            Some(ab) => ab,
            None => model.jacobians(&traj.states[t], &traj.controls[t])?,
        });
    }
    projected_residual(cost, &traj.states, &traj.controls, &lins, traj.bounds.as_ref())
}

fn projected_residual(
    cost: &CostModel,
    states: &[StateVector],
    controls: &[ControlVector],
    lins: &[(DMatrix<f64>, DMatrix<f64>)],
    bounds: Option<&ControlBounds>,
) -> Result<f64> {
    let n = controls.len();
    let (_, mut g, _) = cost.terminal_derivatives(&states[n]);
    let mut residual: f64 = 0.0;
    for t in (0..n).rev() {
        let (a, b) = &lins[t];
        let u = &controls[t];
        let grad = cost.r() * u + b.transpose() * &g;
        let r = u - clamp_opt(bounds, u - &grad);
        residual = residual.max(r.amax());
        let d = cost.cost_derivatives(&states[t], u)?;
        g = d.lx + a.transpose() * &g;
    }
    Ok(residual)
}

/// Per-iteration local model along the current iterate.
struct Expansion {
    lins: Vec<(DMatrix<f64>, DMatrix<f64>)>,
    full: Option<Vec<Linearization>>,
    lx: Vec<DVector<f64>>,
    lxx: Vec<DMatrix<f64>>,
    g_n: DVector<f64>,
    p_n: DMatrix<f64>,
}

fn expand(
    model: &DynamicsModel,
    cost: &CostModel,
    states: &[StateVector],
    controls: &[ControlVector],
    mode: HessianMode,
) -> Result<Expansion> {
    let n = controls.len();
    let mut lins = Vec::with_capacity(n);
    let mut full = (mode == HessianMode::Full).then(|| Vec::with_capacity(n));
    let mut lx = Vec::with_capacity(n);
    let mut lxx = Vec::with_capacity(n);
    for t in 0..n {
        match full.as_mut() {
            Some(f) => {
                let lin = model.linearize(&states[t], &controls[t])?;
                lins.push((lin.a.clone(), lin.b.clone()));
                f.push(lin);
            }
            None => lins.push(model.jacobians(&states[t], &controls[t])?),
        }
        let d = cost.cost_derivatives(&states[t], &controls[t])?;
        lx.push(d.lx);
        lxx.push(d.lxx);
    }
    let (_, g_n, p_n) = cost.terminal_derivatives(&states[n]);
    Ok(Expansion {
        lins,
        full,
        lx,
        lxx,
        g_n,
        p_n,
    })
}

struct BackwardPass {
    feedforward: Vec<DVector<f64>>,
    gains: GainSchedule,
    /// Predicted change `α d1 + α² d2`.
    d1: f64,
    d2: f64,
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Returns the failing time index when a control Hessian is not positive
/// definite. `second_order` adds the dynamics curvature terms when the
/// expansion carries them.
fn backward_pass(
    exp: &Expansion,
    cost: &CostModel,
    controls: &[ControlVector],
    bounds: Option<&ControlBounds>,
    mu: f64,
    second_order: bool,
) -> std::result::Result<BackwardPass, usize> {
    let n = controls.len();
    let nx = exp.g_n.len();
    let nu = cost.n_u();
    let r = cost.r();
    let mut vx = exp.g_n.clone();
    let mut vxx = exp.p_n.clone();
    let mut feedforward = vec![DVector::zeros(nu); n];
    let mut gs = vec![DVector::zeros(nx); n + 1];
    let mut ps = vec![DMatrix::zeros(nx, nx); n + 1];
    let mut ks = vec![DMatrix::zeros(nu, nx); n];
    let mut ss = vec![DMatrix::zeros(nu, nu); n];
    gs[n] = vx.clone();
    ps[n] = vxx.clone();
    let (mut d1, mut d2) = (0.0, 0.0);
    let mut max_asymmetry: f64 = 0.0;
    let (inf_lo, inf_hi) = (
        DVector::from_element(nu, f64::NEG_INFINITY),
        DVector::from_element(nu, f64::INFINITY),
    );

    for t in (0..n).rev() {
        let (a, b) = &exp.lins[t];
        let u = &controls[t];
        let bt = b.transpose();
        let qx = &exp.lx[t] + a.transpose() * &vx;
        let qu = r * u + &bt * &vx;
        let mut qxx = &exp.lxx[t] + a.transpose() * &vxx * a;
        let mut qux = &bt * &vxx * a;
        let quu = symmetrize(&(r + &bt * &vxx * b));
        if let Some(full) = exp.full.as_ref().filter(|_| second_order) {
            qxx += tensor_dot(&vx, &full[t].rxx);
            qux += tensor_dot(&vx, &full[t].rxu).transpose();
        }
        let (quu_reg, qux_reg) = if mu > 0.0 {
            (symmetrize(&(&quu + &bt * b * mu)), &qux + &bt * a * mu)
        } else {
            (quu.clone(), qux.clone())
        };

        let (lo, hi) = match bounds {
            Some(bd) => (
                DVector::from_fn(nu, |j, _| bd.lower[j] - u[j]),
                DVector::from_fn(nu, |j, _| bd.upper[j] - u[j]),
            ),
            None => (inf_lo.clone(), inf_hi.clone()),
        };
        let qp = boxqp::solve(&quu_reg, &qu, &lo, &hi).ok_or(t)?;
        let k = qp.gains(&qux_reg);
        let kff = qp.x.clone();

        d1 += kff.dot(&qu);
        d2 += 0.5 * kff.dot(&(&quu * &kff));
        let kt = k.transpose();
        vx = qx + &kt * (&quu * &kff) + &kt * &qu + qux.transpose() * &kff;
        let raw = qxx + &kt * &quu * &k + &kt * &qux + qux.transpose() * &k;
        max_asymmetry = max_asymmetry.max((&raw - raw.transpose()).amax());
        vxx = symmetrize(&raw);
        if !(vx.iter().chain(vxx.iter()).all(|v| v.is_finite())) {
            return Err(t);
        }
        feedforward[t] = kff;
        gs[t] = vx.clone();
        ps[t] = vxx.clone();
        ks[t] = k;
        ss[t] = quu_reg;
    }
    Ok(BackwardPass {
        feedforward,
        gains: GainSchedule {
            g: gs,
            p: ps,
            k: ks,
            s: ss,
            residual: f64::NAN,
            max_asymmetry,
        },
        d1,
        d2,
    })
}

fn forward_pass(
    model: &DynamicsModel,
    cost: &CostModel,
    states: &[StateVector],
    controls: &[ControlVector],
    pass: &BackwardPass,
    alpha: f64,
    bounds: Option<&ControlBounds>,
) -> Option<(Vec<StateVector>, Vec<ControlVector>, f64)> {
    let n = controls.len();
    let mut xs = Vec::with_capacity(n + 1);
    let mut us = Vec::with_capacity(n);
    xs.push(states[0].clone());
    for t in 0..n {
        let x = &xs[t];
        let du = &pass.feedforward[t] * alpha + &pass.gains.k[t] * (x - &states[t]);
        let u = clamp_opt(bounds, &controls[t] + du);
        let next = model.step(x, &u).ok()?;
        us.push(u);
        xs.push(next);
    }
    let j = total_cost(cost, &xs, &us).ok()?;
    j.is_finite().then_some((xs, us, j))
}

/// Solves the deterministic optimal control problem from `x0` over `n`
/// steps. Non-convergence is reported through `report.converged`; an
/// exhausted regularization schedule is an error.
pub fn solve_ocp(
    model: &DynamicsModel,
    cost: &CostModel,
    x0: &StateVector,
    n: usize,
    cfg: &SolverConfig,
    seed_controls: Option<&[ControlVector]>,
) -> Result<NominalTrajectory> {
    let start = Instant::now();
    if n == 0 {
        return Err(Error::InvalidParameter("horizon N must be at least 1".into()));
    }
    check_dim("x0", model.n_x(), x0.len())?;
    check_dim("cost state dimension", model.n_x(), cost.n_x())?;
    check_dim("cost control dimension", model.n_u(), cost.n_u())?;
    if !x0.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("initial state".into()));
    }
    cfg.validate(model.n_u())?;
    let bounds = cfg.bounds.as_ref();

    let mut controls: Vec<ControlVector> = match seed_controls {
        Some(seed) => {
            check_dim("seed controls", n, seed.len())?;
            seed.iter()
                .map(|u| {
                    check_dim("seed control", model.n_u(), u.len())?;
                    Ok(clamp_opt(bounds, u.clone()))
                })
                .collect::<Result<_>>()?
        }
        None => vec![clamp_opt(bounds, DVector::zeros(model.n_u())); n],
    };
    let mut states = forward_rollout(model, x0, &controls)?;
    let mut cost_now = total_cost(cost, &states, &controls)?;

    let reg = cfg.regularization;
    let mut mu = reg.initial;
    let mut report = SolveReport {
        iterations: 0,
        residual: f64::INFINITY,
        cost_trace: vec![cost_now],
        converged: false,
        wall_time: 0.0,
        final_regularization: mu,
    };

    let mut exp = expand(model, cost, &states, &controls, cfg.hessian)?;
    loop {
        report.residual = projected_residual(cost, &states, &controls, &exp.lins, bounds)?;
        if report.residual <= cfg.stationarity_tol {
            report.converged = true;
            break;
        }
        if report.iterations >= cfg.max_iterations {
            break;
        }
        report.iterations += 1;

        // Backward pass, raising regularization until every Q_uu is PD. Where
        // the curvature terms make Q_uu indefinite, a Gauss-Newton pass at the
        // same regularization is tried first; pushing mu up instead stalls the
        // iteration in nonconvex regions.
        let pass = loop {
            let attempt = backward_pass(&exp, cost, &controls, bounds, mu, true).or_else(|t| {
                if exp.full.is_some() {
                    backward_pass(&exp, cost, &controls, bounds, mu, false)
                } else {
                    Err(t)
                }
            });
            match attempt {
                Ok(p) => break p,
                Err(t) => {
                    mu = (mu * reg.increase).max(reg.min);
                    log::debug!("backward pass failed at t = {t}, mu -> {mu:e}");
                    if mu > reg.max {
                        report.final_regularization = mu;
                        report.wall_time = start.elapsed().as_secs_f64();
                        return Err(Error::LineSearch {
                            report: Box::new(report),
                        });
                    }
                }
            }
        };

        let noise = 1e-12 * (1.0 + cost_now.abs());
        let mut alpha = 1.0;
        let mut accepted = None;
        while alpha >= cfg.line_search.min_step {
            if let Some((xs, us, j)) = forward_pass(model, cost, &states, &controls, &pass, alpha, bounds) {
                let expected = -(alpha * pass.d1 + alpha * alpha * pass.d2);
                let reduction = cost_now - j;
                let ok = if expected > noise {
                    reduction > cfg.line_search.armijo * expected
                } else {
                    // Predicted change is at roundoff level: accept any step
                    // that does not measurably increase the cost.
                    reduction >= -noise
                };
                if ok {
                    accepted = Some((xs, us, j));
                    break;
                }
            }
            alpha *= cfg.line_search.backtrack;
        }

        match accepted {
            Some((xs, us, j)) => {
                states = xs;
                controls = us;
                cost_now = j;
                report.cost_trace.push(j);
                mu = (mu / reg.decrease).max(reg.min);
                log::trace!("iter {} cost {j:.10} alpha {alpha} mu {mu:e}", report.iterations);
                exp = expand(model, cost, &states, &controls, cfg.hessian)?;
            }
            None => {
                mu *= reg.increase;
                log::debug!("line search failed, mu -> {mu:e}");
                if mu > reg.max {
                    report.final_regularization = mu;
                    report.wall_time = start.elapsed().as_secs_f64();
                    return Err(Error::LineSearch {
                        report: Box::new(report),
                    });
                }
            }
        }
    }
    report.final_regularization = mu;

    // Closing iLQG gains: Gauss-Newton pass without regularization, then
    // with the smallest regularization on the schedule that makes every Q_uu
    // PD.
    let ilqg = std::iter::once(0.0)
        .chain(std::iter::successors(Some(mu.max(reg.min)), |m| {
            Some(m * reg.increase).filter(|m| *m <= reg.max)
        }))
        .find_map(|m| backward_pass(&exp, cost, &controls, bounds, m, false).ok())
        .map(|p| {
            let mut g = p.gains;
            g.residual = report.residual;
            g
        });
    let full = match exp.full {
        Some(f) => f,
        None => states
            .iter()
            .zip(&controls)
            .map(|(x, u)| model.linearize(x, u))
            .collect::<Result<Vec<_>>>()?,
    };

    let cost_to_go = suffix_costs(cost, &states, &controls)?;
    report.wall_time = start.elapsed().as_secs_f64();
    Ok(NominalTrajectory {
        states,
        controls,
        linearizations: full,
        cost_to_go,
        bounds: cfg.bounds.clone(),
        report,
        ilqg,
    })
}
