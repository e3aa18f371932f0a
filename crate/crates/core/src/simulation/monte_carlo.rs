use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{run, Controller, NoiseConfig, NoiseMode, OfflinePlan, Problem, RolloutResult};
use crate::error::{Error, Result};
use crate::solver::NominalTrajectory;

/// One row of the per-run CSV. Timing lives in [`TimingRecord`] so that
/// this file is identical across reruns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub controller: Controller,
    pub eps: f64,
    pub seed: u64,
    pub cost: f64,
    pub replans: usize,
    pub solver_nonconverged: usize,
    pub gain_fallbacks: usize,
}

impl From<&RolloutResult> for RunRecord {
    fn from(r: &RolloutResult) -> Self {
        Self {
            controller: r.controller,
            eps: r.eps,
            seed: r.seed,
            cost: r.cost,
            replans: r.replans(),
            solver_nonconverged: r.solver_nonconverged,
            gain_fallbacks: r.gain_fallbacks,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingRecord {
    pub controller: Controller,
    pub eps: f64,
    pub seed: u64,
    pub plan_ms: f64,
    pub exec_ms: f64,
}

impl From<&RolloutResult> for TimingRecord {
    fn from(r: &RolloutResult) -> Self {
        Self {
            controller: r.controller,
            eps: r.eps,
            seed: r.seed,
            plan_ms: r.plan_time * 1e3,
            exec_ms: r.exec_time() * 1e3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsilonStats {
    pub eps: f64,
    pub runs: usize,
    pub mean_cost: f64,
    /// Sample standard deviation; zero for a single run.
    pub std_cost: f64,
    pub mean_replans: f64,
    pub solver_nonconverged: usize,
    pub gain_fallbacks: usize,
    /// Offline plan (counted once) plus every run's planning and policy time.
    pub total_wall_time: f64,
}

impl EpsilonStats {
    pub fn from_runs(eps: f64, results: &[RolloutResult], offline_plan_time: f64) -> Self {
        let n = results.len() as f64;
        let mean = results.iter().map(|r| r.cost).sum::<f64>() / n;
        let var = if results.len() > 1 {
            results.iter().map(|r| (r.cost - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Self {
            eps,
            runs: results.len(),
            mean_cost: mean,
            std_cost: var.sqrt(),
            mean_replans: results.iter().map(|r| r.replans() as f64).sum::<f64>() / n,
            solver_nonconverged: results.iter().map(|r| r.solver_nonconverged).sum(),
            gain_fallbacks: results.iter().map(|r| r.gain_fallbacks).sum(),
            total_wall_time: offline_plan_time + results.iter().map(|r| r.plan_time + r.exec_time()).sum::<f64>(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloSummary {
    pub controller: Controller,
    pub eps_grid: Vec<f64>,
    pub runs: usize,
    pub base_seed: u64,
    pub offline_plan_time: f64,
    pub stats: Vec<EpsilonStats>,
}

impl MonteCarloSummary {
    pub fn at(&self, eps: f64) -> Option<&EpsilonStats> {
        self.stats.iter().find(|s| s.eps == eps)
    }
}

fn thread_pool() -> Option<rayon::ThreadPool> {
    let n: usize = std::env::var("TPFC_THREADS").ok()?.trim().parse().ok()?;
    if n == 0 {
        return None;
    }
    rayon::ThreadPoolBuilder::new().num_threads(n).build().ok()
}

/// Runs seeds `base_seed .. base_seed + runs` at every `ε` of the grid.
/// The same seeds are used for every controller, so comparisons share
/// their random numbers. Results come back grouped by `ε`, in seed order.
pub fn monte_carlo(
    problem: &Problem,
    plan: &OfflinePlan,
    controller: Controller,
    eps_grid: &[f64],
    runs: usize,
    base_seed: u64,
    mode: NoiseMode,
) -> Result<(MonteCarloSummary, Vec<Vec<RolloutResult>>)> {
    if runs == 0 {
        return Err(Error::InvalidParameter("runs must be at least 1".into()));
    }
    let dt = problem.model.dt();
    let job = |eps: f64| -> Result<Vec<RolloutResult>> {
        (0..runs as u64)
            .into_par_iter()
            .map(|i| {
                let seed = base_seed.wrapping_add(i);
                let noise = NoiseConfig::new(eps, dt, seed)?.with_mode(mode);
                run(problem, plan, controller, &noise).map_err(|e| Error::Seeded {
                    seed,
                    source: Box::new(e),
                })
            })
            .collect()
    };
    let all = |grid: &[f64]| grid.iter().map(|&eps| job(eps)).collect::<Result<Vec<_>>>();
    let results = match thread_pool() {
        Some(pool) => pool.install(|| all(eps_grid)),
        None => all(eps_grid),
    }?;

    let stats = eps_grid
        .iter()
        .zip(&results)
        .map(|(&eps, rs)| EpsilonStats::from_runs(eps, rs, plan.plan_time))
        .collect();
    Ok((
        MonteCarloSummary {
            controller,
            eps_grid: eps_grid.to_vec(),
            runs,
            base_seed,
            offline_plan_time: plan.plan_time,
            stats,
        },
        results,
    ))
}

/// RMS over time of the gap between the seed-averaged executed control and
/// the nominal control, relative to the RMS nominal control.
pub fn seed_averaged_control_deviation(results: &[RolloutResult], nominal: &NominalTrajectory) -> f64 {
    let n = nominal.horizon();
    let runs = results.len() as f64;
    let (mut gap, mut size) = (0.0, 0.0);
    for t in 0..n {
        let mean = results
            .iter()
            .map(|r| &r.controls[t])
            .fold(nominal.controls[t].scale(0.0), |acc, u| acc + u)
            / runs;
        gap += (mean - &nominal.controls[t]).norm_squared();
        size += nominal.controls[t].norm_squared();
    }
    if size == 0.0 {
        return gap.sqrt();
    }
    (gap / size).sqrt()
}

pub fn write_csv<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
