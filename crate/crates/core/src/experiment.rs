//! Monte Carlo studies over an ε grid, written out as CSV, JSON and SVG.
//!
//! A plan names a scenario, the controllers to compare, the noise grid and
//! the seeds. All controllers share one offline plan and the same seeds.
//! Artifacts are written as soon as each controller finishes, and
//! `manifest.json` records what exists and whether the run completed, so a
//! failure part-way leaves usable partial output.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plot::{emit_plot, Figure, PlotKind, Series};
use crate::scenario::{load_scenario, Scenario};
use crate::simulation::{
    monte_carlo, seed_averaged_control_deviation, write_csv, Controller, MonteCarloSummary, NoiseMode, OfflinePlan,
    Problem, RolloutResult, RunRecord, TimingRecord,
};

pub const DEFAULT_EPS_GRID: [f64; 5] = [0.05, 0.1, 0.15, 0.2, 0.25];
pub const DEFAULT_RUNS: usize = 100;
pub const FAST_RUNS: usize = 20;

fn default_controllers() -> Vec<Controller> {
    vec![Controller::Tpfc, Controller::Nmpc, Controller::Tlqr]
}

fn default_grid() -> Vec<f64> {
    DEFAULT_EPS_GRID.to_vec()
}

fn default_runs() -> usize {
    DEFAULT_RUNS
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPlan {
    /// Preset name or path to a scenario file.
    pub scenario: String,
    #[serde(default = "default_controllers")]
    pub controllers: Vec<Controller>,
    #[serde(default = "default_grid")]
    pub eps_grid: Vec<f64>,
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "default_out")]
    pub out_dir: PathBuf,
    /// Overrides the scenario's noise mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_mode: Option<NoiseMode>,
}

impl ExperimentPlan {
    pub fn new(scenario: impl Into<String>) -> Self {
        Self {
            scenario: scenario.into(),
            controllers: default_controllers(),
            eps_grid: default_grid(),
            runs: DEFAULT_RUNS,
            base_seed: 0,
            out_dir: default_out(),
            noise_mode: None,
        }
    }

    /// Reads a plan file. A preset name or a scenario file is also accepted
    /// and gets the default plan around it.
    pub fn load(arg: &str) -> Result<Self> {
        let path = Path::new(arg);
        if !path.is_file() {
            load_scenario(arg)?;
            return Ok(Self::new(arg));
        }
        let text = std::fs::read_to_string(path)?;
        let value: serde_json::Value = serde_json::from_str(&text)?;
        if value.get("model").is_some() {
            Scenario::from_path(path)?;
            return Ok(Self::new(arg));
        }
        let mut plan: Self = serde_json::from_value(value).map_err(|e| Error::Scenario(format!("{arg}: {e}")))?;
        // Relative scenario paths are taken from the plan's directory.
        let rel = Path::new(&plan.scenario);
        if rel.is_relative() && !crate::scenario::preset_names().contains(&plan.scenario.as_str()) {
            if let Some(dir) = path.parent() {
                plan.scenario = dir.join(rel).to_string_lossy().into_owned();
            }
        }
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(Error::InvalidParameter("runs must be at least 1".into()));
        }
        if self.controllers.is_empty() {
            return Err(Error::InvalidParameter("controller list is empty".into()));
        }
        if self.eps_grid.is_empty() {
            return Err(Error::InvalidParameter("ε grid is empty".into()));
        }
        if self.eps_grid.iter().any(|e| !(*e >= 0.0 && e.is_finite())) {
            return Err(Error::InvalidParameter("ε grid values must be finite and >= 0".into()));
        }
        if self.eps_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter("ε grid must be strictly ascending".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlDeviation {
    pub controller: Controller,
    pub eps: f64,
    /// RMS gap between the seed-averaged and the nominal control, relative
    /// to the RMS nominal control.
    pub relative: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub plan: ExperimentPlan,
    pub scenario: String,
    pub noise_mode: NoiseMode,
    pub nominal_cost: f64,
    pub nominal_iterations: usize,
    pub nominal_residual: f64,
    pub offline_plan_time: f64,
    pub controllers: Vec<MonteCarloSummary>,
    pub control_deviation: Vec<ControlDeviation>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub complete: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub files: Vec<String>,
}

struct Writer {
    dir: PathBuf,
    manifest: Manifest,
}

impl Writer {
    fn note(&mut self, name: &str) {
        if !self.manifest.files.iter().any(|f| f == name) {
            self.manifest.files.push(name.to_string());
        }
    }

    fn path(&mut self, name: &str) -> PathBuf {
        self.note(name);
        self.dir.join(name)
    }

    fn save_manifest(&self) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.manifest)?;
        std::fs::write(self.dir.join("manifest.json"), text)?;
        Ok(())
    }
}

fn cost_figure(summaries: &[MonteCarloSummary], nominal: f64) -> Figure {
    let mut series: Vec<Series> = summaries
        .iter()
        .map(|s| Series {
            label: s.controller.to_string(),
            points: s.stats.iter().map(|e| (e.eps, e.mean_cost)).collect(),
        })
        .collect();
    if let Some(first) = summaries.first() {
        series.push(Series {
            label: "nominal".into(),
            points: first.eps_grid.iter().map(|&e| (e, nominal)).collect(),
        });
    }
    Figure {
        title: "Mean cost against noise level".into(),
        x_label: "ε".into(),
        y_label: "mean cost".into(),
        series,
    }
}

fn replan_figure(summaries: &[MonteCarloSummary]) -> Figure {
    Figure {
        title: "Mean replans per run".into(),
        x_label: "ε".into(),
        y_label: "mean replans".into(),
        series: summaries
            .iter()
            .map(|s| Series {
                label: s.controller.to_string(),
                points: s.stats.iter().map(|e| (e.eps, e.mean_replans)).collect(),
            })
            .collect(),
    }
}

fn control_figure(results: &[RolloutResult], plan: &OfflinePlan, j: usize, dt: f64, label: &str) -> Figure {
    let nom = &plan.nominal;
    let runs = results.len() as f64;
    let avg = (0..nom.horizon())
        .map(|t| {
            (
                t as f64 * dt,
                results.iter().map(|r| r.controls[t][j]).sum::<f64>() / runs,
            )
        })
        .collect();
    Figure {
        title: format!("Control {j}: nominal and seed-averaged total ({label})"),
        x_label: "time [s]".into(),
        y_label: format!("u[{j}]"),
        series: vec![
            Series {
                label: "nominal".into(),
                points: nom
                    .controls
                    .iter()
                    .enumerate()
                    .map(|(t, u)| (t as f64 * dt, u[j]))
                    .collect(),
            },
            Series {
                label: "averaged".into(),
                points: avg,
            },
        ],
    }
}

fn nominal_rows(plan: &OfflinePlan) -> Vec<Vec<f64>> {
    let nom = &plan.nominal;
    (0..=nom.horizon())
        .map(|t| {
            let mut row = vec![t as f64];
            row.extend(nom.states[t].iter());
            match nom.controls.get(t) {
                Some(u) => row.extend(u.iter()),
                None => row.extend(std::iter::repeat_n(f64::NAN, nom.controls[0].len())),
            }
            row
        })
        .collect()
}

pub fn write_nominal(path: &Path, plan: &OfflinePlan) -> Result<()> {
    let n_x = plan.nominal.states[0].len();
    let n_u = plan.nominal.controls[0].len();
    let mut w = csv::Writer::from_path(path)?;
    let header: Vec<String> = std::iter::once("t".to_string())
        .chain((0..n_x).map(|i| format!("x{i}")))
        .chain((0..n_u).map(|j| format!("u{j}")))
        .collect();
    w.write_record(&header)?;
    for row in nominal_rows(plan) {
        w.write_record(
            row.iter()
                .map(|v| if v.is_nan() { String::new() } else { v.to_string() }),
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Runs the plan and writes its artifacts into `plan.out_dir`.
pub fn run_experiment(plan: &ExperimentPlan) -> Result<ExperimentSummary> {
    plan.validate()?;
    std::fs::create_dir_all(&plan.out_dir)?;
    let mut w = Writer {
        dir: plan.out_dir.clone(),
        manifest: Manifest::default(),
    };
    let outcome = execute(plan, &mut w);
    w.manifest.complete = outcome.is_ok();
    w.manifest.error = outcome.as_ref().err().map(|e| e.to_string());
    w.save_manifest()?;
    outcome
}

fn execute(plan: &ExperimentPlan, w: &mut Writer) -> Result<ExperimentSummary> {
    let scenario = load_scenario(&plan.scenario)?;
    let mode = plan.noise_mode.unwrap_or(scenario.noise_mode);
    let problem: Problem = scenario.to_problem()?;
    let offline = OfflinePlan::compute(&problem)?;
    let dt = problem.model.dt();
    write_nominal(&w.path("nominal.csv"), &offline)?;

    let mut summary = ExperimentSummary {
        plan: plan.clone(),
        scenario: scenario.name.clone(),
        noise_mode: mode,
        nominal_cost: offline.nominal.total_cost(),
        nominal_iterations: offline.nominal.report.iterations,
        nominal_residual: offline.nominal.report.residual,
        offline_plan_time: offline.plan_time,
        controllers: Vec::new(),
        control_deviation: Vec::new(),
    };
    let mut runs: Vec<RunRecord> = Vec::new();
    let mut timings: Vec<TimingRecord> = Vec::new();
    let mut traces: Option<(Controller, Vec<RolloutResult>)> = None;

    for &c in &plan.controllers {
        log::info!("{c}: {} runs at {} noise levels", plan.runs, plan.eps_grid.len());
        let (mc, results) = monte_carlo(&problem, &offline, c, &plan.eps_grid, plan.runs, plan.base_seed, mode)?;
        for r in results.iter().flatten() {
            runs.push(r.into());
            timings.push(r.into());
        }
        let last = results.last().cloned().unwrap_or_default();
        summary.control_deviation.push(ControlDeviation {
            controller: c,
            eps: *plan.eps_grid.last().unwrap_or(&0.0),
            relative: seed_averaged_control_deviation(&last, &offline.nominal),
        });
        // Control traces come from T-PFC when it is in the plan.
        if traces.is_none() || c == Controller::Tpfc {
            traces = Some((c, last));
        }
        summary.controllers.push(mc);

        write_csv(&w.path("runs.csv"), &runs)?;
        write_csv(&w.path("timings.csv"), &timings)?;
        std::fs::write(w.path("summary.json"), serde_json::to_string_pretty(&summary)?)?;
        w.save_manifest()?;
    }

    emit_plot(
        &cost_figure(&summary.controllers, summary.nominal_cost),
        PlotKind::Line,
        &w.path("cost_vs_eps.svg"),
    )?;
    emit_plot(
        &replan_figure(&summary.controllers),
        PlotKind::Bars,
        &w.path("replans.svg"),
    )?;
    if let Some((c, results)) = traces.filter(|(_, r)| !r.is_empty()) {
        let eps = plan.eps_grid.last().copied().unwrap_or(0.0);
        for j in 0..problem.model.n_u() {
            let fig = control_figure(&results, &offline, j, dt, &format!("{c}, ε = {eps}"));
            emit_plot(&fig, PlotKind::Line, &w.path(&format!("controls_u{j}.svg")))?;
        }
    }
    Ok(summary)
}
