use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nalgebra::DMatrix;

use tpfc::dynamics::{fd_derivatives, Linearization};
use tpfc::experiment::{run_experiment, write_nominal, ExperimentPlan, FAST_RUNS};
use tpfc::feedback::{costate_gradient_check, write_gain_bundle};
use tpfc::scenario::{load_scenario, preset_names, Scenario};
use tpfc::simulation::{run, Controller, NoiseConfig, NoiseMode, OfflinePlan, Problem};
use tpfc::solver::stationarity_residual;

/// Perturbation feedback planning and Monte Carlo evaluation.
///
/// Set TPFC_THREADS to cap the worker threads used by experiments.
#[derive(Parser)]
#[command(name = "tpfc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the nominal and report it.
    Plan {
        scenario: String,
        /// Also write nominal.csv here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the gain schedules of every feedback controller.
    Gains {
        scenario: String,
        #[arg(long, default_value = "gains")]
        out: PathBuf,
    },
    /// One closed-loop run.
    Rollout {
        scenario: String,
        #[arg(long, default_value = "tpfc")]
        controller: Controller,
        #[arg(long, default_value_t = 0.0)]
        eps: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        noise_mode: Option<NoiseMode>,
        /// Write the executed trajectory as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a Monte Carlo plan; accepts a plan file, a scenario file or a preset.
    Experiment {
        plan: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, conflicts_with = "fast")]
        runs: Option<usize>,
        /// Use the reduced run count.
        #[arg(long)]
        fast: bool,
        #[arg(long)]
        noise_mode: Option<NoiseMode>,
    },
    /// Derivative and optimality diagnostics; defaults to every preset.
    Check { scenarios: Vec<String> },
}

fn load(name: &str) -> tpfc::Result<(Scenario, Problem)> {
    let s = load_scenario(name)?;
    let p = s.to_problem()?;
    Ok((s, p))
}

fn plan(name: &str, out: Option<&Path>) -> tpfc::Result<()> {
    let (s, problem) = load(name)?;
    let offline = OfflinePlan::compute(&problem)?;
    let r = &offline.nominal.report;
    println!("scenario   {}", s.name);
    println!(
        "model      {} (n_x {}, n_u {})",
        problem.model.id(),
        problem.model.n_x(),
        problem.model.n_u()
    );
    println!("horizon    {} steps of {} s", problem.horizon, problem.model.dt());
    println!("cost       {:.6}", offline.nominal.total_cost());
    println!("iterations {}", r.iterations);
    println!("converged  {}", r.converged);
    println!("residual   {:.3e}", r.residual);
    println!("plan time  {:.3} s", offline.plan_time);
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        write_nominal(&dir.join("nominal.csv"), &offline)?;
        println!("wrote {}", dir.join("nominal.csv").display());
    }
    Ok(())
}

fn gains(name: &str, out: &Path) -> tpfc::Result<()> {
    let (_, problem) = load(name)?;
    let offline = OfflinePlan::compute(&problem)?;
    for c in [Controller::Tpfc, Controller::Tlqr, Controller::Ilqg] {
        let dir = out.join(c.id());
        write_gain_bundle(offline.gains(c).expect("feedback controller"), &dir)?;
        println!("{c}: {}", dir.display());
    }
    Ok(())
}

fn rollout(
    name: &str,
    controller: Controller,
    eps: f64,
    seed: u64,
    mode: Option<NoiseMode>,
    out: Option<&Path>,
) -> tpfc::Result<()> {
    let (s, problem) = load(name)?;
    let offline = OfflinePlan::compute(&problem)?;
    let noise = NoiseConfig::new(eps, problem.model.dt(), seed)?.with_mode(mode.unwrap_or(s.noise_mode));
    let r = run(&problem, &offline, controller, &noise)?;
    println!("controller {controller}  eps {eps}  seed {seed}");
    println!("cost       {:.6} (nominal {:.6})", r.cost, offline.nominal.total_cost());
    println!("replans    {} at {:?}", r.replans(), r.replan_times);
    println!(
        "exec time  {:.3} ms, replanning {:.3} s",
        1e3 * r.exec_time(),
        r.plan_time
    );
    if let Some(path) = out {
        let mut w = csv::Writer::from_path(path)?;
        let (n_x, n_u) = (problem.model.n_x(), problem.model.n_u());
        let header: Vec<String> = std::iter::once("t".to_string())
            .chain((0..n_x).map(|i| format!("x{i}")))
            .chain((0..n_u).map(|j| format!("u{j}")))
            .collect();
        w.write_record(&header)?;
        for (t, x) in r.states.iter().enumerate() {
            let mut row = vec![t.to_string()];
            row.extend(x.iter().map(|v| v.to_string()));
            match r.controls.get(t) {
                Some(u) => row.extend(u.iter().map(|v| v.to_string())),
                None => row.extend(std::iter::repeat_n(String::new(), n_u)),
            }
            w.write_record(&row)?;
        }
        w.flush()?;
    }
    Ok(())
}

fn rel_gap(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax() / (1.0 + a.amax())
}

fn lin_gap(exact: &Linearization, fd: &Linearization) -> f64 {
    let tensors =
        |e: &[DMatrix<f64>], f: &[DMatrix<f64>]| e.iter().zip(f).map(|(x, y)| rel_gap(x, y)).fold(0.0, f64::max);
    rel_gap(&exact.a, &fd.a)
        .max(rel_gap(&exact.b, &fd.b))
        .max(tensors(&exact.rxx.slices, &fd.rxx.slices))
        .max(tensors(&exact.rxu.slices, &fd.rxu.slices))
}

/// Returns whether every diagnostic passed.
fn check(name: &str) -> tpfc::Result<bool> {
    let (s, problem) = load(name)?;
    let offline = OfflinePlan::compute(&problem)?;
    let nom = &offline.nominal;
    let mut ok = true;
    let mut report = |label: &str, value: f64, limit: f64| {
        let pass = value <= limit;
        ok &= pass;
        println!(
            "{} {:<22} {value:.3e} (limit {limit:.0e}) {}",
            s.name,
            label,
            if pass { "PASS" } else { "FAIL" }
        );
    };

    let stride = (nom.horizon() / 10).max(1);
    let mut worst: f64 = 0.0;
    for t in (0..nom.horizon()).step_by(stride) {
        let (x, u) = (&nom.states[t], &nom.controls[t]);
        let exact = problem.model.linearize(x, u)?;
        worst = worst.max(lin_gap(&exact, &fd_derivatives(&problem.model, x, u, 1e-4)?));
    }
    report("dynamics derivatives", worst, 1e-4);

    let limit = if problem.model.id() == "quadrotor12" {
        1e-4
    } else {
        1e-6
    };
    report(
        "stationarity",
        stationarity_residual(nom, &problem.model, &problem.cost)?,
        limit,
    );
    report(
        "costate gradient",
        costate_gradient_check(nom, &problem.model, &problem.cost, 1e-5)?,
        1e-3,
    );
    Ok(ok)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Plan { scenario, out } => plan(&scenario, out.as_deref()).map(|_| true),
        Command::Gains { scenario, out } => gains(&scenario, &out).map(|_| true),
        Command::Rollout {
            scenario,
            controller,
            eps,
            seed,
            noise_mode,
            out,
        } => rollout(&scenario, controller, eps, seed, noise_mode, out.as_deref()).map(|_| true),
        Command::Experiment {
            plan,
            out,
            runs,
            fast,
            noise_mode,
        } => ExperimentPlan::load(&plan).and_then(|mut p| {
            if let Some(dir) = out {
                p.out_dir = dir;
            }
            if let Some(n) = runs {
                p.runs = n;
            }
            if fast {
                p.runs = FAST_RUNS;
            }
            if noise_mode.is_some() {
                p.noise_mode = noise_mode;
            }
            let summary = run_experiment(&p)?;
            for mc in &summary.controllers {
                for e in &mc.stats {
                    println!(
                        "{:<5} eps {:<5} mean {:.4} std {:.4} replans {:.2}",
                        mc.controller, e.eps, e.mean_cost, e.std_cost, e.mean_replans
                    );
                }
            }
            println!("artifacts in {}", p.out_dir.display());
            Ok(true)
        }),
        Command::Check { scenarios } => {
            let names: Vec<String> = if scenarios.is_empty() {
                preset_names().into_iter().map(String::from).collect()
            } else {
                scenarios
            };
            names.iter().try_fold(true, |all, n| check(n).map(|ok| all && ok))
        }
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
