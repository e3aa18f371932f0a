//! Prints one PASS or FAIL line per acceptance criterion. A failing
//! criterion is reported, not asserted, so the rest still run.
//!
//! The car Monte Carlo is shared by criteria 5 to 9 and dominates the
//! runtime (NMPC re-solves at every step). Set TPFC_ACCEPT_RUNS to use
//! fewer seeds for a quick look.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::OnceLock;
use std::time::Instant;

use nalgebra::DMatrix;

use common::lq::{max_gap_m, max_gap_v, random_lq, riccati, solve, N};
use tpfc::feedback::{backward_pass_tlqr, backward_pass_tpfc, costate_gradient_check, ilqg_gains};
use tpfc::scenario::{preset, preset_names};
use tpfc::simulation::{
    monte_carlo, run, seed_averaged_control_deviation, Controller, MonteCarloSummary, NoiseConfig, NoiseMode,
    OfflinePlan, Problem, RolloutResult,
};
use tpfc::solver::stationarity_residual;

const GRID: [f64; 5] = [0.05, 0.1, 0.15, 0.2, 0.25];
const HIGH_EPS: f64 = 0.3;

type Outcome = (bool, String);

struct CarStudy {
    problem: Problem,
    plan: OfflinePlan,
    runs: usize,
    tpfc: MonteCarloSummary,
    tpfc_results: Vec<Vec<RolloutResult>>,
    nmpc: MonteCarloSummary,
    tlqr: MonteCarloSummary,
    tpfc_high: MonteCarloSummary,
    seconds: f64,
}

fn car_study() -> &'static CarStudy {
    static STUDY: OnceLock<CarStudy> = OnceLock::new();
    STUDY.get_or_init(|| {
        let runs = std::env::var("TPFC_ACCEPT_RUNS")
            .ok()
            .and_then(|s| s.parse().ok())
            .unwrap_or(100);
        let start = Instant::now();
        let problem = preset("car4_table2").unwrap().to_problem().unwrap();
        let plan = OfflinePlan::compute(&problem).unwrap();
        let mc =
            |c: Controller, grid: &[f64]| monte_carlo(&problem, &plan, c, grid, runs, 0, NoiseMode::Process).unwrap();
        let (tpfc, tpfc_results) = mc(Controller::Tpfc, &GRID);
        let (tpfc_high, _) = mc(Controller::Tpfc, &[HIGH_EPS]);
        let (tlqr, _) = mc(Controller::Tlqr, &GRID);
        let (nmpc, _) = mc(Controller::Nmpc, &GRID);
        CarStudy {
            problem,
            plan,
            runs,
            tpfc,
            tpfc_results,
            nmpc,
            tlqr,
            tpfc_high,
            seconds: start.elapsed().as_secs_f64(),
        }
    })
}

fn means(s: &MonteCarloSummary) -> Vec<f64> {
    s.stats.iter().map(|e| e.mean_cost).collect()
}

fn lq_equivalence() -> Outcome {
    let lq = random_lq(2024);
    let oracle = riccati(&lq);
    let start = Instant::now();
    let (traj, cost) = solve(&lq, N);
    let gains = backward_pass_tpfc(&traj, &cost).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let gap = max_gap_v(&traj.states, &oracle.xs)
        .max(max_gap_v(&traj.controls, &oracle.us))
        .max(max_gap_m(&gains.k, &oracle.k))
        .max(max_gap_m(&gains.p, &oracle.p));
    (gap <= 1e-8 && secs < 1.0, format!("max abs gap {gap:.2e}, {secs:.3} s"))
}

fn derivative_suite() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for name in preset_names() {
        worst = worst
            .max(common::fd::dynamics_suite(name))
            .max(common::fd::cost_suite(name));
    }
    let secs = start.elapsed().as_secs_f64();
    (
        worst <= 1e-4 && secs < 10.0,
        format!("worst relative error {worst:.2e}, {secs:.2} s"),
    )
}

fn stationarity() -> Outcome {
    let mut ok = true;
    let mut notes = Vec::new();
    for name in preset_names() {
        let problem = preset(name).unwrap().to_problem().unwrap();
        let plan = OfflinePlan::compute(&problem).unwrap();
        let res = stationarity_residual(&plan.nominal, &problem.model, &problem.cost).unwrap();
        let check = costate_gradient_check(&plan.nominal, &problem.model, &problem.cost, 1e-5).unwrap();
        let limit = if problem.model.id() == "quadrotor12" {
            1e-4
        } else {
            1e-6
        };
        ok &= res <= limit && check < 1e-3;
        notes.push(format!("{name} residual {res:.1e} costate {check:.1e}"));
    }
    (ok, notes.join("; "))
}

fn zero_noise() -> Outcome {
    let mut worst: f64 = 0.0;
    for name in preset_names() {
        let problem = preset(name).unwrap().to_problem().unwrap();
        let plan = OfflinePlan::compute(&problem).unwrap();
        let nominal = plan.nominal.total_cost();
        let noise = NoiseConfig::new(0.0, problem.model.dt(), 0).unwrap();
        for c in Controller::ALL {
            let r = run(&problem, &plan, c, &noise).unwrap();
            worst = worst.max(((r.cost - nominal) / nominal).abs());
        }
    }
    (
        worst <= 1e-8,
        format!("worst relative cost gap {worst:.2e} over 4 controllers and 3 presets"),
    )
}

fn paper_comparison() -> Outcome {
    let s = car_study();
    let (t, n, l) = (means(&s.tpfc), means(&s.nmpc), means(&s.tlqr));
    let rel: Vec<f64> = t.iter().zip(&n).map(|(a, b)| (a - b).abs() / b).collect();
    let close = rel.iter().all(|r| *r <= 0.05);
    let diverges = l[4] > t[4];
    let within_budget = s.seconds <= 1800.0;
    let rel_txt: Vec<String> = rel.iter().map(|r| format!("{r:.4}")).collect();
    (
        close && diverges && within_budget,
        format!(
            "{} seeds; |tpfc-nmpc|/nmpc [{}]; at 0.25 tlqr {:.1} vs tpfc {:.1}; study {:.0} s",
            s.runs,
            rel_txt.join(", "),
            l[4],
            t[4],
            s.seconds
        ),
    )
}

fn replan_economy() -> Outcome {
    let s = car_study();
    let low: Vec<f64> = s.tpfc.stats.iter().map(|e| e.mean_replans).collect();
    let high = s.tpfc_high.stats[0].mean_replans;
    let cap = (s.problem.horizon - 1) as f64 / 8.0;
    let txt: Vec<String> = low.iter().map(|r| format!("{r:.2}")).collect();
    (
        low.iter().all(|r| *r == 0.0) && high <= cap,
        format!(
            "mean replans for ε ≤ 0.25 [{}]; at 0.3 {high:.2} (cap {cap:.1})",
            txt.join(", ")
        ),
    )
}

fn scaling() -> Outcome {
    let s = car_study();
    let (t, n) = (means(&s.tpfc), means(&s.nmpc));
    let pick = [0usize, 1, 3];
    let pts: Vec<(f64, f64)> = pick.iter().map(|&i| (GRID[i].ln(), (t[i] - n[i]).abs().ln())).collect();
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / 3.0;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / 3.0;
    let slope =
        pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    let deltas: Vec<String> = pick.iter().map(|&i| format!("{:.3e}", (t[i] - n[i]).abs())).collect();
    (
        slope.is_finite() && slope >= 2.0,
        format!(
            "Δ at 0.05, 0.1, 0.2 = [{}]; log-log slope {slope:.2}",
            deltas.join(", ")
        ),
    )
}

fn runtime() -> Outcome {
    let s = car_study();
    let wall = |m: &MonteCarloSummary| m.stats.iter().map(|e| e.total_wall_time).sum::<f64>();
    let ratio = wall(&s.nmpc) / wall(&s.tpfc);

    let quad = preset("quadrotor12_table2").unwrap().to_problem().unwrap();
    let plan = OfflinePlan::compute(&quad).unwrap();
    let mut times = Vec::new();
    for seed in 0..5 {
        let r = run(
            &quad,
            &plan,
            Controller::Tpfc,
            &NoiseConfig::new(0.05, quad.model.dt(), seed).unwrap(),
        )
        .unwrap();
        times.extend(r.policy_times);
    }
    times.sort_by(f64::total_cmp);
    let median_us = 1e6 * times[times.len() / 2];
    (
        ratio >= 10.0 && median_us < 10.0,
        format!(
            "nmpc {:.1} s / tpfc {:.2} s = {ratio:.0}x; quadrotor policy median {median_us:.2} µs",
            wall(&s.nmpc),
            wall(&s.tpfc)
        ),
    )
}

fn control_trace() -> Outcome {
    let s = car_study();
    let dev = seed_averaged_control_deviation(&s.tpfc_results[4], &s.plan.nominal);
    (
        dev < 0.01,
        format!("relative deviation at ε = 0.25: {:.2}%", 100.0 * dev),
    )
}

fn gain_distinctness() -> Outcome {
    let gap = |a: &[DMatrix<f64>], b: &[DMatrix<f64>]| a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
    let s = car_study();
    let car_ilqg = gap(&s.plan.tpfc.k, &s.plan.ilqg.k);
    let car_tlqr = gap(&s.plan.tpfc.k, &s.plan.tlqr.k);

    let lq = random_lq(2024);
    let (traj, cost) = solve(&lq, N);
    let tpfc = backward_pass_tpfc(&traj, &cost).unwrap();
    let ilqg = ilqg_gains(&traj).unwrap();
    let tlqr = backward_pass_tlqr(&traj, &lq.q, &lq.r, &lq.q_f).unwrap();
    let lq_gap = max_gap_m(&tpfc.k, &ilqg.k)
        .max(max_gap_m(&tpfc.k, &tlqr.k))
        .max(max_gap_m(&ilqg.k, &tlqr.k));
    (
        car_ilqg > 0.0 && car_tlqr > 0.0 && lq_gap <= 1e-9,
        format!("car max ‖ΔK‖ vs ilqg {car_ilqg:.3e}, vs tlqr {car_tlqr:.3e}; LQ max gap {lq_gap:.1e}"),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("LQ equivalence oracle", lq_equivalence),
        ("derivative suite", derivative_suite),
        ("stationarity", stationarity),
        ("zero-noise invariance", zero_noise),
        ("comparison with NMPC and T-LQR", paper_comparison),
        ("replan economy", replan_economy),
        ("near-optimality scaling", scaling),
        ("runtime ratio", runtime),
        ("control-trace statistic", control_trace),
        ("gain distinctness", gain_distinctness),
    ];
    let mut passed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let (ok, detail) = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            (false, format!("panicked: {msg}"))
        });
        passed += ok as usize;
        println!(
            "criterion {:>2} {}: {name}: {detail}",
            i + 1,
            if ok { "PASS" } else { "FAIL" }
        );
    }
    println!("acceptance: {passed}/10 criteria pass");
}
