//! Linear dynamics with quadratic cost: the solver, the feedback recursions
//! and the baselines must all reduce to the discrete Riccati solution.

mod common;

use nalgebra::{DMatrix, DVector};

use common::lq::*;
use tpfc::feedback::{backward_pass_tlqr, backward_pass_tpfc, ilqg_gains};

#[test]
fn nominal_and_gains_match_riccati() {
    for seed in 0..3 {
        let lq = random_lq(seed);
        let oracle = riccati(&lq);
        let start = std::time::Instant::now();
        let (traj, cost) = solve(&lq, N);
        let gains = backward_pass_tpfc(&traj, &cost).unwrap();
        assert!(start.elapsed().as_secs_f64() < 1.0);

        assert!(
            max_gap_v(&traj.states, &oracle.xs) < 1e-8,
            "states {}",
            max_gap_v(&traj.states, &oracle.xs)
        );
        assert!(max_gap_v(&traj.controls, &oracle.us) < 1e-8);
        assert!(
            max_gap_m(&gains.k, &oracle.k) < 1e-8,
            "K {}",
            max_gap_m(&gains.k, &oracle.k)
        );
        assert!(max_gap_m(&gains.p, &oracle.p) < 1e-8);
        // The costate is the value gradient at the nominal.
        let grad: Vec<DVector<f64>> = (0..=N).map(|t| &oracle.p[t] * &oracle.xs[t] + &oracle.lin[t]).collect();
        assert!(max_gap_v(&gains.g, &grad) < 1e-8, "G {}", max_gap_v(&gains.g, &grad));
    }
}

#[test]
fn all_gain_families_coincide() {
    let lq = random_lq(7);
    let (traj, cost) = solve(&lq, N);
    let tpfc = backward_pass_tpfc(&traj, &cost).unwrap();
    let ilqg = ilqg_gains(&traj).unwrap();
    let tlqr = backward_pass_tlqr(&traj, &lq.q, &lq.r, &lq.q_f).unwrap();
    assert!(max_gap_m(&tpfc.k, &ilqg.k) < 1e-9);
    assert!(max_gap_m(&tpfc.k, &tlqr.k) < 1e-9);
}

#[test]
fn single_step_closed_form() {
    // One step: minimize ½uᵀRu + ½(Ax0 + Bu - g)ᵀQ_f(Ax0 + Bu - g).
    let lq = random_lq(3);
    let (traj, _) = solve(&lq, 1);
    let a = DMatrix::identity(NX, NX) + &lq.m * DT;
    let b = &lq.g * DT;
    let h = &lq.r + b.transpose() * &lq.q_f * &b;
    let rhs = b.transpose() * &lq.q_f * (&lq.goal - &a * &lq.x0);
    let u = h.lu().solve(&rhs).unwrap();
    assert!((&traj.controls[0] - u).amax() < 1e-10);
}
