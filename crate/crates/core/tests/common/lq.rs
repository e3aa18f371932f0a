//! Random linear-quadratic problems and an affine Riccati oracle.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use tpfc::costs::CostModel;
use tpfc::dynamics::DynamicsModel;
use tpfc::solver::{solve_ocp, NominalTrajectory, SolverConfig};

pub const NX: usize = 4;
pub const NU: usize = 2;
pub const N: usize = 50;
pub const DT: f64 = 0.1;

pub struct Lq {
    pub m: DMatrix<f64>,
    pub g: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub q_f: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub goal: DVector<f64>,
    pub x0: DVector<f64>,
}

fn gauss(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample::<f64, _>(StandardNormal))
}

fn spd(rng: &mut ChaCha8Rng, n: usize, floor: f64) -> DMatrix<f64> {
    let l = gauss(rng, n, n);
    let m = &l * l.transpose() / n as f64 + DMatrix::identity(n, n) * floor;
    (&m + m.transpose()) / 2.0
}

pub fn random_lq(seed: u64) -> Lq {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Lq {
        m: gauss(&mut rng, NX, NX) * 0.5,
        g: gauss(&mut rng, NX, NU),
        q: spd(&mut rng, NX, 0.1),
        q_f: spd(&mut rng, NX, 1.0) * 10.0,
        r: spd(&mut rng, NU, 0.5),
        goal: DVector::from_fn(NX, |_, _| rng.sample::<f64, _>(StandardNormal)),
        x0: DVector::from_fn(NX, |_, _| rng.sample::<f64, _>(StandardNormal)),
    }
}

/// Affine Riccati recursion for `V_t(x) = ½ xᵀ P_t x + p_tᵀ x + c`, written
/// from scratch on the discrete matrices `A = I + dT M`, `B = dT G`.
pub struct Riccati {
    pub p: Vec<DMatrix<f64>>,
    pub lin: Vec<DVector<f64>>,
    pub k: Vec<DMatrix<f64>>,
    pub ff: Vec<DVector<f64>>,
    pub xs: Vec<DVector<f64>>,
    pub us: Vec<DVector<f64>>,
}

pub fn riccati(lq: &Lq) -> Riccati {
    let a = DMatrix::identity(NX, NX) + &lq.m * DT;
    let b = &lq.g * DT;
    let mut p = vec![DMatrix::zeros(NX, NX); N + 1];
    let mut lin = vec![DVector::zeros(NX); N + 1];
    let mut k = vec![DMatrix::zeros(NU, NX); N];
    let mut ff = vec![DVector::zeros(NU); N];
    p[N] = lq.q_f.clone();
    lin[N] = -(&lq.q_f * &lq.goal);
    for t in (0..N).rev() {
        let (pn, ln) = (&p[t + 1], &lin[t + 1]);
        let huu = &lq.r + b.transpose() * pn * &b;
        let hux = b.transpose() * pn * &a;
        let hu = b.transpose() * ln;
        let inv = huu.clone().try_inverse().unwrap();
        k[t] = -&inv * &hux;
        ff[t] = -&inv * &hu;
        let pt = &lq.q + a.transpose() * pn * &a + hux.transpose() * &k[t];
        p[t] = (&pt + pt.transpose()) / 2.0;
        lin[t] = -(&lq.q * &lq.goal) + a.transpose() * ln + hux.transpose() * &ff[t];
    }
    let mut xs = vec![lq.x0.clone()];
    let mut us = Vec::new();
    for t in 0..N {
        let u = &k[t] * &xs[t] + &ff[t];
        xs.push(&a * &xs[t] + &b * &u);
        us.push(u);
    }
    Riccati { p, lin, k, ff, xs, us }
}

pub fn max_gap_m(a: &[DMatrix<f64>], b: &[DMatrix<f64>]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).amax()).fold(0.0, f64::max)
}

pub fn max_gap_v(a: &[DVector<f64>], b: &[DVector<f64>]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).amax()).fold(0.0, f64::max)
}

/// Solves an LQ problem to a tight stationarity tolerance.
pub fn solve(lq: &Lq, n: usize) -> (NominalTrajectory, CostModel) {
    let model = DynamicsModel::linear(lq.m.clone(), lq.g.clone(), DT).unwrap();
    let cost = CostModel::new(lq.q.clone(), lq.q_f.clone(), lq.r.clone(), lq.goal.clone(), Vec::new()).unwrap();
    let cfg = SolverConfig {
        stationarity_tol: 1e-12,
        ..SolverConfig::default()
    };
    (solve_ocp(&model, &cost, &lq.x0, n, &cfg, None).unwrap(), cost)
}
