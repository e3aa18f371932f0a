//! Feedback gains along a nominal: the decoupled T-PFC recursion for the
//! costate `G_t` and second-order term `P_t`, plus the T-LQR and iLQG
//! baselines.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::costs::CostModel;
use crate::dynamics::{DynamicsModel, Tensor3};
use crate::error::{check_dim, Error, Result};
use crate::solver::NominalTrajectory;

/// `G`, `P` hold `N + 1` entries; `K`, `S` hold `N`. `G_t` is stored as a
/// column vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GainSchedule {
    pub g: Vec<DVector<f64>>,
    pub p: Vec<DMatrix<f64>>,
    pub k: Vec<DMatrix<f64>>,
    pub s: Vec<DMatrix<f64>>,
    /// Projected first-order residual of the nominal the gains were built on.
    pub residual: f64,
    /// Largest `|P - Pᵀ|` entry seen before symmetrization.
    pub max_asymmetry: f64,
}

impl GainSchedule {
    pub fn horizon(&self) -> usize {
        self.k.len()
    }

    pub fn is_stationary(&self, tol: f64) -> bool {
        self.residual <= tol
    }
}

/// `(G ⊗ T)_{jk} = Σ_i G_i T_{ijk}`.
pub fn contract(g: &DVector<f64>, t: &Tensor3) -> Result<DMatrix<f64>> {
    let (n, rows, cols) = t.dims();
    check_dim("contraction vector", n, g.len())?;
    if n == 0 {
        return Ok(DMatrix::zeros(rows, cols));
    }
    Ok(tensor_dot(g, t))
}

pub(crate) fn tensor_dot(g: &DVector<f64>, t: &Tensor3) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(t.slices[0].nrows(), t.slices[0].ncols());
    for (gi, slice) in g.iter().zip(&t.slices) {
        if *gi != 0.0 {
            out += slice * *gi;
        }
    }
    out
}

fn asymmetry(m: &DMatrix<f64>) -> f64 {
    (m - m.transpose()).amax()
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

fn solve_gain(s: &DMatrix<f64>, cross: &DMatrix<f64>, t: usize) -> Result<DMatrix<f64>> {
    let chol = symmetrize(s).cholesky().ok_or(Error::NotPositiveDefinite { t })?;
    Ok(-chol.solve(cross))
}

/// Gain restricted to the controls not pinned at a bound; pinned rows are
/// zero, matching what the clamped policy can actually apply.
fn solve_gain_free(s: &DMatrix<f64>, cross: &DMatrix<f64>, free: &[bool], t: usize) -> Result<DMatrix<f64>> {
    if free.iter().all(|&f| f) {
        return solve_gain(s, cross, t);
    }
    let idx: Vec<usize> = (0..free.len()).filter(|&j| free[j]).collect();
    let mut k = DMatrix::zeros(free.len(), cross.ncols());
    if idx.is_empty() {
        return Ok(k);
    }
    let kf = solve_gain(&s.select_rows(&idx).select_columns(&idx), &cross.select_rows(&idx), t)?;
    for (r, &j) in idx.iter().enumerate() {
        k.set_row(j, &kf.row(r));
    }
    Ok(k)
}

fn check_traj(traj: &NominalTrajectory) -> Result<()> {
    let n = traj.horizon();
    check_dim("nominal states", n + 1, traj.states.len())?;
    check_dim("nominal linearizations", n, traj.linearizations.len())
}

/// Decoupled backward recursion along `traj`:
///
/// ```text
/// G_t = L_t + G_{t+1} A_t
/// S_t = R + Bᵀ P_{t+1} B
/// K_t = -S_t⁻¹ (Bᵀ P_{t+1} A + (G_{t+1} ⊗ R_xu)ᵀ)
/// P_t = L_tt + Aᵀ P_{t+1} A - K_tᵀ S_t K_t + G_{t+1} ⊗ R_xx
/// ```
///
/// Controls held at a bound by the first-order condition get zero gain rows
/// and `S_t` is only required to be positive definite on the free block.
/// The gains are only optimal when the nominal is stationary; the schedule
/// records the residual so callers can check.
pub fn backward_pass_tpfc(traj: &NominalTrajectory, cost: &CostModel) -> Result<GainSchedule> {
    check_traj(traj)?;
    let n = traj.horizon();
    let (_, g_n, p_n) = cost.terminal_derivatives(&traj.states[n]);
    let mut g = vec![g_n; n + 1];
    let mut p = vec![p_n; n + 1];
    let mut k = Vec::with_capacity(n);
    let mut s = Vec::with_capacity(n);
    let mut residual: f64 = 0.0;
    let mut max_asym: f64 = 0.0;
    let r = cost.r();

    for t in (0..n).rev() {
        let lin = &traj.linearizations[t];
        let (a, b) = (&lin.a, &lin.b);
        let u = &traj.controls[t];
        let d = cost.cost_derivatives(&traj.states[t], u)?;
        let (g1, p1) = (&g[t + 1], &p[t + 1]);

        let grad = r * u + b.transpose() * g1;
        let (proj, free) = match &traj.bounds {
            Some(bd) => {
                let free: Vec<bool> = (0..u.len())
                    .map(|j| !((u[j] <= bd.lower[j] && grad[j] > 0.0) || (u[j] >= bd.upper[j] && grad[j] < 0.0)))
                    .collect();
                (u - bd.clamp(&(u - &grad)), free)
            }
            None => (grad, vec![true; u.len()]),
        };
        residual = residual.max(proj.amax());

        let bt_p = b.transpose() * p1;
        let st = r + &bt_p * b;
        let cross = &bt_p * a + tensor_dot(g1, &lin.rxu).transpose();
        let kt = solve_gain_free(&st, &cross, &free, t)?;
        let pt = &d.lxx + a.transpose() * p1 * a - kt.transpose() * &st * &kt + tensor_dot(g1, &lin.rxx);
        max_asym = max_asym.max(asymmetry(&pt));
        let gt = d.lx + a.transpose() * g1;

        g[t] = gt;
        p[t] = symmetrize(&pt);
        k.push(kt);
        s.push(symmetrize(&st));
    }
    k.reverse();
    s.reverse();
    if !(residual <= 1e-4) {
        log::warn!("T-PFC gains built on a non-stationary nominal (residual {residual:.3e})");
    }
    Ok(GainSchedule {
        g,
        p,
        k,
        s,
        residual,
        max_asymmetry: max_asym,
    })
}

/// Time-varying LQR about the nominal's `(A_t, B_t)` with separately chosen
/// weights. No tensor terms and no costate coupling; `G` is left at zero.
pub fn backward_pass_tlqr(
    traj: &NominalTrajectory,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    q_f: &DMatrix<f64>,
) -> Result<GainSchedule> {
    check_traj(traj)?;
    let n = traj.horizon();
    let nx = traj.states[0].len();
    check_dim("T-LQR Q", nx, q.nrows())?;
    check_dim("T-LQR Q_f", nx, q_f.nrows())?;
    let mut p = vec![symmetrize(q_f); n + 1];
    let mut k = Vec::with_capacity(n);
    let mut s = Vec::with_capacity(n);
    let mut max_asym: f64 = 0.0;
    for t in (0..n).rev() {
        let lin = &traj.linearizations[t];
        let (a, b) = (&lin.a, &lin.b);
        check_dim("T-LQR R", b.ncols(), r.nrows())?;
        let p1 = &p[t + 1];
        let bt_p = b.transpose() * p1;
        let st = r + &bt_p * b;
        let kt = solve_gain(&st, &(&bt_p * a), t)?;
        let pt = q + a.transpose() * p1 * a - kt.transpose() * &st * &kt;
        max_asym = max_asym.max(asymmetry(&pt));
        p[t] = symmetrize(&pt);
        k.push(kt);
        s.push(symmetrize(&st));
    }
    k.reverse();
    s.reverse();
    Ok(GainSchedule {
        g: vec![DVector::zeros(nx); n + 1],
        p,
        k,
        s,
        residual: traj.report.residual,
        max_asymmetry: max_asym,
    })
}

/// Gains cached from the solver's closing iLQG backward pass.
pub fn ilqg_gains(traj: &NominalTrajectory) -> Result<GainSchedule> {
    traj.ilqg_gains().cloned().ok_or(Error::MissingGains)
}

/// The costate `G_t` alone, by its backward recursion.
pub fn costates(traj: &NominalTrajectory, cost: &CostModel) -> Result<Vec<DVector<f64>>> {
    check_traj(traj)?;
    let n = traj.horizon();
    let (_, g_n, _) = cost.terminal_derivatives(&traj.states[n]);
    let mut g = vec![g_n; n + 1];
    for t in (0..n).rev() {
        let d = cost.cost_derivatives(&traj.states[t], &traj.controls[t])?;
        g[t] = d.lx + traj.linearizations[t].a.transpose() * &g[t + 1];
    }
    Ok(g)
}

fn frozen_suffix_cost(
    traj: &NominalTrajectory,
    model: &DynamicsModel,
    cost: &CostModel,
    t: usize,
    x: DVector<f64>,
) -> Result<f64> {
    let mut x = x;
    let mut total = 0.0;
    for u in &traj.controls[t..] {
        total += cost.step_cost(&x, u)?;
        x = model.step(&x, u)?;
    }
    Ok(total + cost.terminal_cost(&x))
}

/// Largest relative error, over every `t` and five random unit directions,
/// between `G_t · d` and a central difference of the suffix cost with the
/// nominal controls held fixed. Errors are relative to `max(|G_t|, 1)`.
pub fn costate_gradient_check(
    traj: &NominalTrajectory,
    model: &DynamicsModel,
    cost: &CostModel,
    h: f64,
) -> Result<f64> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidParameter(format!("h must be positive, got {h}")));
    }
    let g = costates(traj, cost)?;
    let nx = traj.states[0].len();
    let mut rng = ChaCha8Rng::seed_from_u64(0x6a09e667);
    let mut worst: f64 = 0.0;
    for (t, gt) in g.iter().enumerate() {
        let scale = gt.norm().max(1.0);
        for _ in 0..5 {
            let mut d = DVector::from_fn(nx, |_, _| rng.sample::<f64, _>(StandardNormal));
            d /= d.norm();
            let plus = frozen_suffix_cost(traj, model, cost, t, &traj.states[t] + &d * h)?;
            let minus = frozen_suffix_cost(traj, model, cost, t, &traj.states[t] - &d * h)?;
            let fd = (plus - minus) / (2.0 * h);
            worst = worst.max((gt.dot(&d) - fd).abs() / scale);
        }
    }
    Ok(worst)
}

/// Writes `G.csv`, `P.csv`, `K.csv` and `S.csv` into `dir`. Each row is
/// `t` followed by the row-major entries of that step's vector or matrix.
pub fn write_gain_bundle(gains: &GainSchedule, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let vectors: Vec<DMatrix<f64>> = gains
        .g
        .iter()
        .map(|v| DMatrix::from_row_slice(1, v.len(), v.as_slice()))
        .collect();
    let sets: [(&str, &[DMatrix<f64>]); 4] = [("G", &vectors), ("P", &gains.p), ("K", &gains.k), ("S", &gains.s)];
    for (name, mats) in sets {
        let mut w = csv::Writer::from_path(dir.join(format!("{name}.csv")))?;
        if let Some(first) = mats.first() {
            let mut header = vec!["t".to_string()];
            for i in 0..first.nrows() {
                for j in 0..first.ncols() {
                    header.push(format!("{name}_{i}_{j}"));
                }
            }
            w.write_record(&header)?;
        }
        for (t, m) in mats.iter().enumerate() {
            let mut row = vec![t.to_string()];
            for i in 0..m.nrows() {
                for j in 0..m.ncols() {
                    row.push(format!("{:e}", m[(i, j)]));
                }
            }
            w.write_record(&row)?;
        }
        w.flush()?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn contraction_selects_slice() {
        let mut t = Tensor3::zeros(3, 2, 2);
        for (i, s) in t.slices.iter_mut().enumerate() {
            *s = DMatrix::from_element(2, 2, i as f64 + 1.0);
        }
        let e1 = DVector::from_vec(vec![0.0, 1.0, 0.0]);
        assert_eq!(contract(&e1, &t).unwrap(), DMatrix::from_element(2, 2, 2.0));
        assert!(contract(&DVector::zeros(2), &t).is_err());
        let zero = Tensor3::zeros(3, 2, 4);
        assert_eq!(
            contract(&DVector::from_element(3, 7.0), &zero).unwrap(),
            DMatrix::zeros(2, 4)
        );
    }
}
