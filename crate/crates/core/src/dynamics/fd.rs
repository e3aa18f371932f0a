use nalgebra::{DMatrix, DVector};

use super::{ControlVector, DynamicsModel, Linearization, StateVector, Tensor3};
use crate::error::{Error, Result};

/// Central-difference estimate of the full linearization of
/// [`DynamicsModel::step`].
///
/// The estimate is also formed at `2h` and `4h`. When the change from `2h`
/// to `h` exceeds the change from `4h` to `2h` by more than the expected
/// accuracy, rounding dominates truncation and the step is rejected.
pub fn fd_derivatives(model: &DynamicsModel, x: &StateVector, u: &ControlVector, h: f64) -> Result<Linearization> {
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::InvalidParameter(format!("h must be positive, got {h}")));
    }
    let fine = central(model, x, u, h)?;
    let mid = central(model, x, u, 2.0 * h)?;
    let coarse = central(model, x, u, 4.0 * h)?;

    let d_fine = max_diff(&fine, &mid);
    let d_coarse = max_diff(&mid, &coarse);
    let scale = 1.0 + max_abs(&fine);
    if d_fine > d_coarse + 1e-5 * scale {
        return Err(Error::StepTooSmall {
            h,
            detail: format!("estimates diverge as h shrinks ({d_fine:.3e} at h vs {d_coarse:.3e} at 2h)"),
        });
    }
    Ok(fine)
}

fn central(model: &DynamicsModel, x: &StateVector, u: &ControlVector, h: f64) -> Result<Linearization> {
    let (n, m) = (model.n_x(), model.n_u());
    let f = |dx: &[(usize, f64)], du: &[(usize, f64)]| -> Result<DVector<f64>> {
        let mut xp = x.clone();
        let mut up = u.clone();
        dx.iter().for_each(|&(i, d)| xp[i] += d);
        du.iter().for_each(|&(j, d)| up[j] += d);
        model.step(&xp, &up)
    };
    let f0 = f(&[], &[])?;

    let mut a = DMatrix::zeros(n, n);
    let mut b = DMatrix::zeros(n, m);
    let mut rxx = Tensor3::zeros(n, n, n);
    let mut rxu = Tensor3::zeros(n, n, m);

    for k in 0..n {
        let plus = f(&[(k, h)], &[])?;
        let minus = f(&[(k, -h)], &[])?;
        a.set_column(k, &((&plus - &minus) / (2.0 * h)));
        let diag = (&plus - &f0 * 2.0 + &minus) / (h * h);
        for i in 0..n {
            rxx.slices[i][(k, k)] = diag[i];
        }
        for l in 0..k {
            let pp = f(&[(k, h), (l, h)], &[])?;
            let pm = f(&[(k, h), (l, -h)], &[])?;
            let mp = f(&[(k, -h), (l, h)], &[])?;
            let mm = f(&[(k, -h), (l, -h)], &[])?;
            let mixed = (pp - pm - mp + mm) / (4.0 * h * h);
            for i in 0..n {
                rxx.slices[i][(k, l)] = mixed[i];
                rxx.slices[i][(l, k)] = mixed[i];
            }
        }
        for j in 0..m {
            let pp = f(&[(k, h)], &[(j, h)])?;
            let pm = f(&[(k, h)], &[(j, -h)])?;
            let mp = f(&[(k, -h)], &[(j, h)])?;
            let mm = f(&[(k, -h)], &[(j, -h)])?;
            let mixed = (pp - pm - mp + mm) / (4.0 * h * h);
            for i in 0..n {
                rxu.slices[i][(k, j)] = mixed[i];
            }
        }
    }
    for j in 0..m {
        let plus = f(&[], &[(j, h)])?;
        let minus = f(&[], &[(j, -h)])?;
        b.set_column(j, &((plus - minus) / (2.0 * h)));
    }
    Ok(Linearization { a, b, rxx, rxu })
}

fn max_abs(l: &Linearization) -> f64 {
    l.a.amax().max(l.b.amax()).max(l.rxx.max_abs()).max(l.rxu.max_abs())
}

fn max_diff(p: &Linearization, q: &Linearization) -> f64 {
    let t = |s: &Tensor3, r: &Tensor3| {
        s.slices
            .iter()
            .zip(&r.slices)
            .map(|(x, y)| (x - y).amax())
            .fold(0.0, f64::max)
    };
    (&p.a - &q.a)
        .amax()
        .max((&p.b - &q.b).amax())
        .max(t(&p.rxx, &q.rxx))
        .max(t(&p.rxu, &q.rxu))
}
