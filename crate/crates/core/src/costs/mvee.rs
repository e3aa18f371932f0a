use nalgebra::{DMatrix, DVector};

use super::Ellipsoid;
use crate::error::{Error, Result};

pub const DEFAULT_TOL: f64 = 1e-7;
pub const DEFAULT_MAX_ITERATIONS: usize = 1000;

/// Minimum-volume enclosing ellipsoid by Khachiyan's barycentric
/// coordinate ascent.
///
/// Iteration stops when the weight update falls below `tol` or after
/// [`DEFAULT_MAX_ITERATIONS`]. The shape matrix is then rescaled so the
/// outermost input point lies exactly on the boundary, which makes
/// containment hold regardless of where the iteration stopped.
pub fn mvee(points: &[DVector<f64>], tol: f64) -> Result<Ellipsoid> {
    mvee_with_limit(points, tol, DEFAULT_MAX_ITERATIONS)
}

pub fn mvee_with_limit(points: &[DVector<f64>], tol: f64, max_iterations: usize) -> Result<Ellipsoid> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "MVEE tolerance must be positive, got {tol}"
        )));
    }
    let n = points.len();
    let d = points.first().map_or(0, |p| p.len());
    if d == 0 || n < d + 1 {
        return Err(Error::Degenerate(format!(
            "need at least {} points in dimension {d}, got {n}",
            d + 1
        )));
    }
    if points.iter().any(|p| p.len() != d) {
        return Err(Error::Degenerate("points have mixed dimensions".into()));
    }

    let p = DMatrix::from_fn(d, n, |i, j| points[j][i]);
    let mean = p.column_mean();
    let centered = DMatrix::from_fn(d, n, |i, j| p[(i, j)] - mean[i]);
    let sv = centered.singular_values();
    let (smax, smin) = (sv.max(), sv.min());
    if !(smax > 0.0) || smin <= 1e-10 * smax {
        return Err(Error::Degenerate(
            "points are not affinely independent (e.g. collinear in the plane)".into(),
        ));
    }

    // Lifted points q_j = (p_j, 1).
    let q = DMatrix::from_fn(d + 1, n, |i, j| if i < d { p[(i, j)] } else { 1.0 });
    let mut u = DVector::from_element(n, 1.0 / n as f64);
    let lifted_dim = (d + 1) as f64;

    for _ in 0..max_iterations {
        let x = &q * DMatrix::from_diagonal(&u) * q.transpose();
        let chol = x
            .cholesky()
            .ok_or_else(|| Error::Degenerate("moment matrix lost definiteness".into()))?;
        let (j, m) = (0..n)
            .map(|j| {
                let qj = q.column(j).into_owned();
                (j, qj.dot(&chol.solve(&qj)))
            })
            .fold((0, f64::NEG_INFINITY), |best, c| if c.1 > best.1 { c } else { best });
        let step = (m - lifted_dim) / (lifted_dim * (m - 1.0));
        let mut next = &u * (1.0 - step);
        next[j] += step;
        let change = (&next - &u).norm();
        u = next;
        if change < tol {
            break;
        }
    }

    let center = &p * &u;
    let scatter = &p * DMatrix::from_diagonal(&u) * p.transpose() - &center * center.transpose();
    let inv = scatter
        .try_inverse()
        .ok_or_else(|| Error::Degenerate("scatter matrix is singular".into()))?;
    let mut shape = inv / d as f64;
    shape = (&shape + shape.transpose()) * 0.5;

    let outer = points
        .iter()
        .map(|pt| {
            let r = pt - &center;
            r.dot(&(&shape * &r))
        })
        .fold(0.0, f64::max);
    shape /= outer;
    Ellipsoid::new(center, shape)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn pts(raw: &[[f64; 2]]) -> Vec<DVector<f64>> {
        raw.iter().map(|p| DVector::from_row_slice(p)).collect()
    }

    #[test]
    fn unit_square_gives_circumscribed_circle() {
        let e = mvee(&pts(&[[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]), DEFAULT_TOL).unwrap();
        assert!((e.center[0] - 0.5).abs() < 1e-9);
        assert!((e.center[1] - 0.5).abs() < 1e-9);
        let expected = DMatrix::identity(2, 2) * 2.0;
        assert!((&e.shape - expected).amax() < 1e-6);
        for p in pts(&[[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]) {
            assert!((e.level(&p) - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn recovers_known_ellipse() {
        // Rotated ellipse with semi-axes 2 and 0.5 centred at (1, -3).
        let (a, b, rot) = (2.0_f64, 0.5_f64, 0.4_f64);
        let r = DMatrix::from_row_slice(2, 2, &[rot.cos(), -rot.sin(), rot.sin(), rot.cos()]);
        let diag = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0 / (a * a), 1.0 / (b * b)]));
        let e_true = &r * diag * r.transpose();
        let c = DVector::from_vec(vec![1.0, -3.0]);
        let points: Vec<_> = (0..40)
            .map(|k| {
                let t = 2.0 * PI * k as f64 / 40.0;
                let local = DVector::from_vec(vec![a * t.cos(), b * t.sin()]);
                &c + &r * local
            })
            .collect();
        let e = mvee_with_limit(&points, 1e-10, 20_000).unwrap();
        assert!((&e.center - &c).amax() < 1e-4);
        assert!((&e.shape - &e_true).amax() / e_true.amax() < 1e-3);
        for p in &points {
            assert!(e.level(p) <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn collinear_points_are_degenerate() {
        let err = mvee(&pts(&[[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]]), DEFAULT_TOL).unwrap_err();
        assert!(matches!(err, Error::Degenerate(_)));
        assert!(mvee(&pts(&[[0.0, 0.0], [1.0, 1.0]]), DEFAULT_TOL).is_err());
    }
}
