//! Central differences written independently of the library's own
//! difference helpers, and suites comparing them with the analytic
//! derivatives.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tpfc::scenario::preset;
use tpfc::simulation::Problem;

pub const POINTS: usize = 100;
pub const TOL: f64 = 1e-4;

pub fn problem(name: &str) -> Problem {
    preset(name).unwrap().to_problem().unwrap()
}

/// Random state in a box that keeps every model away from its singular
/// configurations (pitch near ±π/2 for the quadrotor).
pub fn random_point(p: &Problem, rng: &mut ChaCha8Rng) -> (DVector<f64>, DVector<f64>) {
    let nx = p.model.n_x();
    let x = DVector::from_fn(nx, |i, _| match (p.model.id(), i) {
        (_, 0 | 1) => rng.random_range(-1.0..7.0),
        ("quadrotor12", 2) => rng.random_range(0.0..4.0),
        ("quadrotor12", 3..=5) => rng.random_range(-0.8..0.8),
        ("quadrotor12", _) => rng.random_range(-2.0..2.0),
        ("car4" | "trailer6", 3) => rng.random_range(-0.6..0.6),
        _ => rng.random_range(-3.0..3.0),
    });
    let b = p.solver.bounds.as_ref().unwrap();
    let u = DVector::from_fn(p.model.n_u(), |j, _| rng.random_range(b.lower[j]..b.upper[j]));
    (x, u)
}

pub fn rel(a: &DMatrix<f64>, fd: &DMatrix<f64>) -> f64 {
    (a - fd).amax() / a.amax().max(1.0)
}

/// Jacobian of `f` at `z` by central differences.
pub fn jacobian(f: &dyn Fn(&DVector<f64>) -> DVector<f64>, z: &DVector<f64>, h: f64) -> DMatrix<f64> {
    let m = f(z).len();
    let mut j = DMatrix::zeros(m, z.len());
    for k in 0..z.len() {
        let mut zp = z.clone();
        let mut zm = z.clone();
        zp[k] += h;
        zm[k] -= h;
        j.set_column(k, &((f(&zp) - f(&zm)) / (2.0 * h)));
    }
    j
}

/// Hessian of each output component of `f` at `z`, by the four-point
/// mixed difference.
pub fn hessians(f: &dyn Fn(&DVector<f64>) -> DVector<f64>, z: &DVector<f64>, h: f64) -> Vec<DMatrix<f64>> {
    let n = z.len();
    let m = f(z).len();
    let mut out = vec![DMatrix::zeros(n, n); m];
    let at = |d: &[(usize, f64)]| {
        let mut w = z.clone();
        d.iter().for_each(|&(k, s)| w[k] += s);
        f(&w)
    };
    for a in 0..n {
        for b in a..n {
            let v = (at(&[(a, h), (b, h)]) - at(&[(a, h), (b, -h)]) - at(&[(a, -h), (b, h)]) + at(&[(a, -h), (b, -h)]))
                / (4.0 * h * h);
            for i in 0..m {
                out[i][(a, b)] = v[i];
                out[i][(b, a)] = v[i];
            }
        }
    }
    out
}

/// Worst relative error of `A`, `B` and both curvature tensors over
/// random points.
pub fn dynamics_suite(name: &str) -> f64 {
    let p = problem(name);
    let (nx, nu) = (p.model.n_x(), p.model.n_u());
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for _ in 0..POINTS {
        let (x, u) = random_point(&p, &mut rng);
        let lin = p.model.linearize(&x, &u).unwrap();
        let z = DVector::from_iterator(nx + nu, x.iter().chain(u.iter()).copied());
        let f = |z: &DVector<f64>| {
            p.model
                .step(&z.rows(0, nx).into_owned(), &z.rows(nx, nu).into_owned())
                .unwrap()
        };
        let jac = jacobian(&f, &z, 1e-6);
        worst = worst.max(rel(&lin.a, &jac.columns(0, nx).into_owned()));
        worst = worst.max(rel(&lin.b, &jac.columns(nx, nu).into_owned()));
        let hs = hessians(&f, &z, 1e-4);
        for i in 0..nx {
            worst = worst.max(rel(&lin.rxx.slices[i], &hs[i].view((0, 0), (nx, nx)).into_owned()));
            worst = worst.max(rel(&lin.rxu.slices[i], &hs[i].view((0, nx), (nx, nu)).into_owned()));
            // The map is affine in u, so the control block vanishes.
            assert!(
                hs[i].view((nx, nx), (nu, nu)).amax() < 1e-5,
                "{name}: control curvature"
            );
        }
    }
    worst
}

/// Worst relative error of the running and terminal cost derivatives.
pub fn cost_suite(name: &str) -> f64 {
    let p = problem(name);
    let nx = p.model.n_x();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut worst: f64 = 0.0;
    for _ in 0..POINTS {
        let (x, u) = random_point(&p, &mut rng);
        let d = p.cost.cost_derivatives(&x, &u).unwrap();
        let step = |x: &DVector<f64>| DVector::from_element(1, p.cost.step_cost(x, &u).unwrap());
        let grad = jacobian(&step, &x, 1e-6).transpose();
        worst = worst.max(rel(&DMatrix::from_column_slice(nx, 1, d.lx.as_slice()), &grad));
        worst = worst.max(rel(&d.lxx, &hessians(&step, &x, 1e-4)[0]));

        let ctrl = |u: &DVector<f64>| DVector::from_element(1, p.cost.step_cost(&x, u).unwrap());
        let gu = jacobian(&ctrl, &u, 1e-6).transpose();
        worst = worst.max(rel(&DMatrix::from_column_slice(u.len(), 1, d.r_u.as_slice()), &gu));
        worst = worst.max(rel(&d.r, &hessians(&ctrl, &u, 1e-4)[0]));

        let (c, g, h) = p.cost.terminal_derivatives(&x);
        let term = |x: &DVector<f64>| DVector::from_element(1, p.cost.terminal_cost(x));
        assert_eq!(c, p.cost.terminal_cost(&x));
        worst = worst.max(rel(
            &DMatrix::from_column_slice(nx, 1, g.as_slice()),
            &jacobian(&term, &x, 1e-6).transpose(),
        ));
        worst = worst.max(rel(&h, &hessians(&term, &x, 1e-4)[0]));
    }
    worst
}
