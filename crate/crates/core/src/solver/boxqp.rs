use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

/// Solution of `min ½ xᵀ H x + gᵀ x` subject to `lower ≤ x ≤ upper`.
pub(crate) struct BoxQp {
    pub x: DVector<f64>,
    /// Components not held at a bound by an outward-pointing gradient.
    pub free: Vec<bool>,
    /// Cholesky factor of `H` restricted to the free set.
    pub free_factor: Option<Cholesky<f64, Dyn>>,
}

impl BoxQp {
    /// Feedback rows for the free components, `-H_ff⁻¹ C_f`; clamped rows are zero.
    pub fn gains(&self, cross: &DMatrix<f64>) -> DMatrix<f64> {
        let mut k = DMatrix::zeros(self.free.len(), cross.ncols());
        if let Some(chol) = &self.free_factor {
            let idx = free_indices(&self.free);
            let rows = cross.select_rows(&idx);
            let kf = -chol.solve(&rows);
            for (r, &i) in idx.iter().enumerate() {
                k.set_row(i, &kf.row(r));
            }
        }
        k
    }
}

fn free_indices(free: &[bool]) -> Vec<usize> {
    free.iter().enumerate().filter(|(_, &f)| f).map(|(i, _)| i).collect()
}

fn clamp(x: &DVector<f64>, lower: &DVector<f64>, upper: &DVector<f64>) -> DVector<f64> {
    x.zip_zip_map(lower, upper, |v, lo, hi| v.max(lo).min(hi))
}

fn factor_free(h: &DMatrix<f64>, free: &[bool]) -> Option<Option<Cholesky<f64, Dyn>>> {
    let idx = free_indices(free);
    if idx.is_empty() {
        return Some(None);
    }
    let hff = h.select_rows(&idx).select_columns(&idx);
    hff.cholesky().map(Some)
}

/// Projected Newton method. Returns `None` when the Hessian restricted to
/// the free set is not positive definite.
pub(crate) fn solve(h: &DMatrix<f64>, g: &DVector<f64>, lower: &DVector<f64>, upper: &DVector<f64>) -> Option<BoxQp> {
    let n = g.len();
    let value = |x: &DVector<f64>| g.dot(x) + 0.5 * x.dot(&(h * x));
    let clamped_set = |x: &DVector<f64>, grad: &DVector<f64>| -> Vec<bool> {
        (0..n)
            .map(|j| (x[j] <= lower[j] && grad[j] > 0.0) || (x[j] >= upper[j] && grad[j] < 0.0))
            .collect()
    };

    let mut x = clamp(&DVector::zeros(n), lower, upper);
    let mut fx = value(&x);
    let mut previous: Option<Vec<bool>> = None;

    for _ in 0..100 {
        let grad = g + h * &x;
        let clamped = clamped_set(&x, &grad);
        if clamped.iter().all(|&c| c) {
            break;
        }
        let free: Vec<bool> = clamped.iter().map(|c| !c).collect();
        if previous.as_ref() == Some(&clamped) {
            let free_grad = (0..n).filter(|&j| free[j]).map(|j| grad[j].abs()).fold(0.0, f64::max);
            if free_grad < 1e-13 * (1.0 + g.amax()) {
                break;
            }
        }
        previous = Some(clamped);

        let chol = factor_free(h, &free)??;
        let idx = free_indices(&free);
        // Newton step on the free set with clamped components held fixed.
        let grad_free = grad.select_rows(&idx);
        let delta_free = -chol.solve(&grad_free);
        let mut search = DVector::zeros(n);
        for (r, &i) in idx.iter().enumerate() {
            search[i] = delta_free[r];
        }
        let slope = search.dot(&grad);
        if slope >= 0.0 {
            break;
        }

        let mut step = 1.0;
        let mut accepted = None;
        while step > 1e-20 {
            let candidate = clamp(&(&x + &search * step), lower, upper);
            let fc = value(&candidate);
            if (fc - fx) / (step * slope) > 0.1 {
                accepted = Some((candidate, fc));
                break;
            }
            step *= 0.6;
        }
        let Some((candidate, fc)) = accepted else {
            break;
        };
        let improvement = fx - fc;
        x = candidate;
        fx = fc;
        if improvement < 1e-14 * (1.0 + fx.abs()) {
            break;
        }
    }

    let grad = g + h * &x;
    let free: Vec<bool> = clamped_set(&x, &grad).into_iter().map(|c| !c).collect();
    let free_factor = factor_free(h, &free)?;
    Some(BoxQp { x, free, free_factor })
}
