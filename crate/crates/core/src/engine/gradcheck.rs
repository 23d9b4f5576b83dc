//! Finite-difference verification of analytic derivative oracles.

use nalgebra::{DMatrix, DVector};

use super::{ConvexProgram, SmoothFunction};

const REL_STEP: f64 = 1e-6;
/// Gradient differencing for the Hessian uses a longer step.
const HESS_STEP: f64 = 1e-4;
/// Hessian discrepancies below this fraction of the gradient scale cannot be
/// resolved by differencing and are not reported.
const HESS_FLOOR: f64 = 1e-6;

/// Per-coordinate scale `|z_i|` (1 at zero); steps are `1e-6` of it.
fn scales(z: &DVector<f64>) -> DVector<f64> {
    z.map(|v| if v != 0.0 { v.abs() } else { 1.0 })
}

/// Largest relative discrepancy between the analytic gradient and Hessian of
/// `f` and central differences at `z`.
///
/// Derivatives are compared in coordinates normalized by `|z_i|` and
/// relative to the largest normalized entry, so variables of very different
/// magnitude are weighed equally. Hessian entries are judged against at least
/// `1e-6` of the largest gradient entry.
pub fn function_derivative_error(f: &dyn SmoothFunction, z: &DVector<f64>) -> f64 {
    let n = z.len();
    let s = scales(z);
    let grad = f.gradient(z).component_mul(&s);
    let hess = {
        let h = f.hessian(z);
        DMatrix::from_fn(n, n, |i, j| h[(i, j)] * s[i] * s[j])
    };
    let mut fd_grad = DVector::zeros(n);
    let mut fd_hess = DMatrix::zeros(n, n);
    for i in 0..n {
        let step = REL_STEP * s[i];
        let mut plus = z.clone();
        let mut minus = z.clone();
        plus[i] += step;
        minus[i] -= step;
        fd_grad[i] = (f.value(&plus) - f.value(&minus)) / (2.0 * step) * s[i];
        let step = HESS_STEP * s[i];
        let mut plus = z.clone();
        let mut minus = z.clone();
        plus[i] += step;
        minus[i] -= step;
        let dg = (f.gradient(&plus) - f.gradient(&minus)) / (2.0 * step);
        for j in 0..n {
            fd_hess[(j, i)] = dg[j] * s[i] * s[j];
        }
    }
    let grad_err = relative_gap(grad.as_slice(), fd_grad.as_slice(), 0.0);
    let floor = HESS_FLOOR * grad.amax();
    let hess_err = relative_gap(hess.as_slice(), fd_hess.as_slice(), floor);
    grad_err.max(hess_err)
}

fn relative_gap(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    let scale = analytic
        .iter()
        .chain(numeric)
        .fold(floor, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    analytic
        .iter()
        .zip(numeric)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
        / scale
}

/// Worst derivative error over the objective and every constraint.
pub fn check_gradients(prog: &ConvexProgram, z: &DVector<f64>) -> f64 {
    std::iter::once(&prog.objective)
        .chain(prog.constraints.iter())
        .map(|f| function_derivative_error(f.as_ref(), z))
        .fold(0.0, f64::max)
}
