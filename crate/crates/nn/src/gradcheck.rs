//! Central finite-difference probes for validating analytic gradients.

use ndarray::ArrayD;

/// Numeric gradient of a scalar-valued function via central differences.
pub fn central_diff_grad<F>(mut f: F, x0: &ArrayD<f64>, eps: f64) -> ArrayD<f64>
where
    F: FnMut(&ArrayD<f64>) -> f64,
{
    let mut grad = ArrayD::zeros(x0.raw_dim());
    let mut x = x0.clone();
    for idx in 0..x0.len() {
        let orig = x.as_slice_mut().unwrap()[idx];
        x.as_slice_mut().unwrap()[idx] = orig + eps;
        let fp = f(&x);
        x.as_slice_mut().unwrap()[idx] = orig - eps;
        let fm = f(&x);
        x.as_slice_mut().unwrap()[idx] = orig;
        grad.as_slice_mut().unwrap()[idx] = (fp - fm) / (2.0 * eps);
    }
    grad
}

/// Worst-case relative disagreement between two gradients, with a small
/// absolute floor so near-zero entries compare sanely.
pub fn max_rel_err(analytic: &ArrayD<f64>, numeric: &ArrayD<f64>) -> f64 {
    assert_eq!(analytic.shape(), numeric.shape());
    analytic
        .iter()
        .zip(numeric.iter())
        .map(|(&a, &n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-6))
        .fold(0.0, f64::max)
}
