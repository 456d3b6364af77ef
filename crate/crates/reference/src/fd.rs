//! Central finite differences for gradient checks.

/// d f / d x_i at `at`, one coordinate at a time.
pub fn central_gradient(f: impl Fn(&[f64]) -> f64, at: &[f64], h: f64) -> Vec<f64> {
    let mut grad = Vec::with_capacity(at.len());
    let mut x = at.to_vec();
    for i in 0..at.len() {
        let orig = x[i];
        x[i] = orig + h;
        let above = f(&x);
        x[i] = orig - h;
        let below = f(&x);
        x[i] = orig;
        grad.push((above - below) / (2.0 * h));
    }
    grad
}

/// Largest relative error between an analytic and a numerical gradient,
/// with an absolute floor for near-zero coordinates.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}
