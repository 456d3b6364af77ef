//! Dense reference solver for the one-class SVM dual:
//!
//! ```text
//!     minimize    1/2 a' Q a
//!     subject to  0 <= a_i <= cap,   sum a_i = 1
//! ```
//!
//! Projected gradient with an exact capped-simplex projection, run to a
//! tight fixed-point tolerance. Quadratic in problem size; intended for
//! l <= a few hundred.

/// Euclidean projection onto { 0 <= x_i <= cap, sum x_i = 1 } by bisection
/// on the simplex shift.
pub fn project_capped_simplex(v: &[f64], cap: f64) -> Vec<f64> {
    let total_at = |tau: f64| -> f64 {
        v.iter().map(|&x| (x - tau).clamp(0.0, cap)).sum()
    };
    let mut lo = v.iter().cloned().fold(f64::INFINITY, f64::min) - cap - 1.0;
    let mut hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    // sum is non-increasing in tau; bracket and bisect
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if total_at(mid) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let tau = 0.5 * (lo + hi);
    v.iter().map(|&x| (x - tau).clamp(0.0, cap)).collect()
}

pub struct QpSolution {
    pub alpha: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
}

/// `q` is the dense row-major l x l kernel matrix.
pub fn solve_ocsvm_dual(q: &[f64], l: usize, cap: f64) -> QpSolution {
    assert_eq!(q.len(), l * l);

    // Lipschitz bound: infinity norm of the symmetric matrix
    let lipschitz = (0..l)
        .map(|i| q[i * l..(i + 1) * l].iter().map(|v| v.abs()).sum::<f64>())
        .fold(f64::MIN, f64::max)
        .max(1e-12);
    let step = 1.0 / lipschitz;

    let mut alpha = project_capped_simplex(&vec![1.0 / l as f64; l], cap);
    let mut iterations = 0;
    for it in 0..200_000 {
        iterations = it + 1;
        let gradient: Vec<f64> = (0..l)
            .map(|i| {
                q[i * l..(i + 1) * l]
                    .iter()
                    .zip(&alpha)
                    .map(|(&qij, &aj)| qij * aj)
                    .sum()
            })
            .collect();
        let moved: Vec<f64> = alpha
            .iter()
            .zip(&gradient)
            .map(|(&a, &g)| a - step * g)
            .collect();
        let next = project_capped_simplex(&moved, cap);
        let delta = alpha
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        alpha = next;
        if delta < 1e-13 {
            break;
        }
    }

    let mut objective = 0.0;
    for i in 0..l {
        for j in 0..l {
            objective += alpha[i] * q[i * l + j] * alpha[j];
        }
    }
    objective *= 0.5;

    QpSolution {
        alpha,
        objective,
        iterations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn projection_satisfies_constraints() {
        let p = project_capped_simplex(&[0.9, -0.4, 0.3, 0.8], 0.5);
        let sum: f64 = p.iter().sum();
        assert!((sum - 1.0).abs() < 1e-10);
        for &x in &p {
            assert!((0.0..=0.5 + 1e-12).contains(&x));
        }
    }

    #[test]
    fn identity_q_spreads_mass_uniformly() {
        let l = 4;
        let mut q = vec![0.0; l * l];
        for i in 0..l {
            q[i * l + i] = 1.0;
        }
        let sol = solve_ocsvm_dual(&q, l, 1.0);
        for &a in &sol.alpha {
            assert!((a - 0.25).abs() < 1e-8);
        }
        assert!((sol.objective - 0.125).abs() < 1e-10);
    }
}
