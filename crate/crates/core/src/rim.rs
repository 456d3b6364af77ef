//! Discriminative clustering by regularized information maximization.
//!
//! The cluster-conditional model is multinomial logistic,
//! `p(c|x) = softmax(W x + b)`, and training ascends
//!
//! ```text
//!     J = H(mean_i p(.|x_i)) - (1/n) sum_i H(p(.|x_i)) - lambda * ||W||^2
//! ```
//!
//! (entropies in nats). The first term rewards balanced clusters, the second
//! confident separation, the third caps model complexity. The objective is
//! non-convex; training restarts from distinct seeded k-means++ labelings,
//! each turned into a model by one ridge fit of logits to one-hot labels,
//! and keeps the best final objective.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;
use crate::matrix::FeatureMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RimModel {
    /// Per-cluster weight rows, `[N][d]`.
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
    pub lambda: f64,
}

impl RimModel {
    pub fn num_clusters(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.weights.first().map(|w| w.len()).unwrap_or(0)
    }

    /// Log-probabilities of one row, computed stably.
    pub fn log_probabilities(&self, x: &[f64]) -> Vec<f64> {
        let n = self.num_clusters();
        let mut logits = Vec::with_capacity(n);
        for c in 0..n {
            logits.push(math::dot(&self.weights[c], x) + self.biases[c]);
        }
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let log_norm = logits.iter().map(|&s| (s - max).exp()).sum::<f64>().ln() + max;
        for s in logits.iter_mut() {
            *s -= log_norm;
        }
        logits
    }

    pub fn probabilities(&self, x: &[f64]) -> Vec<f64> {
        self.log_probabilities(x).iter().map(|&lp| lp.exp()).collect()
    }
}

fn entropy_from_log_probs(log_p: &[f64]) -> f64 {
    -log_p
        .iter()
        .map(|&lp| {
            let p = lp.exp();
            if p > 0.0 {
                p * lp
            } else {
                0.0
            }
        })
        .sum::<f64>()
}

/// H(p_bar) - mean_i H(p_i) - lambda * ||W||^2, in nats.
pub fn rim_objective(model: &RimModel, x: &FeatureMatrix) -> f64 {
    let n = x.rows();
    let k = model.num_clusters();
    assert!(n > 0, "objective needs at least one row");

    let mut mean_p = vec![0.0; k];
    let mut mean_entropy = 0.0;
    for i in 0..n {
        let log_p = model.log_probabilities(x.row(i));
        mean_entropy += entropy_from_log_probs(&log_p);
        for (m, &lp) in mean_p.iter_mut().zip(&log_p) {
            *m += lp.exp();
        }
    }
    mean_entropy /= n as f64;
    for m in mean_p.iter_mut() {
        *m /= n as f64;
    }
    let balance_entropy = -mean_p
        .iter()
        .map(|&p| if p > 0.0 { p * p.ln() } else { 0.0 })
        .sum::<f64>();

    let penalty: f64 = model.weights.iter().map(|w| math::dot(w, w)).sum();
    balance_entropy - mean_entropy - model.lambda * penalty
}

#[derive(Debug, Clone, PartialEq)]
pub struct RimGradient {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
}

/// Analytic gradient of `rim_objective` with respect to weights and biases.
pub fn rim_gradient(model: &RimModel, x: &FeatureMatrix) -> RimGradient {
    let n = x.rows();
    let k = model.num_clusters();
    let d = x.dim();
    assert!(n > 0, "gradient needs at least one row");

    // two passes: p_bar first, then per-row logit gradients
    let mut log_rows: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut mean_p = vec![0.0; k];
    for i in 0..n {
        let log_p = model.log_probabilities(x.row(i));
        for (m, &lp) in mean_p.iter_mut().zip(&log_p) {
            *m += lp.exp();
        }
        log_rows.push(log_p);
    }
    for m in mean_p.iter_mut() {
        *m /= n as f64;
    }
    let log_mean_p: Vec<f64> = mean_p
        .iter()
        .map(|&p| if p > 0.0 { p.ln() } else { f64::NEG_INFINITY })
        .collect();

    let mut grad_w = vec![vec![0.0; d]; k];
    let mut grad_b = vec![0.0; k];
    let inv_n = 1.0 / n as f64;

    for (i, log_p) in log_rows.iter().enumerate() {
        let row = x.row(i);
        // r_c = log(p_c / p_bar_c); contributions with p_c = 0 vanish
        let mut row_dot = 0.0;
        let mut r = vec![0.0; k];
        for c in 0..k {
            let p = log_p[c].exp();
            if p > 0.0 {
                r[c] = log_p[c] - log_mean_p[c];
                row_dot += p * r[c];
            }
        }
        for c in 0..k {
            let p = log_p[c].exp();
            if p == 0.0 {
                continue;
            }
            let g = inv_n * p * (r[c] - row_dot);
            grad_b[c] += g;
            math::axpy(g, row, &mut grad_w[c]);
        }
    }

    for c in 0..k {
        math::axpy(-2.0 * model.lambda, &model.weights[c], &mut grad_w[c]);
    }

    RimGradient {
        weights: grad_w,
        biases: grad_b,
    }
}

/// Seeded k-means++ hard labeling: ++ seeding followed by a few Lloyd
/// rounds, stopping early once assignments stabilize.
fn kmeans_pp_labels(x: &FeatureMatrix, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = x.rows();
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(k);
    centers.push(x.row(rng.random_range(0..n)).to_vec());

    let mut d2: Vec<f64> = (0..n)
        .map(|i| math::squared_distance(x.row(i), &centers[0]))
        .collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                target -= w;
                if target <= 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centers.push(x.row(next).to_vec());
        for i in 0..n {
            d2[i] = d2[i].min(math::squared_distance(x.row(i), centers.last().unwrap()));
        }
    }

    let assign = |centers: &[Vec<f64>]| -> Vec<usize> {
        (0..n)
            .map(|i| {
                let mut best = 0;
                let mut best_d = f64::INFINITY;
                for (c, center) in centers.iter().enumerate() {
                    let d = math::squared_distance(x.row(i), center);
                    if d < best_d {
                        best_d = d;
                        best = c;
                    }
                }
                best
            })
            .collect()
    };

    let mut labels = assign(&centers);
    for _ in 0..10 {
        for (c, center) in centers.iter_mut().enumerate() {
            let members: Vec<usize> = (0..n).filter(|&i| labels[i] == c).collect();
            if !members.is_empty() {
                *center = math::mean_of_rows(members.iter().map(|&i| x.row(i)), x.dim());
            }
        }
        let next = assign(&centers);
        if next == labels {
            break;
        }
        labels = next;
    }
    labels
}

/// One ridge fit of logits to one-hot cluster labels, the warm start for
/// gradient ascent.
fn least_squares_warm_start(
    x: &FeatureMatrix,
    labels: &[usize],
    k: usize,
    lambda: f64,
) -> RimModel {
    let n = x.rows();
    let d = x.dim();
    let aug = d + 1;

    let mut gram = nalgebra::DMatrix::<f64>::zeros(aug, aug);
    let mut rhs = nalgebra::DMatrix::<f64>::zeros(aug, k);
    for i in 0..n {
        let row = x.row(i);
        for a in 0..d {
            for b in a..d {
                gram[(a, b)] += row[a] * row[b];
            }
            gram[(a, d)] += row[a];
        }
        gram[(d, d)] += 1.0;
        for a in 0..d {
            rhs[(a, labels[i])] += row[a];
        }
        rhs[(d, labels[i])] += 1.0;
    }
    for a in 0..aug {
        for b in 0..a {
            gram[(a, b)] = gram[(b, a)];
        }
    }
    let ridge = 1e-3 * n as f64 / aug as f64 + 1e-9;
    for a in 0..aug {
        gram[(a, a)] += ridge;
    }

    let solved = gram
        .cholesky()
        .map(|ch| ch.solve(&rhs))
        .unwrap_or_else(|| nalgebra::DMatrix::zeros(aug, k));

    let mut weights = vec![vec![0.0; d]; k];
    let mut biases = vec![0.0; k];
    for c in 0..k {
        for a in 0..d {
            weights[c][a] = solved[(a, c)];
        }
        biases[c] = solved[(d, c)];
    }
    RimModel {
        weights,
        biases,
        lambda,
    }
}

#[derive(Debug, Clone)]
pub struct RimTraining {
    pub model: RimModel,
    /// Final objective of every restart, in restart order.
    pub restart_objectives: Vec<f64>,
    /// Accepted-step objective trace of the winning restart.
    pub objective_trace: Vec<f64>,
}

const MAX_ASCENT_ITERS: usize = 2000;
const OBJECTIVE_TOLERANCE: f64 = 1e-7;
const ARMIJO: f64 = 1e-4;

fn ascend(model: &mut RimModel, x: &FeatureMatrix) -> Vec<f64> {
    let mut objective = rim_objective(model, x);
    let mut trace = vec![objective];
    let mut step = 1.0f64;

    for _ in 0..MAX_ASCENT_ITERS {
        let grad = rim_gradient(model, x);
        let grad_norm2: f64 = grad.weights.iter().map(|g| math::dot(g, g)).sum::<f64>()
            + math::dot(&grad.biases, &grad.biases);
        if grad_norm2 < 1e-18 {
            break;
        }

        step = (step * 2.0).min(1e3);
        let mut accepted = false;
        while step > 1e-16 {
            let mut candidate = model.clone();
            for (w, g) in candidate.weights.iter_mut().zip(&grad.weights) {
                math::axpy(step, g, w);
            }
            math::axpy(step, &grad.biases, &mut candidate.biases);
            let cand_obj = rim_objective(&candidate, x);
            if cand_obj >= objective + ARMIJO * step * grad_norm2 {
                let delta = cand_obj - objective;
                *model = candidate;
                objective = cand_obj;
                trace.push(objective);
                accepted = true;
                if delta.abs() < OBJECTIVE_TOLERANCE {
                    return trace;
                }
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    trace
}

/// Trains RIM with `restarts` independent seeded initializations and keeps
/// the model with the highest objective. Deterministic given the seed.
pub fn train_rim(
    x: &FeatureMatrix,
    n_clusters: usize,
    lambda: f64,
    restarts: usize,
    seed: u64,
) -> Result<RimTraining> {
    let n = x.rows();
    if n_clusters < 2 {
        return Err(Error::Config(format!("need at least 2 clusters, got {n_clusters}")));
    }
    if n < n_clusters {
        return Err(Error::Config(format!(
            "cannot form {n_clusters} clusters from {n} rows"
        )));
    }
    if restarts < 1 {
        return Err(Error::Config("need at least 1 restart".into()));
    }
    if lambda < 0.0 {
        return Err(Error::Config(format!("lambda must be >= 0, got {lambda}")));
    }

    let mut best: Option<(f64, RimModel, Vec<f64>)> = None;
    let mut restart_objectives = Vec::with_capacity(restarts);
    for restart in 0..restarts {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(restart as u64);
        let labels = kmeans_pp_labels(x, n_clusters, &mut rng);
        let mut model = least_squares_warm_start(x, &labels, n_clusters, lambda);
        let trace = ascend(&mut model, x);
        let objective = *trace.last().expect("trace never empty");
        restart_objectives.push(objective);
        let better = match &best {
            None => true,
            Some((best_obj, _, _)) => objective > *best_obj,
        };
        if better {
            best = Some((objective, model, trace));
        }
    }

    let (_, model, objective_trace) = best.expect("at least one restart ran");
    Ok(RimTraining {
        model,
        restart_objectives,
        objective_trace,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    /// Hard label per row (argmax probability, ties to the smaller index).
    pub hard_labels: Vec<usize>,
    /// Per-row cluster probabilities, rows summing to 1.
    pub probabilities: Vec<Vec<f64>>,
    /// Mean feature of the hard-assigned rows; zero vector for empty clusters.
    pub cluster_centers: Vec<Vec<f64>>,
    pub sizes: Vec<usize>,
    /// Flags clusters that received no rows.
    pub empty: Vec<bool>,
}

pub fn assign_clusters(model: &RimModel, x: &FeatureMatrix) -> ClusterAssignment {
    let n = x.rows();
    let k = model.num_clusters();
    let d = x.dim();

    let mut hard_labels = Vec::with_capacity(n);
    let mut probabilities = Vec::with_capacity(n);
    for i in 0..n {
        let p = model.probabilities(x.row(i));
        let mut best = 0;
        for c in 1..k {
            if p[c] > p[best] {
                best = c;
            }
        }
        hard_labels.push(best);
        probabilities.push(p);
    }

    let mut cluster_centers = vec![vec![0.0; d]; k];
    let mut sizes = vec![0usize; k];
    for i in 0..n {
        let c = hard_labels[i];
        math::axpy(1.0, x.row(i), &mut cluster_centers[c]);
        sizes[c] += 1;
    }
    let mut empty = vec![false; k];
    for c in 0..k {
        if sizes[c] == 0 {
            empty[c] = true;
        } else {
            for v in cluster_centers[c].iter_mut() {
                *v /= sizes[c] as f64;
            }
        }
    }

    ClusterAssignment {
        hard_labels,
        probabilities,
        cluster_centers,
        sizes,
        empty,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(rows: &[&[f64]]) -> FeatureMatrix {
        FeatureMatrix::from_rows(rows.iter().copied(), rows[0].len()).unwrap()
    }

    fn zero_model(k: usize, d: usize, lambda: f64) -> RimModel {
        RimModel {
            weights: vec![vec![0.0; d]; k],
            biases: vec![0.0; k],
            lambda,
        }
    }

    #[test]
    fn objective_is_zero_for_uniform_model() {
        let x = matrix(&[&[1.0, 0.0], &[0.0, 1.0], &[0.5, 0.5]]);
        let obj = rim_objective(&zero_model(4, 2, 0.3), &x);
        assert_eq!(obj, 0.0);
    }

    #[test]
    fn objective_approaches_ln2_minus_penalty_for_confident_split() {
        // two far-apart points, a near-deterministic two-way model
        let x = matrix(&[&[1.0, 0.0], &[-1.0, 0.0]]);
        let scale = 40.0;
        let model = RimModel {
            weights: vec![vec![scale, 0.0], vec![-scale, 0.0]],
            biases: vec![0.0, 0.0],
            lambda: 1e-6,
        };
        let penalty = 1e-6 * 2.0 * scale * scale;
        let obj = rim_objective(&model, &x);
        assert!((obj - (std::f64::consts::LN_2 - penalty)).abs() < 1e-9, "obj = {obj}");
    }

    #[test]
    fn gradient_vanishes_at_uniform_point() {
        let x = matrix(&[&[1.0, 2.0], &[3.0, -1.0], &[0.0, 0.5], &[2.0, 2.0]]);
        let grad = rim_gradient(&zero_model(3, 2, 0.0), &x);
        for g in &grad.weights {
            for &v in g {
                assert_eq!(v, 0.0);
            }
        }
        for &v in &grad.biases {
            assert_eq!(v, 0.0);
        }
    }

    #[test]
    fn regularizer_gradient_is_linear_in_lambda() {
        let x = matrix(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let mut model = zero_model(2, 2, 0.1);
        model.weights = vec![vec![0.3, -0.2], vec![-0.5, 0.4]];
        model.biases = vec![0.1, -0.1];
        let g1 = rim_gradient(&model, &x);
        let mut doubled = model.clone();
        doubled.lambda = 0.2;
        let g2 = rim_gradient(&doubled, &x);
        for c in 0..2 {
            for a in 0..2 {
                let reg1 = g1.weights[c][a] + 2.0 * 0.1 * model.weights[c][a];
                let reg2 = g2.weights[c][a] + 2.0 * 0.2 * model.weights[c][a];
                // data parts identical; penalty parts scale exactly
                assert!((reg1 - reg2).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn repeated_rows_get_identical_assignments() {
        let x = matrix(&[&[0.3, 0.7], &[0.3, 0.7], &[0.9, 0.1]]);
        let mut model = zero_model(2, 2, 0.0);
        model.weights = vec![vec![1.0, -1.0], vec![-1.0, 1.0]];
        let assignment = assign_clusters(&model, &x);
        assert_eq!(assignment.hard_labels[0], assignment.hard_labels[1]);
        assert_eq!(assignment.probabilities[0], assignment.probabilities[1]);
    }

    #[test]
    fn symmetric_two_cluster_model_swaps_with_sign() {
        let mut model = zero_model(2, 3, 0.0);
        model.weights = vec![vec![0.5, -1.0, 0.25], vec![-0.5, 1.0, -0.25]];
        let x = [0.2, 0.4, -0.6];
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        let p = model.probabilities(&x);
        let q = model.probabilities(&neg);
        assert!((p[0] + p[1] - 1.0).abs() < 1e-12);
        assert!((p[0] - q[1]).abs() < 1e-12);
        assert!((p[1] - q[0]).abs() < 1e-12);
    }
}
