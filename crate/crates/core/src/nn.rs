//! Minimal feed-forward network shared by the region and scene classifiers:
//! dense layers with rectifier activations, a softmax cross-entropy head,
//! and seeded mini-batch training. Everything is f64 and deterministic per
//! seed.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;
use crate::matrix::FeatureMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(crate) struct Dense {
    /// Row-major `[out_dim][in_dim]`.
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Dense {
    fn new(in_dim: usize, out_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let w = (0..in_dim * out_dim)
            .map(|_| rng.random_range(-bound..bound))
            .collect();
        Dense {
            w,
            b: vec![0.0; out_dim],
            in_dim,
            out_dim,
        }
    }

    fn apply(&self, input: &[f64], output: &mut Vec<f64>) {
        output.clear();
        for o in 0..self.out_dim {
            let row = &self.w[o * self.in_dim..(o + 1) * self.in_dim];
            output.push(math::dot(row, input) + self.b[o]);
        }
    }
}

/// Dense layers with ReLU between them and raw logits at the end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(crate) struct Mlp {
    pub layers: Vec<Dense>,
}

impl Mlp {
    pub fn new(dims: &[usize], seed: u64) -> Self {
        assert!(dims.len() >= 2, "need at least input and output dims");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = dims
            .windows(2)
            .map(|w| Dense::new(w[0], w[1], &mut rng))
            .collect();
        Mlp { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        let mut current = x.to_vec();
        let mut next = Vec::new();
        for (li, layer) in self.layers.iter().enumerate() {
            layer.apply(&current, &mut next);
            if li + 1 < self.layers.len() {
                for v in next.iter_mut() {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
            std::mem::swap(&mut current, &mut next);
        }
        current
    }

    pub fn log_probabilities(&self, x: &[f64]) -> Vec<f64> {
        let mut logits = self.logits(x);
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

    /// Mean cross-entropy of soft targets (each row of `targets` sums to 1).
    pub fn mean_cross_entropy(&self, x: &FeatureMatrix, targets: &[Vec<f64>]) -> f64 {
        let mut loss = 0.0;
        for i in 0..x.rows() {
            let log_p = self.log_probabilities(x.row(i));
            loss -= math::dot(&log_p, &targets[i]);
        }
        loss / x.rows() as f64
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    pub fn parameters(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.parameter_count());
        for l in &self.layers {
            out.extend_from_slice(&l.w);
            out.extend_from_slice(&l.b);
        }
        out
    }

    pub fn set_parameters(&mut self, params: &[f64]) {
        assert_eq!(params.len(), self.parameter_count());
        let mut at = 0;
        for l in &mut self.layers {
            let wl = l.w.len();
            l.w.copy_from_slice(&params[at..at + wl]);
            at += wl;
            let bl = l.b.len();
            l.b.copy_from_slice(&params[at..at + bl]);
            at += bl;
        }
    }

    /// Gradient of the mean cross-entropy over the given rows, flattened in
    /// `parameters()` order.
    pub fn cross_entropy_gradient(
        &self,
        x: &FeatureMatrix,
        targets: &[Vec<f64>],
        rows: &[usize],
    ) -> Vec<f64> {
        let mut grads: Vec<(Vec<f64>, Vec<f64>)> = self
            .layers
            .iter()
            .map(|l| (vec![0.0; l.w.len()], vec![0.0; l.b.len()]))
            .collect();
        let inv = 1.0 / rows.len() as f64;

        for &i in rows {
            // forward with cached post-activation values
            let mut activations: Vec<Vec<f64>> = vec![x.row(i).to_vec()];
            for (li, layer) in self.layers.iter().enumerate() {
                let mut out = Vec::new();
                layer.apply(activations.last().unwrap(), &mut out);
                if li + 1 < self.layers.len() {
                    for v in out.iter_mut() {
                        if *v < 0.0 {
                            *v = 0.0;
                        }
                    }
                }
                activations.push(out);
            }

            // softmax cross-entropy head: dL/dlogits = p - target
            let logits = activations.last().unwrap();
            let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let norm: f64 = logits.iter().map(|&s| (s - max).exp()).sum();
            let mut delta: Vec<f64> = logits
                .iter()
                .zip(&targets[i])
                .map(|(&s, &t)| (s - max).exp() / norm - t)
                .collect();

            for li in (0..self.layers.len()).rev() {
                let input = &activations[li];
                let layer = &self.layers[li];
                let (gw, gb) = &mut grads[li];
                for o in 0..layer.out_dim {
                    let d = delta[o] * inv;
                    gb[o] += d;
                    math::axpy(d, input, &mut gw[o * layer.in_dim..(o + 1) * layer.in_dim]);
                }
                if li > 0 {
                    let mut prev = vec![0.0; layer.in_dim];
                    for o in 0..layer.out_dim {
                        let row = &layer.w[o * layer.in_dim..(o + 1) * layer.in_dim];
                        math::axpy(delta[o], row, &mut prev);
                    }
                    // rectifier gate: activation zero means the unit was off
                    for (p, &a) in prev.iter_mut().zip(&activations[li]) {
                        if a <= 0.0 {
                            *p = 0.0;
                        }
                    }
                    delta = prev;
                }
            }
        }

        let mut flat = Vec::with_capacity(self.parameter_count());
        for (gw, gb) in grads {
            flat.extend(gw);
            flat.extend(gb);
        }
        flat
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct TrainOptions {
    pub epochs: usize,
    pub batch_size: usize,
    pub step: f64,
    pub seed: u64,
    pub cosine_decay: bool,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct TrainLog {
    pub final_loss: f64,
    pub epochs_run: usize,
}

/// Seeded mini-batch gradient descent on mean cross-entropy.
pub(crate) fn train(
    mlp: &mut Mlp,
    x: &FeatureMatrix,
    targets: &[Vec<f64>],
    options: &TrainOptions,
) -> Result<TrainLog> {
    assert_eq!(x.rows(), targets.len());
    if x.rows() == 0 {
        return Err(Error::Config("training set is empty".into()));
    }
    let n = x.rows();
    let batch = options.batch_size.clamp(1, n);
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut order: Vec<usize> = (0..n).collect();

    for epoch in 0..options.epochs {
        // Fisher-Yates, seeded
        for i in (1..n).rev() {
            let j = rng.random_range(0..=i);
            order.swap(i, j);
        }
        let lr = if options.cosine_decay {
            let t = epoch as f64 / options.epochs.max(1) as f64;
            options.step * 0.5 * (1.0 + (std::f64::consts::PI * t).cos())
        } else {
            options.step
        };

        for chunk in order.chunks(batch) {
            let grad = mlp.cross_entropy_gradient(x, targets, chunk);
            let mut params = mlp.parameters();
            math::axpy(-lr, &grad, &mut params);
            mlp.set_parameters(&params);
        }

        if epoch % 16 == 0 || epoch + 1 == options.epochs {
            let loss = mlp.mean_cross_entropy(x, targets);
            if !loss.is_finite() {
                return Err(Error::Divergence { step: options.step });
            }
        }
    }

    let final_loss = mlp.mean_cross_entropy(x, targets);
    if !final_loss.is_finite() {
        return Err(Error::Divergence { step: options.step });
    }
    Ok(TrainLog {
        final_loss,
        epochs_run: options.epochs,
    })
}

/// One-hot target rows with optional label smoothing applied to a subset.
pub(crate) fn smoothed_targets(
    labels: &[usize],
    classes: usize,
    smoothing: f64,
    smooth_row: impl Fn(usize) -> bool,
) -> Vec<Vec<f64>> {
    labels
        .iter()
        .enumerate()
        .map(|(i, &label)| {
            let mut row = vec![0.0; classes];
            if smoothing > 0.0 && smooth_row(i) {
                for v in row.iter_mut() {
                    *v = smoothing / classes as f64;
                }
                row[label] += 1.0 - smoothing;
            } else {
                row[label] = 1.0;
            }
            row
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_give_uniform_probabilities() {
        let mlp = Mlp {
            layers: vec![Dense {
                w: vec![0.0; 3 * 4],
                b: vec![0.0; 4],
                in_dim: 3,
                out_dim: 4,
            }],
        };
        let p = mlp.probabilities(&[0.3, -0.2, 0.9]);
        for &v in &p {
            assert!((v - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn parameters_round_trip() {
        let mut mlp = Mlp::new(&[5, 4, 3], 9);
        let p = mlp.parameters();
        let mut other = Mlp::new(&[5, 4, 3], 1234);
        other.set_parameters(&p);
        assert_eq!(mlp.parameters(), other.parameters());
        mlp.set_parameters(&p);
        assert_eq!(mlp.parameters(), p);
    }
}
