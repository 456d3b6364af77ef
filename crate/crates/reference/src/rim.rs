//! Direct transcription of the clustering objective
//! `H(p_bar) - mean_i H(p_i) - lambda * ||W||^2` with a naive softmax.

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&s| (s - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.iter().map(|&e| e / total).collect()
}

fn entropy(p: &[f64]) -> f64 {
    -p.iter()
        .map(|&v| if v > 0.0 { v * v.ln() } else { 0.0 })
        .sum::<f64>()
}

pub fn objective(weights: &[Vec<f64>], biases: &[f64], lambda: f64, rows: &[Vec<f64>]) -> f64 {
    let k = weights.len();
    let n = rows.len();

    let mut mean_p = vec![0.0; k];
    let mut mean_entropy = 0.0;
    for row in rows {
        let logits: Vec<f64> = (0..k)
            .map(|c| {
                weights[c]
                    .iter()
                    .zip(row)
                    .map(|(w, x)| w * x)
                    .sum::<f64>()
                    + biases[c]
            })
            .collect();
        let p = softmax(&logits);
        mean_entropy += entropy(&p);
        for (m, &v) in mean_p.iter_mut().zip(&p) {
            *m += v;
        }
    }
    mean_entropy /= n as f64;
    for m in mean_p.iter_mut() {
        *m /= n as f64;
    }

    let penalty: f64 = weights
        .iter()
        .map(|w| w.iter().map(|v| v * v).sum::<f64>())
        .sum();

    entropy(&mean_p) - mean_entropy - lambda * penalty
}
