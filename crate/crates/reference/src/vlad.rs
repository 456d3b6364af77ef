//! Reference VLAD: nearest-center residual sums (ties to the smaller
//! cluster), per-cluster linear projection, signed square root, L2
//! normalization. Written with explicit index loops.

/// `projections[c]` is an `m x d` matrix as rows. Empty clusters are skipped
/// during assignment but still contribute their (all-zero) block.
pub fn encode(
    region_features: &[Vec<f64>],
    centers: &[Vec<f64>],
    empty: &[bool],
    projections: &[Vec<Vec<f64>>],
) -> Vec<f64> {
    let k = centers.len();
    let d = centers.first().map(|c| c.len()).unwrap_or(0);

    let mut sums = vec![vec![0.0; d]; k];
    for feature in region_features {
        let mut best: Option<usize> = None;
        let mut best_d = f64::INFINITY;
        for c in 0..k {
            if empty[c] {
                continue;
            }
            let mut dist = 0.0;
            for a in 0..d {
                let diff = feature[a] - centers[c][a];
                dist += diff * diff;
            }
            if dist < best_d {
                best_d = dist;
                best = Some(c);
            }
        }
        if let Some(c) = best {
            for a in 0..d {
                sums[c][a] += feature[a] - centers[c][a];
            }
        }
    }

    let mut out = Vec::new();
    for c in 0..k {
        for row in &projections[c] {
            let mut v = 0.0;
            for a in 0..d {
                v += row[a] * sums[c][a];
            }
            out.push(v);
        }
    }

    for v in out.iter_mut() {
        *v = if *v >= 0.0 { v.sqrt() } else { -(-*v).sqrt() };
    }
    let norm: f64 = out.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        for v in out.iter_mut() {
            *v /= norm;
        }
    }
    out
}
