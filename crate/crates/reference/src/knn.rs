//! Exhaustive kNN screening weights by full sort, including the same-image
//! exclusion and (distance, patch id) tie-break.

pub struct KnnPatch {
    pub patch_id: u64,
    pub image_id: u64,
    pub label: usize,
    pub feature: Vec<f64>,
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Returns (patch_id, K_y) per input patch, sorted by patch_id.
pub fn screening_weights(patches: &[KnnPatch], k: usize) -> Vec<(u64, u32)> {
    let mut out = Vec::with_capacity(patches.len());
    for q in patches {
        let mut candidates: Vec<(f64, u64, usize)> = patches
            .iter()
            .filter(|c| c.image_id != q.image_id)
            .map(|c| (squared_distance(&q.feature, &c.feature), c.patch_id, c.label))
            .collect();
        assert!(candidates.len() >= k, "pool smaller than K");
        candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let same = candidates[..k].iter().filter(|&&(_, _, l)| l == q.label).count();
        out.push((q.patch_id, same as u32));
    }
    out.sort_by_key(|&(id, _)| id);
    out
}
