//! Weakly supervised soft screening.
//!
//! Each patch gets a weight `K_y / K`: the fraction of its K nearest
//! neighbors (drawn from all training images except its own) whose image
//! shares its scene label. The lowest-weighted fraction is then discarded.
//! kNN search is exhaustive; weights sit on a coarse 1/K grid, so an
//! approximate index that flips a single neighbor would flip discard
//! decisions.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::FeatureMatrix;
use crate::math;
use crate::types::{ImageId, PatchId};

/// A query/candidate patch for weight computation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScreenInput {
    pub patch_id: PatchId,
    pub image_id: ImageId,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchWeights {
    pub k: usize,
    /// (patch_id, K_y) sorted by patch_id; the weight is K_y / K, exactly on
    /// the 1/K grid.
    pub entries: Vec<(PatchId, u32)>,
}

impl PatchWeights {
    pub fn weight(&self, index: usize) -> f64 {
        self.entries[index].1 as f64 / self.k as f64
    }

    pub fn iter_weights(&self) -> impl Iterator<Item = (PatchId, f64)> + '_ {
        self.entries.iter().map(|&(id, ky)| (id, ky as f64 / self.k as f64))
    }
}

// max-heap entry so the worst of the current K best sits on top; ordering
// ignores the carried label
#[derive(PartialEq)]
struct HeapEntry {
    dist2: f64,
    patch_id: PatchId,
    label: usize,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist2
            .total_cmp(&other.dist2)
            .then(self.patch_id.cmp(&other.patch_id))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Computes the discriminative weight of every input patch. `features` rows
/// align with `inputs`. Distance ties break toward the smaller patch_id.
pub fn compute_patch_weights(
    inputs: &[ScreenInput],
    features: &FeatureMatrix,
    k: usize,
) -> Result<PatchWeights> {
    if inputs.len() != features.rows() {
        return Err(Error::Config(format!(
            "{} inputs but {} feature rows",
            inputs.len(),
            features.rows()
        )));
    }
    if k < 1 {
        return Err(Error::Config("K must be >= 1".into()));
    }

    // the candidate pool of a query excludes its own image
    for q in inputs {
        let pool = inputs.iter().filter(|c| c.image_id != q.image_id).count();
        if pool < k {
            return Err(Error::Config(format!(
                "patch {}: only {pool} candidate patches outside its image, but K = {k}; \
                 lower K",
                q.patch_id
            )));
        }
    }

    let mut entries = Vec::with_capacity(inputs.len());
    for (qi, q) in inputs.iter().enumerate() {
        let query = features.row(qi);
        let mut heap: BinaryHeap<HeapEntry> = BinaryHeap::with_capacity(k + 1);
        for (ci, c) in inputs.iter().enumerate() {
            if c.image_id == q.image_id {
                continue;
            }
            let entry = HeapEntry {
                dist2: math::squared_distance(query, features.row(ci)),
                patch_id: c.patch_id,
                label: c.label,
            };
            if heap.len() < k {
                heap.push(entry);
            } else if entry < *heap.peek().expect("heap nonempty") {
                heap.pop();
                heap.push(entry);
            }
        }
        let same_label = heap.iter().filter(|e| e.label == q.label).count() as u32;
        entries.push((q.patch_id, same_label));
    }

    entries.sort_by_key(|&(id, _)| id);
    Ok(PatchWeights { k, entries })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreenedSet {
    /// Sorted patch ids surviving the soft screen.
    pub kept: Vec<PatchId>,
    /// Sorted patch ids discarded here.
    pub discarded: Vec<PatchId>,
    /// Fraction of the original pool (cascade removals included) discarded
    /// across both screening steps.
    pub total_screening_ratio: f64,
}

/// Discards the `floor(ratio * n)` lowest-weighted patches globally, ties to
/// the smaller patch_id first. `prior_removed` is the cascade removal count,
/// folded into the reported total screening ratio.
pub fn soft_screen(
    weights: &PatchWeights,
    discard_ratio: f64,
    prior_removed: usize,
) -> Result<ScreenedSet> {
    if !(0.0..1.0).contains(&discard_ratio) {
        return Err(Error::Config(format!(
            "discard_ratio must be in [0,1), got {discard_ratio}"
        )));
    }
    let n = weights.entries.len();
    let discard_count = (discard_ratio * n as f64).floor() as usize;

    let mut order: Vec<(u32, PatchId)> = weights
        .entries
        .iter()
        .map(|&(id, ky)| (ky, id))
        .collect();
    order.sort_unstable();

    let mut discarded: Vec<PatchId> = order[..discard_count].iter().map(|&(_, id)| id).collect();
    let mut kept: Vec<PatchId> = order[discard_count..].iter().map(|&(_, id)| id).collect();
    discarded.sort_unstable();
    kept.sort_unstable();

    let original = prior_removed + n;
    let total_screening_ratio = if original > 0 {
        (prior_removed + discard_count) as f64 / original as f64
    } else {
        0.0
    };

    Ok(ScreenedSet {
        kept,
        discarded,
        total_screening_ratio,
    })
}

/// Per-class variant: ranks and discards `floor(ratio * n_c)` within each
/// scene category independently (ablation mode).
pub fn soft_screen_per_class(
    weights: &PatchWeights,
    labels: &[(PatchId, usize)],
    discard_ratio: f64,
    prior_removed: usize,
) -> Result<ScreenedSet> {
    if !(0.0..1.0).contains(&discard_ratio) {
        return Err(Error::Config(format!(
            "discard_ratio must be in [0,1), got {discard_ratio}"
        )));
    }
    let label_of = |id: PatchId| -> Result<usize> {
        labels
            .binary_search_by_key(&id, |&(pid, _)| pid)
            .map(|i| labels[i].1)
            .map_err(|_| Error::Config(format!("no label for patch {id}")))
    };

    let mut per_class: std::collections::BTreeMap<usize, Vec<(u32, PatchId)>> = Default::default();
    for &(id, ky) in &weights.entries {
        per_class.entry(label_of(id)?).or_default().push((ky, id));
    }

    let mut kept = Vec::new();
    let mut discarded = Vec::new();
    for (_, mut group) in per_class {
        group.sort_unstable();
        let cut = (discard_ratio * group.len() as f64).floor() as usize;
        discarded.extend(group[..cut].iter().map(|&(_, id)| id));
        kept.extend(group[cut..].iter().map(|&(_, id)| id));
    }
    kept.sort_unstable();
    discarded.sort_unstable();

    let n = weights.entries.len();
    let original = prior_removed + n;
    let total_screening_ratio = if original > 0 {
        (prior_removed + discarded.len()) as f64 / original as f64
    } else {
        0.0
    };

    Ok(ScreenedSet {
        kept,
        discarded,
        total_screening_ratio,
    })
}

/// Counts over `bins` equal-width bins of [0, 1]; weight 1.0 lands in the
/// last bin.
pub fn weight_histogram(weights: &PatchWeights, bins: usize) -> Result<Vec<u64>> {
    if bins < 1 {
        return Err(Error::Config("bins must be >= 1".into()));
    }
    let mut counts = vec![0u64; bins];
    for (_, w) in weights.iter_weights() {
        let bin = ((w * bins as f64).floor() as usize).min(bins - 1);
        counts[bin] += 1;
    }
    Ok(counts)
}
