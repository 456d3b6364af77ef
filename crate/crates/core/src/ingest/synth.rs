//! Synthetic datasets with planted meta objects.
//!
//! Each class owns a few "discriminative" objects (Gaussian blobs around
//! class-unique unit centers); "shared" objects reuse one center across all
//! classes; outliers are uniform sphere noise. Patch bbox centers follow a
//! per-object spatial prior so spatial pooling has signal. The ground truth
//! is a sidecar that only tests and diagnostics ever read; pipeline stages
//! never see it.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;
use crate::types::{
    BBox, Dataset, FeatureVector, ImageRecord, PatchId, PatchLevel, PatchRecord, Split,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub num_classes: usize,
    pub discriminative_objects_per_class: usize,
    /// Objects whose center is reused by every class.
    pub shared_objects: usize,
    pub outlier_fraction: f64,
    pub patches_per_image: usize,
    /// Per class. One fifth (rounded down) of each class's images is tagged
    /// as the test split; the rest train.
    pub images_per_class: usize,
    pub feature_dim: usize,
    /// Within-object Gaussian spread in feature space.
    pub blob_sigma: f64,
    pub seed: u64,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("num_classes", self.num_classes),
            ("discriminative_objects_per_class", self.discriminative_objects_per_class),
            ("patches_per_image", self.patches_per_image),
            ("images_per_class", self.images_per_class),
            ("feature_dim", self.feature_dim),
        ];
        for (name, v) in positive {
            if v < 1 {
                return Err(Error::Config(format!("{name} must be >= 1, got {v}")));
            }
        }
        if !(0.0..1.0).contains(&self.outlier_fraction) {
            return Err(Error::Config(format!(
                "outlier_fraction must be in [0,1), got {}",
                self.outlier_fraction
            )));
        }
        if !(self.blob_sigma > 0.0) {
            return Err(Error::Config(format!(
                "blob_sigma must be > 0, got {}",
                self.blob_sigma
            )));
        }
        Ok(())
    }
}

/// What was planted where. Sidecar only; never an input to any stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub objects: Vec<PlantedObject>,
    /// Aligned with patch ids 0..n.
    pub patch_truth: Vec<PatchTruth>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedObject {
    pub object_id: usize,
    /// `None` for objects shared across all classes.
    pub class: Option<usize>,
    pub center: Vec<f64>,
    pub spatial_mean: (f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PatchTruth {
    Object(usize),
    Outlier,
}

impl GroundTruth {
    pub fn truth_of(&self, patch_id: PatchId) -> PatchTruth {
        self.patch_truth[patch_id as usize]
    }

    pub fn is_shared(&self, patch_id: PatchId) -> bool {
        match self.truth_of(patch_id) {
            PatchTruth::Object(o) => self.objects[o].class.is_none(),
            PatchTruth::Outlier => false,
        }
    }

    pub fn min_center_distance(&self) -> f64 {
        let mut best = f64::INFINITY;
        for i in 0..self.objects.len() {
            for j in (i + 1)..self.objects.len() {
                let d = math::squared_distance(&self.objects[i].center, &self.objects[j].center)
                    .sqrt();
                best = best.min(d);
            }
        }
        best
    }
}

fn unit_vector(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
    math::l2_normalize_in_place(&mut v);
    v
}

const MAX_CENTER_ATTEMPTS: usize = 1000;
const HOLISTIC_NOISE: f64 = 0.8;
const SPATIAL_SIGMA: f64 = 0.08;

/// Deterministic per seed: identical specs produce bit-identical datasets.
pub fn generate_synthetic(spec: &SynthSpec) -> Result<(Dataset, GroundTruth)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let d = spec.feature_dim;

    // plant object centers, regenerating until they are separated enough to
    // be recoverable by construction
    let num_objects = spec.num_classes * spec.discriminative_objects_per_class + spec.shared_objects;
    let min_separation = 6.0 * spec.blob_sigma;
    let mut centers: Vec<Vec<f64>> = Vec::new();
    let mut ok = false;
    for _ in 0..MAX_CENTER_ATTEMPTS {
        centers = (0..num_objects).map(|_| unit_vector(&mut rng, d)).collect();
        ok = true;
        'sep: for i in 0..centers.len() {
            for j in (i + 1)..centers.len() {
                if math::squared_distance(&centers[i], &centers[j]) < min_separation * min_separation {
                    ok = false;
                    break 'sep;
                }
            }
        }
        if ok {
            break;
        }
    }
    if !ok {
        return Err(Error::Config(format!(
            "could not place {num_objects} centers at pairwise distance > {min_separation} in {d} dims; \
             lower blob_sigma or the object count"
        )));
    }

    let mut objects = Vec::with_capacity(num_objects);
    for (object_id, center) in centers.iter().enumerate() {
        let class = if object_id < spec.num_classes * spec.discriminative_objects_per_class {
            Some(object_id / spec.discriminative_objects_per_class)
        } else {
            None
        };
        let spatial_mean = (rng.random_range(0.25..0.75), rng.random_range(0.25..0.75));
        objects.push(PlantedObject {
            object_id,
            class,
            center: center.clone(),
            spatial_mean,
        });
    }

    let shared_ids: Vec<usize> = objects
        .iter()
        .filter(|o| o.class.is_none())
        .map(|o| o.object_id)
        .collect();

    let test_per_class = spec.images_per_class / 5;
    let mut images = Vec::new();
    let mut patches = Vec::new();
    let mut patch_truth = Vec::new();
    let mut next_patch: PatchId = 0;

    for class in 0..spec.num_classes {
        let class_objects: Vec<usize> = objects
            .iter()
            .filter(|o| o.class == Some(class))
            .map(|o| o.object_id)
            .chain(shared_ids.iter().copied())
            .collect();

        for img_idx in 0..spec.images_per_class {
            let image_id = (class * spec.images_per_class + img_idx) as u64;
            let split = if img_idx < spec.images_per_class - test_per_class {
                Split::Train
            } else {
                Split::Test
            };

            let mut patch_ids = Vec::with_capacity(spec.patches_per_image);
            let mut feature_sum = vec![0.0; d];
            for j in 0..spec.patches_per_image {
                // first half of each image's patches is the bottom (fine)
                // level, second half the top (coarse) level
                let level = if j < spec.patches_per_image / 2 || spec.patches_per_image == 1 {
                    PatchLevel::Bottom
                } else {
                    PatchLevel::Top
                };
                let is_outlier = rng.random::<f64>() < spec.outlier_fraction;
                let (feature, bbox, truth) = if is_outlier {
                    let f = unit_vector(&mut rng, d);
                    let bbox = sample_bbox(&mut rng, level, None);
                    (f, bbox, PatchTruth::Outlier)
                } else {
                    let object_id = class_objects[rng.random_range(0..class_objects.len())];
                    let obj = &objects[object_id];
                    let mut f = obj.center.clone();
                    for x in f.iter_mut() {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        *x += spec.blob_sigma * z;
                    }
                    math::l2_normalize_in_place(&mut f);
                    let bbox = sample_bbox(&mut rng, level, Some(obj.spatial_mean));
                    (f, bbox, PatchTruth::Object(object_id))
                };
                math::axpy(1.0, &feature, &mut feature_sum);
                patches.push(PatchRecord {
                    patch_id: next_patch,
                    image_id,
                    feature: FeatureVector::new(feature)?,
                    bbox,
                    level,
                });
                patch_truth.push(truth);
                patch_ids.push(next_patch);
                next_patch += 1;
            }

            let mut holistic = feature_sum;
            math::l2_normalize_in_place(&mut holistic);
            let noise = unit_vector(&mut rng, d);
            math::axpy(HOLISTIC_NOISE, &noise, &mut holistic);
            math::l2_normalize_in_place(&mut holistic);

            images.push(ImageRecord {
                image_id,
                scene_label: class,
                split,
                patches: patch_ids,
                holistic: FeatureVector::new(holistic)?,
            });
        }
    }

    let ds = Dataset::new(images, patches, spec.num_classes, d);
    Ok((ds, GroundTruth { objects, patch_truth }))
}

fn sample_bbox(rng: &mut ChaCha8Rng, level: PatchLevel, spatial_mean: Option<(f64, f64)>) -> BBox {
    let (cx, cy) = match spatial_mean {
        Some((mx, my)) => {
            let zx: f64 = StandardNormal.sample(rng);
            let zy: f64 = StandardNormal.sample(rng);
            (
                (mx + SPATIAL_SIGMA * zx).clamp(0.02, 0.98),
                (my + SPATIAL_SIGMA * zy).clamp(0.02, 0.98),
            )
        }
        None => (rng.random_range(0.1..0.9), rng.random_range(0.1..0.9)),
    };
    let (w, h) = match level {
        PatchLevel::Bottom => (rng.random_range(0.08..0.2), rng.random_range(0.08..0.2)),
        PatchLevel::Top => (rng.random_range(0.3..0.6), rng.random_range(0.3..0.6)),
    };
    BBox { cx, cy, w, h }
}
