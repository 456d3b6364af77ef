//! Domain types shared by every pipeline stage.
//!
//! A `Dataset` is immutable once built: stages only ever read it, so shared
//! references can be handed out freely.

use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;

pub type PatchId = u64;
pub type ImageId = u64;

/// A fixed-dimension descriptor. Entries are always finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    values: Vec<f64>,
}

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "feature entry {i} is not finite ({})",
                values[i]
            )));
        }
        Ok(FeatureVector { values })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Unit-norm copy; the zero vector is returned unchanged.
    pub fn l2_normalized(&self) -> FeatureVector {
        let mut values = self.values.clone();
        math::l2_normalize_in_place(&mut values);
        FeatureVector { values }
    }

    pub fn norm(&self) -> f64 {
        math::norm(&self.values)
    }
}

impl AsRef<[f64]> for FeatureVector {
    fn as_ref(&self) -> &[f64] {
        &self.values
    }
}

/// Pyramid level a region proposal came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PatchLevel {
    Top,
    Bottom,
}

impl PatchLevel {
    pub fn as_str(self) -> &'static str {
        match self {
            PatchLevel::Top => "top",
            PatchLevel::Bottom => "bottom",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "top" => Some(PatchLevel::Top),
            "bottom" => Some(PatchLevel::Bottom),
            _ => None,
        }
    }
}

/// Center-size bounding box, normalized to the image extent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub fn is_valid(&self) -> bool {
        (0.0..=1.0).contains(&self.cx)
            && (0.0..=1.0).contains(&self.cy)
            && self.w > 0.0
            && self.w <= 1.0
            && self.h > 0.0
            && self.h <= 1.0
    }
}

/// One proposed region: its descriptor plus where it sits in its image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchRecord {
    pub patch_id: PatchId,
    pub image_id: ImageId,
    pub feature: FeatureVector,
    pub bbox: BBox,
    pub level: PatchLevel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "train" => Some(Split::Train),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub image_id: ImageId,
    pub scene_label: usize,
    pub split: Split,
    pub patches: Vec<PatchId>,
    pub holistic: FeatureVector,
}

/// Images, their patch collections, and per-image holistic vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub images: Vec<ImageRecord>,
    pub patches: Vec<PatchRecord>,
    pub num_classes: usize,
    pub feature_dim: usize,
}

impl Dataset {
    /// Sorts records by id and builds the dataset. Call `validate` to check
    /// referential integrity.
    pub fn new(
        mut images: Vec<ImageRecord>,
        mut patches: Vec<PatchRecord>,
        num_classes: usize,
        feature_dim: usize,
    ) -> Self {
        images.sort_by_key(|im| im.image_id);
        patches.sort_by_key(|p| p.patch_id);
        Dataset {
            images,
            patches,
            num_classes,
            feature_dim,
        }
    }

    pub fn image(&self, id: ImageId) -> Option<&ImageRecord> {
        self.images
            .binary_search_by_key(&id, |im| im.image_id)
            .ok()
            .map(|i| &self.images[i])
    }

    pub fn patch(&self, id: PatchId) -> Option<&PatchRecord> {
        self.patches
            .binary_search_by_key(&id, |p| p.patch_id)
            .ok()
            .map(|i| &self.patches[i])
    }

    pub fn train_images(&self) -> impl Iterator<Item = &ImageRecord> {
        self.images.iter().filter(|im| im.split == Split::Train)
    }

    pub fn test_images(&self) -> impl Iterator<Item = &ImageRecord> {
        self.images.iter().filter(|im| im.split == Split::Test)
    }

    /// Label of the image a patch belongs to. Panics on dangling references;
    /// run `validate` first on untrusted data.
    pub fn patch_label(&self, patch: &PatchRecord) -> usize {
        self.image(patch.image_id)
            .expect("patch references missing image")
            .scene_label
    }
}

/// One invariant violation found by `validate_dataset`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Violation {
    DanglingImageRef { patch_id: PatchId, image_id: ImageId },
    DanglingPatchRef { image_id: ImageId, patch_id: PatchId },
    BackrefMismatch { patch_id: PatchId, image_id: ImageId },
    DimensionMismatch { what: String, expected: usize, got: usize },
    DuplicatePatchId { patch_id: PatchId },
    DuplicateImageId { image_id: ImageId },
    EmptyImage { image_id: ImageId },
    LabelOutOfRange { image_id: ImageId, label: usize },
    MissingTrainLabel { label: usize },
    PatchSharedBetweenImages { patch_id: PatchId },
    InvalidBBox { patch_id: PatchId },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DanglingImageRef { patch_id, image_id } => {
                write!(f, "patch {patch_id}: dangling image_id {image_id}")
            }
            Violation::DanglingPatchRef { image_id, patch_id } => {
                write!(f, "image {image_id}: dangling patch_id {patch_id}")
            }
            Violation::BackrefMismatch { patch_id, image_id } => write!(
                f,
                "patch {patch_id} not listed by its image {image_id}"
            ),
            Violation::DimensionMismatch { what, expected, got } => {
                write!(f, "{what}: dimension mismatch, expected {expected}, got {got}")
            }
            Violation::DuplicatePatchId { patch_id } => write!(f, "duplicate patch_id {patch_id}"),
            Violation::DuplicateImageId { image_id } => write!(f, "duplicate image_id {image_id}"),
            Violation::EmptyImage { image_id } => write!(f, "image {image_id} has no patches"),
            Violation::LabelOutOfRange { image_id, label } => {
                write!(f, "image {image_id}: label {label} out of range")
            }
            Violation::MissingTrainLabel { label } => {
                write!(f, "no training image carries label {label}")
            }
            Violation::PatchSharedBetweenImages { patch_id } => {
                write!(f, "patch {patch_id} is referenced by more than one image")
            }
            Violation::InvalidBBox { patch_id } => write!(f, "patch {patch_id}: bbox out of range"),
        }
    }
}

/// Everything `validate_dataset` found. Empty iff the dataset is valid.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "dataset valid");
        }
        for v in &self.violations {
            writeln!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Checks every dataset invariant and reports all violations instead of
/// stopping at the first.
pub fn validate_dataset(ds: &Dataset) -> ValidationReport {
    let mut report = ValidationReport::default();

    let mut image_ids = HashSet::new();
    for im in &ds.images {
        if !image_ids.insert(im.image_id) {
            report.violations.push(Violation::DuplicateImageId {
                image_id: im.image_id,
            });
        }
        if im.scene_label >= ds.num_classes {
            report.violations.push(Violation::LabelOutOfRange {
                image_id: im.image_id,
                label: im.scene_label,
            });
        }
        if im.patches.is_empty() {
            report.violations.push(Violation::EmptyImage {
                image_id: im.image_id,
            });
        }
        if im.holistic.dim() != ds.feature_dim {
            report.violations.push(Violation::DimensionMismatch {
                what: format!("holistic of image {}", im.image_id),
                expected: ds.feature_dim,
                got: im.holistic.dim(),
            });
        }
    }

    let mut patch_ids = HashSet::new();
    for p in &ds.patches {
        if !patch_ids.insert(p.patch_id) {
            report.violations.push(Violation::DuplicatePatchId {
                patch_id: p.patch_id,
            });
        }
        if ds.image(p.image_id).is_none() {
            report.violations.push(Violation::DanglingImageRef {
                patch_id: p.patch_id,
                image_id: p.image_id,
            });
        } else if !ds
            .image(p.image_id)
            .map(|im| im.patches.contains(&p.patch_id))
            .unwrap_or(false)
        {
            report.violations.push(Violation::BackrefMismatch {
                patch_id: p.patch_id,
                image_id: p.image_id,
            });
        }
        if p.feature.dim() != ds.feature_dim {
            report.violations.push(Violation::DimensionMismatch {
                what: format!("patch {}", p.patch_id),
                expected: ds.feature_dim,
                got: p.feature.dim(),
            });
        }
        if !p.bbox.is_valid() {
            report.violations.push(Violation::InvalidBBox {
                patch_id: p.patch_id,
            });
        }
    }

    // ownership: every referenced patch exists and is referenced exactly once
    let mut owner: HashMap<PatchId, ImageId> = HashMap::new();
    for im in &ds.images {
        for &pid in &im.patches {
            if ds.patch(pid).is_none() {
                report.violations.push(Violation::DanglingPatchRef {
                    image_id: im.image_id,
                    patch_id: pid,
                });
                continue;
            }
            if owner.insert(pid, im.image_id).is_some() {
                report
                    .violations
                    .push(Violation::PatchSharedBetweenImages { patch_id: pid });
            }
        }
    }

    // labels cover [0, C) on the training split
    let train_labels: HashSet<usize> = ds
        .train_images()
        .map(|im| im.scene_label)
        .filter(|&l| l < ds.num_classes)
        .collect();
    if ds.images.iter().any(|im| im.split == Split::Train) {
        for label in 0..ds.num_classes {
            if !train_labels.contains(&label) {
                report
                    .violations
                    .push(Violation::MissingTrainLabel { label });
            }
        }
    }

    report
}
