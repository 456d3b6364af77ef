//! Harvests discriminative "meta objects" from bags of patch feature vectors
//! and turns them into scene-image representations.
//!
//! The pipeline, in stage order:
//!
//! 1. [`ocsvm`]: cascaded one-class-SVM outlier pruning per scene category
//! 2. [`screening`]: weakly supervised kNN weighting and soft discard
//! 3. [`rim`]: discriminative clustering of the survivors into meta objects
//! 4. [`metaclassifier`]: an (N+1)-way region classifier with a background
//!    class for the discarded patches
//! 5. [`pooling`]: adaptive SPM / modified VLAD pooling plus fusion with the
//!    holistic image feature
//! 6. [`classifier`]: the final scene classifier and its evaluation report
//!
//! [`ingest`] supplies datasets (file formats, synthetic generation, stage
//! caches) and [`types`] the shared domain model.

pub mod classifier;
pub mod error;
pub mod ingest;
pub mod math;
pub mod matrix;
pub mod metaclassifier;
mod nn;
pub mod ocsvm;
pub mod pooling;
pub mod rim;
pub mod screening;
pub mod types;

pub use error::{CacheError, Error, Result};
pub use matrix::FeatureMatrix;
pub use types::{
    validate_dataset, BBox, Dataset, FeatureVector, ImageId, ImageRecord, PatchId, PatchLevel,
    PatchRecord, Split, ValidationReport,
};
