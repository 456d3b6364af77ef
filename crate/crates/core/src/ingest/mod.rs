//! Dataset I/O, synthetic data generation, and the stage cache.
//!
//! A dataset on disk is a UTF-8 manifest plus a flat little-endian f32
//! binary. The manifest lists images and patches with offsets into the
//! binary; see `format` for the exact layout.

mod cache;
mod format;
mod synth;

pub use cache::CacheStore;
pub use format::{load_dataset, load_dataset_with_options, save_dataset, LoadOptions};
pub use synth::{generate_synthetic, GroundTruth, PatchTruth, PlantedObject, SynthSpec};
