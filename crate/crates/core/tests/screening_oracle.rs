//! Screening weights against the exhaustive full-sort reference, plus grid,
//! exclusion, and nesting properties.

use metaobjects::ingest::{generate_synthetic, SynthSpec};
use metaobjects::matrix::FeatureMatrix;
use metaobjects::screening::{
    compute_patch_weights, soft_screen, weight_histogram, ScreenInput,
};
use metaobjects::types::Split;
use metaobjects_reference::knn;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn random_instance(seed: u64, n: usize, d: usize, images: u64, classes: usize) -> (Vec<ScreenInput>, FeatureMatrix) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut inputs = Vec::with_capacity(n);
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n);
    for patch_id in 0..n as u64 {
        let image_id = rng.random_range(0..images);
        inputs.push(ScreenInput {
            patch_id,
            image_id,
            label: (image_id as usize) % classes,
        });
        // quantized coordinates force plenty of exact distance ties
        rows.push((0..d).map(|_| rng.random_range(0..4) as f64 * 0.25).collect());
    }
    let features = FeatureMatrix::from_rows(rows.iter().map(|r| r.as_slice()), d).unwrap();
    (inputs, features)
}

#[test]
fn weights_match_exhaustive_reference_with_ties() {
    for seed in 0..5u64 {
        let (inputs, features) = random_instance(seed, 300, 3, 40, 5);
        let k = 25;
        let weights = compute_patch_weights(&inputs, &features, k).unwrap();

        let reference_patches: Vec<knn::KnnPatch> = inputs
            .iter()
            .enumerate()
            .map(|(i, s)| knn::KnnPatch {
                patch_id: s.patch_id,
                image_id: s.image_id,
                label: s.label,
                feature: features.row(i).to_vec(),
            })
            .collect();
        let expected = knn::screening_weights(&reference_patches, k);

        assert_eq!(weights.entries, expected, "seed {seed}");
    }
}

#[test]
fn no_neighbor_comes_from_the_query_image() {
    // two patches per image, identical features: if same-image exclusion
    // broke, the nearest neighbor would be the sibling patch
    let mut inputs = Vec::new();
    let mut rows = Vec::new();
    for image in 0..10u64 {
        for j in 0..2u64 {
            inputs.push(ScreenInput {
                patch_id: image * 2 + j,
                image_id: image,
                label: (image % 2) as usize,
            });
            rows.push(vec![image as f64, 0.0]);
        }
    }
    let features = FeatureMatrix::from_rows(rows.iter().map(|r| r.as_slice()), 2).unwrap();
    let weights = compute_patch_weights(&inputs, &features, 2).unwrap();
    // nearest cross-image patches are at distance 1 in the adjacent images,
    // which alternate labels: K_y is never 2 out of 2 for interior images
    for (idx, &(id, ky)) in weights.entries.iter().enumerate() {
        let image = id / 2;
        if (1..9).contains(&image) {
            assert_eq!(ky, 0, "patch {id} (index {idx}) should see only the other label");
        }
    }
}

#[test]
fn uniformly_planted_patch_type_gets_weight_near_one_over_c() {
    // one tight blob appearing equally in all 5 classes plus distinct
    // per-class blobs far away
    // blob membership must comfortably exceed K for the discriminative
    // weights to saturate; each class plants ~170 patches per object here
    let spec = SynthSpec {
        num_classes: 5,
        discriminative_objects_per_class: 1,
        shared_objects: 1,
        outlier_fraction: 0.0,
        patches_per_image: 12,
        images_per_class: 35,
        feature_dim: 32,
        blob_sigma: 0.02,
        seed: 99,
    };
    let (ds, gt) = generate_synthetic(&spec).unwrap();
    let train: Vec<&metaobjects::types::PatchRecord> = ds
        .patches
        .iter()
        .filter(|p| ds.image(p.image_id).unwrap().split == Split::Train)
        .collect();
    let inputs: Vec<ScreenInput> = train
        .iter()
        .map(|p| ScreenInput {
            patch_id: p.patch_id,
            image_id: p.image_id,
            label: ds.patch_label(p),
        })
        .collect();
    let features = FeatureMatrix::from_rows(
        train.iter().map(|p| p.feature.values()),
        ds.feature_dim,
    )
    .unwrap();
    let k = 100;
    let weights = compute_patch_weights(&inputs, &features, k).unwrap();

    let tolerance = 2.0 / (k as f64).sqrt();
    for (i, &(id, ky)) in weights.entries.iter().enumerate() {
        assert_eq!(id, train[i].patch_id);
        let w = ky as f64 / k as f64;
        if gt.is_shared(id) {
            assert!(
                (w - 0.2).abs() <= tolerance,
                "shared patch {id} weight {w} not near 1/5"
            );
        } else {
            assert!(w > 0.8, "discriminative patch {id} weight {w}");
        }
    }
}

#[test]
fn grid_property_and_monotone_nesting() {
    let (inputs, features) = random_instance(7, 200, 4, 25, 3);
    let k = 30;
    let weights = compute_patch_weights(&inputs, &features, k).unwrap();

    for (_, ky) in &weights.entries {
        assert!(*ky <= k as u32);
    }
    // weight * K recovers the integer count exactly
    for (id, w) in weights.iter_weights() {
        let back = w * k as f64;
        assert_eq!(back.round() as u32, weights.entries[id as usize].1);
        assert!((back - back.round()).abs() < 1e-9);
    }

    let mut previous_kept: Option<Vec<u64>> = None;
    for ratio in [0.0, 0.1, 0.25, 0.5, 0.75] {
        let screened = soft_screen(&weights, ratio, 0).unwrap();
        if let Some(prev) = &previous_kept {
            for id in &screened.kept {
                assert!(prev.contains(id), "kept sets must nest as ratio grows");
            }
        }
        previous_kept = Some(screened.kept);
    }
}

#[test]
fn default_synthetic_weight_histogram_is_bimodal() {
    let spec = SynthSpec {
        num_classes: 5,
        discriminative_objects_per_class: 1,
        shared_objects: 1,
        outlier_fraction: 0.25,
        patches_per_image: 12,
        images_per_class: 35,
        feature_dim: 32,
        blob_sigma: 0.05,
        seed: 4,
    };
    let (ds, _) = generate_synthetic(&spec).unwrap();
    let train: Vec<&metaobjects::types::PatchRecord> = ds
        .patches
        .iter()
        .filter(|p| ds.image(p.image_id).unwrap().split == Split::Train)
        .collect();
    let inputs: Vec<ScreenInput> = train
        .iter()
        .map(|p| ScreenInput {
            patch_id: p.patch_id,
            image_id: p.image_id,
            label: ds.patch_label(p),
        })
        .collect();
    let features =
        FeatureMatrix::from_rows(train.iter().map(|p| p.feature.values()), ds.feature_dim)
            .unwrap();
    let weights = compute_patch_weights(&inputs, &features, 60).unwrap();
    let counts = weight_histogram(&weights, 10).unwrap();

    assert_eq!(counts.iter().sum::<u64>(), train.len() as u64);

    // two modes separated by a dip: the shared/outlier mass sits low, the
    // discriminative mass high
    let low_peak = *counts[..5].iter().max().unwrap();
    let high_peak = *counts[5..].iter().max().unwrap();
    let low_at = counts[..5].iter().position(|&c| c == low_peak).unwrap();
    let high_at = 5 + counts[5..].iter().position(|&c| c == high_peak).unwrap();
    let dip = *counts[low_at..=high_at].iter().min().unwrap();
    assert!(low_peak > 0 && high_peak > 0);
    assert!(
        dip < low_peak && dip < high_peak,
        "expected a dip between modes, got {counts:?}"
    );
}
