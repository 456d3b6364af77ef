//! File format round-trips, generator properties, and cache behavior.

use metaobjects::ingest::{
    generate_synthetic, load_dataset, save_dataset, CacheStore, PatchTruth, SynthSpec,
};
use metaobjects::math;
use metaobjects::types::{validate_dataset, Split};
use metaobjects::{CacheError, Error};

fn spec(seed: u64) -> SynthSpec {
    SynthSpec {
        num_classes: 3,
        discriminative_objects_per_class: 2,
        shared_objects: 1,
        outlier_fraction: 0.1,
        patches_per_image: 6,
        images_per_class: 10,
        feature_dim: 32,
        blob_sigma: 0.04,
        seed,
    }
}

#[test]
fn generated_datasets_validate_clean() {
    for seed in [1, 7, 2024] {
        let (ds, _) = generate_synthetic(&spec(seed)).unwrap();
        let report = validate_dataset(&ds);
        assert!(report.is_empty(), "seed {seed}: {report}");
    }
}

#[test]
fn generator_is_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, _) = generate_synthetic(&spec(7)).unwrap();
    let (b, _) = generate_synthetic(&spec(7)).unwrap();
    assert_eq!(a, b);

    let pa = dir.path().join("a.manifest");
    let pb = dir.path().join("b.manifest");
    save_dataset(&a, &pa).unwrap();
    save_dataset(&b, &pb).unwrap();
    assert_eq!(std::fs::read(&pa).unwrap(), std::fs::read(&pb).unwrap());
    assert_eq!(
        std::fs::read(pa.with_extension("manifest.bin")).unwrap(),
        std::fs::read(pb.with_extension("manifest.bin")).unwrap()
    );
}

#[test]
fn save_load_round_trip_preserves_everything() {
    let dir = tempfile::tempdir().unwrap();
    let (ds, _) = generate_synthetic(&spec(3)).unwrap();
    let path = dir.path().join("ds.manifest");
    save_dataset(&ds, &path).unwrap();
    let loaded = load_dataset(&path).unwrap();

    assert!(validate_dataset(&loaded).is_empty());
    assert_eq!(loaded.num_classes, ds.num_classes);
    assert_eq!(loaded.feature_dim, ds.feature_dim);
    assert_eq!(loaded.images.len(), ds.images.len());
    assert_eq!(loaded.patches.len(), ds.patches.len());

    for (a, b) in ds.patches.iter().zip(&loaded.patches) {
        assert_eq!(a.patch_id, b.patch_id);
        assert_eq!(a.image_id, b.image_id);
        assert_eq!(a.level, b.level);
        // features survive the f32 round trip up to storage precision
        for (x, y) in a.feature.values().iter().zip(b.feature.values()) {
            assert!((x - y).abs() < 1e-6, "{x} vs {y}");
        }
    }
    for (a, b) in ds.images.iter().zip(&loaded.images) {
        assert_eq!(a.image_id, b.image_id);
        assert_eq!(a.scene_label, b.scene_label);
        assert_eq!(a.split, b.split);
        assert_eq!(a.patches, b.patches);
    }
}

#[test]
fn binary_size_matches_record_count() {
    let dir = tempfile::tempdir().unwrap();
    let (ds, _) = generate_synthetic(&spec(11)).unwrap();
    let path = dir.path().join("ds.manifest");
    save_dataset(&ds, &path).unwrap();
    let bin = std::fs::read(path.with_extension("manifest.bin")).unwrap();
    let expected = 32 + 4 * ds.feature_dim * (ds.patches.len() + ds.images.len());
    assert_eq!(bin.len(), expected);
}

#[test]
fn truncated_binary_names_the_final_patch() {
    let dir = tempfile::tempdir().unwrap();
    let (ds, _) = generate_synthetic(&spec(5)).unwrap();
    let path = dir.path().join("ds.manifest");
    save_dataset(&ds, &path).unwrap();

    let bin_path = path.with_extension("manifest.bin");
    let bytes = std::fs::read(&bin_path).unwrap();
    std::fs::write(&bin_path, &bytes[..bytes.len() - 4]).unwrap();

    let err = load_dataset(&path).unwrap_err();
    let last_patch = ds.patches.last().unwrap().patch_id;
    match &err {
        Error::Parse { msg, .. } => {
            assert!(
                msg.contains(&format!("patch {last_patch}")),
                "error should name patch {last_patch}: {msg}"
            );
        }
        other => panic!("expected parse error, got {other}"),
    }
}

#[test]
fn empty_dataset_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.manifest");
    std::fs::write(&path, "version 1\ndim 4\nclasses 2\nimages 0\npatches 0\n").unwrap();
    let mut bin = Vec::new();
    bin.extend_from_slice(b"MOBJ");
    bin.extend_from_slice(&1u32.to_le_bytes());
    bin.extend_from_slice(&4u32.to_le_bytes());
    bin.extend_from_slice(&2u32.to_le_bytes());
    bin.extend_from_slice(&0u64.to_le_bytes());
    bin.extend_from_slice(&0u64.to_le_bytes());
    std::fs::write(path.with_extension("manifest.bin"), bin).unwrap();

    let err = load_dataset(&path).unwrap_err();
    assert!(err.to_string().contains("empty dataset"), "{err}");
}

#[test]
fn planted_centers_stay_separated() {
    for seed in [2, 9, 400] {
        let mut s = spec(seed);
        s.blob_sigma = 0.05;
        let (_, gt) = generate_synthetic(&s).unwrap();
        assert!(gt.min_center_distance() > 6.0 * s.blob_sigma);
    }
}

#[test]
fn class_unique_objects_without_sharing_or_outliers() {
    let mut s = spec(13);
    s.shared_objects = 0;
    s.outlier_fraction = 0.0;
    let (ds, gt) = generate_synthetic(&s).unwrap();
    for patch in &ds.patches {
        match gt.truth_of(patch.patch_id) {
            PatchTruth::Object(o) => {
                let class = gt.objects[o].class.expect("no shared objects planted");
                assert_eq!(class, ds.patch_label(patch));
            }
            PatchTruth::Outlier => panic!("no outliers were requested"),
        }
    }
}

#[test]
fn tight_blobs_recoverable_by_nearest_center() {
    let spec = SynthSpec {
        num_classes: 5,
        discriminative_objects_per_class: 2,
        shared_objects: 0,
        outlier_fraction: 0.0,
        patches_per_image: 8,
        images_per_class: 8,
        feature_dim: 32,
        blob_sigma: 0.01,
        seed: 77,
    };
    let (ds, gt) = generate_synthetic(&spec).unwrap();
    let mut agree = 0usize;
    for patch in &ds.patches {
        let nearest = gt
            .objects
            .iter()
            .min_by(|a, b| {
                math::squared_distance(patch.feature.values(), &a.center)
                    .total_cmp(&math::squared_distance(patch.feature.values(), &b.center))
            })
            .unwrap()
            .object_id;
        if gt.truth_of(patch.patch_id) == PatchTruth::Object(nearest) {
            agree += 1;
        }
    }
    let rate = agree as f64 / ds.patches.len() as f64;
    assert!(rate >= 0.99, "nearest-center agreement {rate}");
}

#[test]
fn train_test_split_is_four_to_one() {
    let (ds, _) = generate_synthetic(&spec(1)).unwrap();
    let train = ds.train_images().count();
    let test = ds.test_images().count();
    assert_eq!(train + test, 30);
    assert_eq!(test, 3 * 2); // 10 per class / 5
    // every class appears in both splits
    for class in 0..3 {
        assert!(ds.train_images().any(|im| im.scene_label == class));
        assert!(ds.test_images().any(|im| im.scene_label == class));
    }
}

#[test]
fn cache_round_trip_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let store = CacheStore::new(dir.path());
    let weights: Vec<f64> = (0..100).map(|i| (i as f64).sin() * 1e3).collect();
    store.write("screen", "hash-a", &weights).unwrap();
    let back: Vec<f64> = store.read("screen", "hash-a").unwrap();
    assert_eq!(weights, back);
}

#[test]
fn cache_rejects_stale_hash() {
    let dir = tempfile::tempdir().unwrap();
    let store = CacheStore::new(dir.path());
    store.write("screen", "hash-k100", &vec![1u64, 2, 3]).unwrap();
    let err = store.read::<Vec<u64>>("screen", "hash-k50").unwrap_err();
    assert!(matches!(err, CacheError::Stale { .. }), "{err}");
}

#[test]
fn cache_detects_corruption() {
    let dir = tempfile::tempdir().unwrap();
    let store = CacheStore::new(dir.path());
    let payload: Vec<f64> = (0..64).map(|i| i as f64 * 0.125).collect();
    store.write("cluster", "h", &payload).unwrap();

    // flip one digit inside the payload region, keeping valid JSON
    let path = dir.path().join("cluster.json");
    let mut text = std::fs::read_to_string(&path).unwrap();
    let payload_at = text.find("\"payload\"").unwrap();
    let target = text[payload_at..]
        .char_indices()
        .find(|(_, ch)| ch.is_ascii_digit())
        .map(|(i, ch)| (payload_at + i, ch))
        .unwrap();
    let replacement = if target.1 == '9' { '8' } else { '9' };
    text.replace_range(target.0..target.0 + 1, &replacement.to_string());
    std::fs::write(&path, text).unwrap();

    let err = store.read::<Vec<f64>>("cluster", "h").unwrap_err();
    assert!(matches!(err, CacheError::Checksum { .. }), "{err}");
}

#[test]
fn cache_missing_entry_is_distinct_error() {
    let dir = tempfile::tempdir().unwrap();
    let store = CacheStore::new(dir.path());
    let err = store.read::<Vec<u64>>("pool", "h").unwrap_err();
    assert!(matches!(err, CacheError::Missing { .. }));
}
