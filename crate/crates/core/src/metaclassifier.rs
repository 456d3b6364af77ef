//! (N+1)-way region classification over patch features.
//!
//! Class 0 is the background class for patches discarded during screening;
//! classes 1..=N are the meta objects from clustering. Cluster labels are
//! noisy, so they are trained with light label smoothing; background labels
//! are taken as certain. A direct-RIM scorer is available as the ablation
//! that skips this classifier entirely.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::FeatureMatrix;
use crate::nn;
use crate::rim::{ClusterAssignment, RimModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaTrainingSet {
    pub features: FeatureMatrix,
    /// 0 = background, c = meta object c.
    pub labels: Vec<usize>,
    pub num_meta: usize,
    pub background_rows: usize,
    /// Set when background_ratio > 0 but there was nothing to sample from.
    pub missing_background: bool,
}

/// Labels kept patches by hard cluster + 1 and appends a seeded subsample of
/// the discarded patches as class 0, `floor(background_ratio * kept)` rows.
pub fn build_meta_training_set(
    kept_features: &FeatureMatrix,
    assignment: &ClusterAssignment,
    discarded_features: &FeatureMatrix,
    background_ratio: f64,
    seed: u64,
) -> Result<MetaTrainingSet> {
    if kept_features.rows() != assignment.hard_labels.len() {
        return Err(Error::Config(format!(
            "{} kept rows but {} cluster labels",
            kept_features.rows(),
            assignment.hard_labels.len()
        )));
    }
    if background_ratio < 0.0 {
        return Err(Error::Config(format!(
            "background_ratio must be >= 0, got {background_ratio}"
        )));
    }

    let num_meta = assignment.sizes.len();
    let mut features = kept_features.clone();
    let mut labels: Vec<usize> = assignment.hard_labels.iter().map(|&c| c + 1).collect();

    let want = (background_ratio * kept_features.rows() as f64).floor() as usize;
    let available = discarded_features.rows();
    let take = want.min(available);
    let missing_background = background_ratio > 0.0 && available == 0;

    if take > 0 {
        // partial Fisher-Yates, seeded: first `take` slots of a shuffle
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut indices: Vec<usize> = (0..available).collect();
        for i in 0..take {
            let j = rng.random_range(i..available);
            indices.swap(i, j);
        }
        let mut chosen = indices[..take].to_vec();
        chosen.sort_unstable();
        for i in chosen {
            features.push_row(discarded_features.row(i));
            labels.push(0);
        }
    }

    Ok(MetaTrainingSet {
        features,
        labels,
        num_meta,
        background_rows: take,
        missing_background,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetaTrainConfig {
    pub epochs: usize,
    pub step: f64,
    pub hidden: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub label_smoothing: f64,
}

impl Default for MetaTrainConfig {
    fn default() -> Self {
        MetaTrainConfig {
            epochs: 80,
            step: 0.1,
            hidden: 256,
            batch_size: 32,
            seed: 0,
            label_smoothing: 0.05,
        }
    }
}

/// One hidden rectifier layer over patch features, (N+1)-way softmax output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaClassifier {
    mlp: nn::Mlp,
    pub num_meta: usize,
    pub epochs_trained: usize,
    pub final_loss: f64,
}

pub fn train_meta_classifier(
    ts: &MetaTrainingSet,
    config: &MetaTrainConfig,
) -> Result<MetaClassifier> {
    if ts.features.is_empty() {
        return Err(Error::Config("meta training set is empty".into()));
    }
    if ts.num_meta < 1 {
        return Err(Error::Config("need at least one meta object".into()));
    }

    let classes = ts.num_meta + 1;
    // smoothing only on cluster-derived labels; background labels are certain
    let labels = ts.labels.clone();
    let targets = nn::smoothed_targets(&ts.labels, classes, config.label_smoothing, |i| {
        labels[i] != 0
    });

    let mut mlp = nn::Mlp::new(&[ts.features.dim(), config.hidden, classes], config.seed);
    let log = nn::train(
        &mut mlp,
        &ts.features,
        &targets,
        &nn::TrainOptions {
            epochs: config.epochs,
            batch_size: config.batch_size,
            step: config.step,
            seed: config.seed,
            cosine_decay: true,
        },
    )?;

    Ok(MetaClassifier {
        mlp,
        num_meta: ts.num_meta,
        epochs_trained: log.epochs_run,
        final_loss: log.final_loss,
    })
}

impl MetaClassifier {
    /// (label, probabilities): label 0 marks background, ties resolve to the
    /// smaller index.
    pub fn classify_region(&self, x: &[f64]) -> Result<(usize, Vec<f64>)> {
        if x.len() != self.mlp.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.mlp.input_dim(),
                got: x.len(),
            });
        }
        let probs = self.mlp.probabilities(x);
        let mut best = 0;
        for c in 1..probs.len() {
            if probs[c] > probs[best] {
                best = c;
            }
        }
        Ok((best, probs))
    }

    pub fn training_accuracy(&self, ts: &MetaTrainingSet) -> f64 {
        let mut hits = 0usize;
        for i in 0..ts.features.rows() {
            let (label, _) = self
                .classify_region(ts.features.row(i))
                .expect("training rows have the right dim");
            if label == ts.labels[i] {
                hits += 1;
            }
        }
        hits as f64 / ts.features.rows() as f64
    }

    // test access to the underlying loss surface for gradient checks
    pub fn parameters(&self) -> Vec<f64> {
        self.mlp.parameters()
    }

    pub fn set_parameters(&mut self, params: &[f64]) {
        self.mlp.set_parameters(params);
    }

    pub fn batch_loss(&self, x: &FeatureMatrix, targets: &[Vec<f64>]) -> f64 {
        self.mlp.mean_cross_entropy(x, targets)
    }

    pub fn batch_loss_gradient(&self, x: &FeatureMatrix, targets: &[Vec<f64>]) -> Vec<f64> {
        let rows: Vec<usize> = (0..x.rows()).collect();
        self.mlp.cross_entropy_gradient(x, targets, &rows)
    }

    pub fn smoothing_targets(&self, labels: &[usize], smoothing: f64) -> Vec<Vec<f64>> {
        nn::smoothed_targets(labels, self.num_meta + 1, smoothing, |i| labels[i] != 0)
    }

    /// Untrained classifier with all-zero parameters (uniform predictions).
    pub fn uniform(dim: usize, hidden: usize, num_meta: usize) -> Self {
        let mut mlp = nn::Mlp::new(&[dim, hidden, num_meta + 1], 0);
        let zeros = vec![0.0; mlp.parameter_count()];
        mlp.set_parameters(&zeros);
        MetaClassifier {
            mlp,
            num_meta,
            epochs_trained: 0,
            final_loss: f64::NAN,
        }
    }
}

/// How pooled regions get their meta-object label.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum RegionScorer {
    Meta(MetaClassifier),
    /// Ablation: RIM responses used directly; a region whose best cluster
    /// probability falls below the threshold is treated as background.
    RimDirect {
        model: RimModel,
        background_threshold: f64,
    },
}

/// Default background threshold for the RIM-direct mode.
pub fn rim_direct_threshold(num_meta: usize) -> f64 {
    2.0 / num_meta as f64
}

impl RegionScorer {
    pub fn num_meta(&self) -> usize {
        match self {
            RegionScorer::Meta(m) => m.num_meta,
            RegionScorer::RimDirect { model, .. } => model.num_clusters(),
        }
    }

    /// (label, probabilities over N+1 classes); label 0 = background.
    pub fn classify(&self, x: &[f64]) -> Result<(usize, Vec<f64>)> {
        match self {
            RegionScorer::Meta(m) => m.classify_region(x),
            RegionScorer::RimDirect {
                model,
                background_threshold,
            } => {
                if x.len() != model.dim() {
                    return Err(Error::DimensionMismatch {
                        expected: model.dim(),
                        got: x.len(),
                    });
                }
                let cluster_probs = model.probabilities(x);
                let mut best = 0;
                for c in 1..cluster_probs.len() {
                    if cluster_probs[c] > cluster_probs[best] {
                        best = c;
                    }
                }
                let label = if cluster_probs[best] < *background_threshold {
                    0
                } else {
                    best + 1
                };
                let mut probs = Vec::with_capacity(cluster_probs.len() + 1);
                probs.push(0.0);
                probs.extend(cluster_probs);
                Ok((label, probs))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rim;

    fn blob_matrix() -> (FeatureMatrix, Vec<usize>) {
        // two linearly separable blobs
        let mut rows: Vec<Vec<f64>> = Vec::new();
        let mut labels = Vec::new();
        for i in 0..20 {
            let t = (i % 10) as f64 * 0.01;
            if i < 10 {
                rows.push(vec![1.0 + t, 0.0, t]);
                labels.push(0);
            } else {
                rows.push(vec![0.0, 1.0 + t, -t]);
                labels.push(1);
            }
        }
        (
            FeatureMatrix::from_rows(rows.iter().map(|r| r.as_slice()), 3).unwrap(),
            labels,
        )
    }

    #[test]
    fn background_ratio_zero_keeps_cluster_labels() {
        let (features, labels) = blob_matrix();
        let assignment = rim::ClusterAssignment {
            hard_labels: labels.clone(),
            probabilities: vec![vec![0.5, 0.5]; 20],
            cluster_centers: vec![vec![0.0; 3]; 2],
            sizes: vec![10, 10],
            empty: vec![false, false],
        };
        let empty = FeatureMatrix::zeros(0, 3);
        let ts = build_meta_training_set(&features, &assignment, &empty, 0.0, 7).unwrap();
        let expected: Vec<usize> = labels.iter().map(|&c| c + 1).collect();
        assert_eq!(ts.labels, expected);
        assert_eq!(ts.background_rows, 0);
    }

    #[test]
    fn background_subsample_count_is_floor_of_ratio() {
        let kept = FeatureMatrix::from_rows((0..630).map(|_| [0.0f64; 2].as_slice()), 2).unwrap();
        let assignment = rim::ClusterAssignment {
            hard_labels: vec![0; 630],
            probabilities: vec![vec![1.0]; 630],
            cluster_centers: vec![vec![0.0; 2]],
            sizes: vec![630],
            empty: vec![false],
        };
        let discarded =
            FeatureMatrix::from_rows((0..370).map(|_| [1.0f64, 2.0].as_slice()), 2).unwrap();
        let ts = build_meta_training_set(&kept, &assignment, &discarded, 0.25, 3).unwrap();
        assert_eq!(ts.background_rows, 157);
        assert_eq!(ts.labels.iter().filter(|&&l| l == 0).count(), 157);
    }

    #[test]
    fn background_subsample_is_seed_deterministic() {
        let kept = FeatureMatrix::from_rows((0..8).map(|_| [0.5f64; 2].as_slice()), 2).unwrap();
        let assignment = rim::ClusterAssignment {
            hard_labels: vec![0; 8],
            probabilities: vec![vec![1.0]; 8],
            cluster_centers: vec![vec![0.0; 2]],
            sizes: vec![8],
            empty: vec![false],
        };
        let rows: Vec<Vec<f64>> = (0..30).map(|i| vec![i as f64, 0.0]).collect();
        let discarded = FeatureMatrix::from_rows(rows.iter().map(|r| r.as_slice()), 2).unwrap();
        let a = build_meta_training_set(&kept, &assignment, &discarded, 0.5, 11).unwrap();
        let b = build_meta_training_set(&kept, &assignment, &discarded, 0.5, 11).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn no_discarded_with_positive_ratio_sets_flag() {
        let (features, labels) = blob_matrix();
        let assignment = rim::ClusterAssignment {
            hard_labels: labels,
            probabilities: vec![vec![0.5, 0.5]; 20],
            cluster_centers: vec![vec![0.0; 3]; 2],
            sizes: vec![10, 10],
            empty: vec![false, false],
        };
        let empty = FeatureMatrix::zeros(0, 3);
        let ts = build_meta_training_set(&features, &assignment, &empty, 0.25, 7).unwrap();
        assert!(ts.missing_background);
        assert_eq!(ts.background_rows, 0);
    }

    #[test]
    fn separable_toy_set_reaches_full_training_accuracy() {
        let (features, labels) = blob_matrix();
        let ts = MetaTrainingSet {
            features,
            labels: labels.iter().map(|&c| c + 1).collect(),
            num_meta: 2,
            background_rows: 0,
            missing_background: false,
        };
        let config = MetaTrainConfig {
            epochs: 200,
            hidden: 16,
            ..Default::default()
        };
        let model = train_meta_classifier(&ts, &config).unwrap();
        assert_eq!(model.training_accuracy(&ts), 1.0);
    }

    #[test]
    fn training_is_seed_deterministic() {
        let (features, labels) = blob_matrix();
        let ts = MetaTrainingSet {
            features,
            labels: labels.iter().map(|&c| c + 1).collect(),
            num_meta: 2,
            background_rows: 0,
            missing_background: false,
        };
        let config = MetaTrainConfig {
            epochs: 30,
            hidden: 8,
            seed: 5,
            ..Default::default()
        };
        let a = train_meta_classifier(&ts, &config).unwrap();
        let b = train_meta_classifier(&ts, &config).unwrap();
        assert_eq!(a.parameters(), b.parameters());
    }

    #[test]
    fn uniform_model_predicts_uniformly() {
        let model = MetaClassifier::uniform(4, 8, 3);
        let (label, probs) = model.classify_region(&[0.1, -0.4, 0.7, 0.2]).unwrap();
        assert_eq!(label, 0);
        for &p in &probs {
            assert!((p - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn probabilities_sum_to_one() {
        let (features, labels) = blob_matrix();
        let ts = MetaTrainingSet {
            features: features.clone(),
            labels: labels.iter().map(|&c| c + 1).collect(),
            num_meta: 2,
            background_rows: 0,
            missing_background: false,
        };
        let model = train_meta_classifier(
            &ts,
            &MetaTrainConfig {
                epochs: 10,
                hidden: 8,
                ..Default::default()
            },
        )
        .unwrap();
        for i in 0..features.rows() {
            let (_, probs) = model.classify_region(features.row(i)).unwrap();
            let sum: f64 = probs.iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn rim_direct_thresholds_background() {
        let model = RimModel {
            weights: vec![vec![4.0, 0.0], vec![-4.0, 0.0]],
            biases: vec![0.0, 0.0],
            lambda: 0.0,
        };
        let scorer = RegionScorer::RimDirect {
            model,
            background_threshold: 0.9,
        };
        // confident: far along +x
        let (label, _) = scorer.classify(&[1.0, 0.0]).unwrap();
        assert_eq!(label, 1);
        // ambiguous: on the boundary, max prob = 0.5 < 0.9
        let (label, _) = scorer.classify(&[0.0, 1.0]).unwrap();
        assert_eq!(label, 0);
    }
}
