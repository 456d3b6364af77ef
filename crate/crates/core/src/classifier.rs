//! The scene classifier: two 200-unit rectifier layers over the fused image
//! representation, plus the beta cross-validation that weighs pooled blocks
//! against the holistic feature.
//!
//! Inputs are standardized per dimension with training statistics; the VLAD
//! and holistic blocks live on different scales and beta alone does not fix
//! that.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::FeatureMatrix;
use crate::nn;
use crate::pooling::ImageRepresentation;

pub const HIDDEN_UNITS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneTrainConfig {
    pub epochs: usize,
    pub step: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for SceneTrainConfig {
    fn default() -> Self {
        SceneTrainConfig {
            epochs: 200,
            step: 0.05,
            batch_size: 16,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneClassifier {
    mlp: nn::Mlp,
    /// Per-dimension training mean / standard deviation.
    standardize_mean: Vec<f64>,
    standardize_std: Vec<f64>,
    pub num_classes: usize,
    /// Fusion weight the training representations were built with.
    pub beta: f64,
    /// Hash of the pipeline configuration that produced the model, if any.
    pub config_hash: String,
    pub final_loss: f64,
}

fn fused_matrix(reps: &[ImageRepresentation]) -> Result<FeatureMatrix> {
    let dim = reps
        .first()
        .map(|r| r.fused.len())
        .ok_or_else(|| Error::Config("no representations".into()))?;
    FeatureMatrix::from_rows(reps.iter().map(|r| r.fused.as_slice()), dim)
}

pub fn train_scene_classifier(
    reps: &[ImageRepresentation],
    labels: &[usize],
    num_classes: usize,
    config: &SceneTrainConfig,
) -> Result<SceneClassifier> {
    train_scene_classifier_tagged(reps, labels, num_classes, config, String::new())
}

pub fn train_scene_classifier_tagged(
    reps: &[ImageRepresentation],
    labels: &[usize],
    num_classes: usize,
    config: &SceneTrainConfig,
    config_hash: String,
) -> Result<SceneClassifier> {
    if reps.len() != labels.len() {
        return Err(Error::Config(format!(
            "{} representations but {} labels",
            reps.len(),
            labels.len()
        )));
    }
    let distinct: std::collections::HashSet<usize> = labels.iter().copied().collect();
    if distinct.len() < 2 {
        return Err(Error::Config(
            "training needs at least 2 classes present".into(),
        ));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
        return Err(Error::Config(format!("label {bad} >= num_classes {num_classes}")));
    }

    let raw = fused_matrix(reps)?;
    let dim = raw.dim();
    let n = raw.rows();

    let mut mean = vec![0.0; dim];
    for i in 0..n {
        for (m, &v) in mean.iter_mut().zip(raw.row(i)) {
            *m += v;
        }
    }
    for m in mean.iter_mut() {
        *m /= n as f64;
    }
    let mut var = vec![0.0; dim];
    for i in 0..n {
        for (s, (&v, &m)) in var.iter_mut().zip(raw.row(i).iter().zip(&mean)) {
            let d = v - m;
            *s += d * d;
        }
    }
    let std: Vec<f64> = var
        .iter()
        .map(|&s| {
            let sd = (s / n as f64).sqrt();
            if sd > 1e-8 {
                sd
            } else {
                1.0
            }
        })
        .collect();

    let mut x = FeatureMatrix::zeros(0, dim);
    let mut row = vec![0.0; dim];
    for i in 0..n {
        for (r, ((&v, &m), &sd)) in row
            .iter_mut()
            .zip(raw.row(i).iter().zip(&mean).zip(&std))
        {
            *r = (v - m) / sd;
        }
        x.push_row(&row);
    }

    let targets = nn::smoothed_targets(labels, num_classes, 0.0, |_| false);
    let mut mlp = nn::Mlp::new(&[dim, HIDDEN_UNITS, HIDDEN_UNITS, num_classes], config.seed);
    let log = nn::train(
        &mut mlp,
        &x,
        &targets,
        &nn::TrainOptions {
            epochs: config.epochs,
            batch_size: config.batch_size,
            step: config.step,
            seed: config.seed,
            cosine_decay: true,
        },
    )?;

    Ok(SceneClassifier {
        mlp,
        standardize_mean: mean,
        standardize_std: std,
        num_classes,
        beta: reps.first().map(|r| r.beta).unwrap_or(0.0),
        config_hash,
        final_loss: log.final_loss,
    })
}

impl SceneClassifier {
    pub fn input_dim(&self) -> usize {
        self.standardize_mean.len()
    }

    fn standardized(&self, fused: &[f64]) -> Result<Vec<f64>> {
        if fused.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: fused.len(),
            });
        }
        Ok(fused
            .iter()
            .zip(self.standardize_mean.iter().zip(&self.standardize_std))
            .map(|(&v, (&m, &sd))| (v - m) / sd)
            .collect())
    }

    pub fn probabilities(&self, rep: &ImageRepresentation) -> Result<Vec<f64>> {
        Ok(self.mlp.probabilities(&self.standardized(&rep.fused)?))
    }

    /// Argmax prediction, ties to the smaller class index.
    pub fn predict(&self, rep: &ImageRepresentation) -> Result<usize> {
        let p = self.probabilities(rep)?;
        let mut best = 0;
        for c in 1..p.len() {
            if p[c] > p[best] {
                best = c;
            }
        }
        Ok(best)
    }

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
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub per_class_accuracy: Vec<f64>,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<u64>>,
}

pub fn evaluate(
    model: &SceneClassifier,
    reps: &[ImageRepresentation],
    labels: &[usize],
) -> Result<EvalReport> {
    if reps.len() != labels.len() {
        return Err(Error::Config(format!(
            "{} representations but {} labels",
            reps.len(),
            labels.len()
        )));
    }
    let c = model.num_classes;
    let mut confusion = vec![vec![0u64; c]; c];
    for (rep, &label) in reps.iter().zip(labels) {
        if label >= c {
            return Err(Error::Config(format!("test label {label} >= num_classes {c}")));
        }
        let predicted = model.predict(rep)?;
        confusion[label][predicted] += 1;
    }
    let total: u64 = confusion.iter().map(|row| row.iter().sum::<u64>()).sum();
    let trace: u64 = (0..c).map(|i| confusion[i][i]).sum();
    let per_class_accuracy = confusion
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let row_total: u64 = row.iter().sum();
            if row_total > 0 {
                confusion[i][i] as f64 / row_total as f64
            } else {
                0.0
            }
        })
        .collect();
    Ok(EvalReport {
        accuracy: if total > 0 { trace as f64 / total as f64 } else { 0.0 },
        per_class_accuracy,
        confusion,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BetaSelection {
    pub beta: f64,
    /// (beta, held-out accuracy) in grid order.
    pub accuracies: Vec<(f64, f64)>,
}

/// Picks the fusion weight by a seeded 20% holdout of the training images:
/// trains one classifier per grid value on the remaining 80% and returns the
/// beta with the highest held-out accuracy (ties to the smaller beta). If a
/// class is missing from either side of the split, reshuffles once, then
/// errors.
pub fn cross_validate_beta(
    build_reps: impl Fn(f64) -> Result<Vec<ImageRepresentation>>,
    labels: &[usize],
    num_classes: usize,
    grid: &[f64],
    config: &SceneTrainConfig,
    seed: u64,
) -> Result<BetaSelection> {
    if grid.is_empty() {
        return Err(Error::Config("beta grid is empty".into()));
    }
    let n = labels.len();
    if n < 2 {
        return Err(Error::Config("need at least 2 training images".into()));
    }

    let holdout_count = ((n as f64) * 0.2).floor().max(1.0) as usize;
    let split = |shuffle_seed: u64| -> (Vec<usize>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(shuffle_seed);
        let mut order: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = rng.random_range(0..=i);
            order.swap(i, j);
        }
        let holdout = order[..holdout_count].to_vec();
        let train = order[holdout_count..].to_vec();
        (train, holdout)
    };
    let covers_all = |indices: &[usize]| -> bool {
        let mut seen = vec![false; num_classes];
        for &i in indices {
            seen[labels[i]] = true;
        }
        seen.iter().all(|&s| s)
    };

    let mut parts = split(seed);
    if !(covers_all(&parts.0) && covers_all(&parts.1)) {
        parts = split(seed.wrapping_add(1));
        if !(covers_all(&parts.0) && covers_all(&parts.1)) {
            return Err(Error::Config(
                "a class is absent from the cross-validation holdout even after a reshuffle; \
                 provide more training images per class"
                    .into(),
            ));
        }
    }
    let (train_idx, holdout_idx) = parts;
    let train_labels: Vec<usize> = train_idx.iter().map(|&i| labels[i]).collect();
    let holdout_labels: Vec<usize> = holdout_idx.iter().map(|&i| labels[i]).collect();

    let mut grid = grid.to_vec();
    grid.sort_by(f64::total_cmp);
    let mut accuracies = Vec::with_capacity(grid.len());
    let mut best: Option<(f64, f64)> = None;
    for &beta in &grid {
        let reps = build_reps(beta)?;
        if reps.len() != n {
            return Err(Error::Config(format!(
                "builder returned {} representations for {n} images",
                reps.len()
            )));
        }
        let train_reps: Vec<ImageRepresentation> =
            train_idx.iter().map(|&i| reps[i].clone()).collect();
        let holdout_reps: Vec<ImageRepresentation> =
            holdout_idx.iter().map(|&i| reps[i].clone()).collect();
        let model = train_scene_classifier(&train_reps, &train_labels, num_classes, config)?;
        let report = evaluate(&model, &holdout_reps, &holdout_labels)?;
        accuracies.push((beta, report.accuracy));
        // strict improvement keeps the smaller beta on ties
        if best.map(|(_, acc)| report.accuracy > acc).unwrap_or(true) {
            best = Some((beta, report.accuracy));
        }
    }

    Ok(BetaSelection {
        beta: best.expect("grid nonempty").0,
        accuracies,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pooling::build_image_representation;

    fn rep(fused_source: &[f64], beta: f64) -> ImageRepresentation {
        build_image_representation(vec![fused_source.to_vec()], vec![0.0, 0.0], beta).unwrap()
    }

    fn toy_problem() -> (Vec<ImageRepresentation>, Vec<usize>) {
        let mut reps = Vec::new();
        let mut labels = Vec::new();
        for i in 0..12 {
            let t = (i % 6) as f64 * 0.02;
            if i < 6 {
                reps.push(rep(&[1.0 + t, 0.0, t], 1.0));
                labels.push(0);
            } else {
                reps.push(rep(&[0.0, 1.0 + t, -t], 1.0));
                labels.push(1);
            }
        }
        (reps, labels)
    }

    #[test]
    fn separable_toy_reaches_full_training_accuracy() {
        let (reps, labels) = toy_problem();
        let config = SceneTrainConfig {
            epochs: 150,
            ..Default::default()
        };
        let model = train_scene_classifier(&reps, &labels, 2, &config).unwrap();
        let report = evaluate(&model, &reps, &labels).unwrap();
        assert_eq!(report.accuracy, 1.0);
    }

    #[test]
    fn training_is_seed_deterministic() {
        let (reps, labels) = toy_problem();
        let config = SceneTrainConfig {
            epochs: 40,
            seed: 3,
            ..Default::default()
        };
        let a = train_scene_classifier(&reps, &labels, 2, &config).unwrap();
        let b = train_scene_classifier(&reps, &labels, 2, &config).unwrap();
        assert_eq!(a.parameters(), b.parameters());
    }

    #[test]
    fn single_class_training_is_rejected() {
        let (reps, _) = toy_problem();
        let labels = vec![0usize; reps.len()];
        let err = train_scene_classifier(&reps, &labels, 2, &Default::default()).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn confusion_rows_sum_to_class_counts() {
        let (reps, labels) = toy_problem();
        let model = train_scene_classifier(
            &reps,
            &labels,
            2,
            &SceneTrainConfig { epochs: 50, ..Default::default() },
        )
        .unwrap();
        let report = evaluate(&model, &reps, &labels).unwrap();
        for (c, row) in report.confusion.iter().enumerate() {
            let expected = labels.iter().filter(|&&l| l == c).count() as u64;
            assert_eq!(row.iter().sum::<u64>(), expected);
        }
    }

    #[test]
    fn relabeled_evaluation_permutes_confusion_exactly() {
        let (reps, labels) = toy_problem();
        let model = train_scene_classifier(
            &reps,
            &labels,
            2,
            &SceneTrainConfig { epochs: 50, ..Default::default() },
        )
        .unwrap();
        let report = evaluate(&model, &reps, &labels).unwrap();
        let swapped: Vec<usize> = labels.iter().map(|&l| 1 - l).collect();
        let swapped_report = evaluate(&model, &reps, &swapped).unwrap();
        // permuting true labels permutes confusion rows exactly
        assert_eq!(report.confusion[0], swapped_report.confusion[1]);
        assert_eq!(report.confusion[1], swapped_report.confusion[0]);
    }

    #[test]
    fn beta_grid_of_one_returns_that_value() {
        let (reps, labels) = toy_problem();
        let selection = cross_validate_beta(
            |beta| {
                Ok(reps
                    .iter()
                    .map(|r| {
                        build_image_representation(
                            r.level_vectors.clone(),
                            r.holistic.clone(),
                            beta,
                        )
                        .unwrap()
                    })
                    .collect())
            },
            &labels,
            2,
            &[0.4],
            &SceneTrainConfig { epochs: 30, ..Default::default() },
            9,
        )
        .unwrap();
        assert_eq!(selection.beta, 0.4);
    }
}
