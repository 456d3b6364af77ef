//! One-class SVM training and the cascaded outlier pruning built on it.
//!
//! The dual solved here is
//!
//! ```text
//!     minimize    1/2 a' Q a
//!     subject to  0 <= a_i <= 1/(nu*l),   sum a_i = 1
//! ```
//!
//! with `Q_ij = k(x_i, x_j)`, via pairwise coordinate descent on maximal
//! KKT-violating pairs (the sum constraint is preserved by moving mass
//! between two coordinates at a time). The decision value of a point is
//! `sum_i a_i k(sv_i, x) - rho`; non-representative patches score low.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;
use crate::matrix::FeatureMatrix;
use crate::types::{FeatureVector, PatchId};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum KernelSpec {
    Linear,
    Rbf { gamma: f64 },
}

impl KernelSpec {
    pub fn rbf(gamma: f64) -> Result<Self> {
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(Error::Config(format!(
                "rbf gamma must be finite and positive, got {gamma}"
            )));
        }
        Ok(KernelSpec::Rbf { gamma })
    }

    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            KernelSpec::Linear => math::dot(a, b),
            KernelSpec::Rbf { gamma } => (-gamma * math::squared_distance(a, b)).exp(),
        }
    }
}

/// gamma = 1 / median pairwise squared distance, the usual rbf default.
/// Falls back to 1.0 when all points coincide.
pub fn median_heuristic_gamma(features: &FeatureMatrix) -> f64 {
    let n = features.rows();
    if n < 2 {
        return 1.0;
    }
    let mut d2: Vec<f64> = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            d2.push(math::squared_distance(features.row(i), features.row(j)));
        }
    }
    d2.sort_by(f64::total_cmp);
    let median = d2[d2.len() / 2];
    if median > 0.0 {
        1.0 / median
    } else {
        1.0
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OcsvmModel {
    pub support_vectors: Vec<FeatureVector>,
    pub alphas: Vec<f64>,
    pub rho: f64,
    pub kernel: KernelSpec,
    pub nu: f64,
    /// Size of the training set the model was fit on (the box constraint is
    /// 1/(nu * training_size)).
    pub training_size: usize,
    /// Row indices of the support vectors within the training set.
    pub sv_indices: Vec<usize>,
}

impl OcsvmModel {
    pub fn upper_bound(&self) -> f64 {
        1.0 / (self.nu * self.training_size as f64)
    }

    pub fn decision_value(&self, x: &[f64]) -> Result<f64> {
        let dim = self
            .support_vectors
            .first()
            .map(|sv| sv.dim())
            .unwrap_or(x.len());
        if x.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: x.len(),
            });
        }
        let mut sum = 0.0;
        for (sv, &a) in self.support_vectors.iter().zip(&self.alphas) {
            sum += a * self.kernel.eval(sv.values(), x);
        }
        Ok(sum - self.rho)
    }

    /// 1/2 a'Qa over the support set.
    pub fn dual_objective(&self) -> f64 {
        let ns = self.support_vectors.len();
        let mut obj = 0.0;
        for i in 0..ns {
            let ki = self.support_vectors[i].values();
            obj += self.alphas[i] * self.alphas[i] * self.kernel.eval(ki, ki);
            for j in (i + 1)..ns {
                obj += 2.0
                    * self.alphas[i]
                    * self.alphas[j]
                    * self.kernel.eval(ki, self.support_vectors[j].values());
            }
        }
        0.5 * obj
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    /// Stop when the maximal KKT violation drops below this.
    pub tolerance: f64,
    pub max_pair_updates: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        // tolerance well below the 1e-6 margin-SV contract so the spread of
        // gradient values across free SVs cannot exceed it
        SolverOptions {
            tolerance: 1e-7,
            max_pair_updates: 200_000,
        }
    }
}

pub fn train_ocsvm(features: &FeatureMatrix, nu: f64, kernel: KernelSpec) -> Result<OcsvmModel> {
    train_ocsvm_with_options(features, nu, kernel, SolverOptions::default())
}

pub fn train_ocsvm_with_options(
    features: &FeatureMatrix,
    nu: f64,
    kernel: KernelSpec,
    options: SolverOptions,
) -> Result<OcsvmModel> {
    let l = features.rows();
    if l < 2 {
        return Err(Error::Config(format!(
            "need at least 2 training points, got {l}"
        )));
    }
    if !(nu > 0.0 && nu <= 1.0) {
        return Err(Error::Config(format!("nu must be in (0, 1], got {nu}")));
    }
    if nu * (l as f64) < 1.0 {
        return Err(Error::Config(format!(
            "nu * l = {} < 1: the box constraint cannot reach sum(alpha) = 1",
            nu * l as f64
        )));
    }
    if let KernelSpec::Rbf { gamma } = kernel {
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(Error::Config(format!("rbf gamma must be positive, got {gamma}")));
        }
    }

    let mut q = vec![0.0f64; l * l];
    for i in 0..l {
        for j in i..l {
            let v = kernel.eval(features.row(i), features.row(j));
            q[i * l + j] = v;
            q[j * l + i] = v;
        }
    }

    let mut jittered = false;
    loop {
        match smo(&q, l, nu, options) {
            SmoOutcome::Converged { alpha, gradient } => {
                return Ok(build_model(features, nu, kernel, alpha, gradient))
            }
            SmoOutcome::NonDescent => {
                if jittered {
                    return Err(Error::Numerical(
                        "kernel matrix not positive semidefinite beyond jitter tolerance".into(),
                    ));
                }
                // non-descent step: nudge the diagonal once and retry
                for i in 0..l {
                    q[i * l + i] += 1e-10;
                }
                jittered = true;
            }
        }
    }
}

enum SmoOutcome {
    Converged { alpha: Vec<f64>, gradient: Vec<f64> },
    NonDescent,
}

fn smo(q: &[f64], l: usize, nu: f64, options: SolverOptions) -> SmoOutcome {
    let c = 1.0 / (nu * l as f64);

    // uniform start: feasible for every nu in (0,1] since 1/l <= 1/(nu*l),
    // and symmetric, so exchangeable points keep equal coefficients
    let mut alpha = vec![1.0 / l as f64; l];

    // gradient of 1/2 a'Qa is Qa
    let mut gradient = vec![0.0f64; l];
    for i in 0..l {
        let row = &q[i * l..(i + 1) * l];
        gradient[i] = math::dot(row, &alpha);
    }

    let bound_eps = c * 1e-12;
    for _ in 0..options.max_pair_updates {
        // maximal violating pair
        let mut up: Option<usize> = None;
        let mut low: Option<usize> = None;
        for i in 0..l {
            if alpha[i] < c - bound_eps && up.map(|u| gradient[i] < gradient[u]).unwrap_or(true) {
                up = Some(i);
            }
            if alpha[i] > bound_eps && low.map(|v| gradient[i] > gradient[v]).unwrap_or(true) {
                low = Some(i);
            }
        }
        let (i, j) = match (up, low) {
            (Some(i), Some(j)) => (i, j),
            _ => break,
        };
        let violation = gradient[j] - gradient[i];
        if violation < options.tolerance {
            break;
        }

        let eta = q[i * l + i] + q[j * l + j] - 2.0 * q[i * l + j];
        if eta < -1e-12 {
            return SmoOutcome::NonDescent;
        }
        let eta = eta.max(1e-12);
        let step = (violation / eta).min(c - alpha[i]).min(alpha[j]);
        if step <= 0.0 {
            break;
        }
        alpha[i] += step;
        alpha[j] -= step;
        let (qi, qj) = (&q[i * l..(i + 1) * l], &q[j * l..(j + 1) * l]);
        for ((g, &qik), &qjk) in gradient.iter_mut().zip(qi).zip(qj) {
            *g += step * (qik - qjk);
        }
    }

    SmoOutcome::Converged { alpha, gradient }
}

fn build_model(
    features: &FeatureMatrix,
    nu: f64,
    kernel: KernelSpec,
    alpha: Vec<f64>,
    gradient: Vec<f64>,
) -> OcsvmModel {
    let l = features.rows();
    let c = 1.0 / (nu * l as f64);
    let margin_eps = c * 1e-9;

    let mut margin_sum = 0.0;
    let mut margin_count = 0usize;
    let mut upper_min = f64::INFINITY; // min gradient over alpha = C
    let mut lower_max = f64::NEG_INFINITY; // max gradient over alpha = 0
    for i in 0..l {
        if alpha[i] > margin_eps && alpha[i] < c - margin_eps {
            margin_sum += gradient[i];
            margin_count += 1;
        } else if alpha[i] >= c - margin_eps {
            upper_min = upper_min.min(gradient[i]);
        } else {
            lower_max = lower_max.max(gradient[i]);
        }
    }
    let rho = if margin_count > 0 {
        margin_sum / margin_count as f64
    } else {
        // all alphas at a bound: rho lies between the two gradient blocks
        match (upper_min.is_finite(), lower_max.is_finite()) {
            (true, true) => 0.5 * (upper_min + lower_max),
            (true, false) => upper_min,
            (false, true) => lower_max,
            (false, false) => 0.0,
        }
    };

    let mut support_vectors = Vec::new();
    let mut alphas = Vec::new();
    let mut sv_indices = Vec::new();
    for (i, &a) in alpha.iter().enumerate() {
        if a > 0.0 {
            support_vectors.push(
                FeatureVector::new(features.row(i).to_vec()).expect("training features finite"),
            );
            alphas.push(a);
            sv_indices.push(i);
        }
    }

    OcsvmModel {
        support_vectors,
        alphas,
        rho,
        kernel,
        nu,
        training_size: l,
        sv_indices,
    }
}

/// Kernel selection for the cascade; `RbfMedian` resolves its gamma on each
/// stage's current training set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum KernelChoice {
    Linear,
    Rbf { gamma: f64 },
    RbfMedian,
}

impl KernelChoice {
    fn resolve(&self, features: &FeatureMatrix) -> KernelSpec {
        match *self {
            KernelChoice::Linear => KernelSpec::Linear,
            KernelChoice::Rbf { gamma } => KernelSpec::Rbf { gamma },
            KernelChoice::RbfMedian => KernelSpec::Rbf {
                gamma: median_heuristic_gamma(features),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CascadeConfig {
    pub stages: usize,
    pub per_stage_fraction: f64,
    pub nu: f64,
    pub kernel: KernelChoice,
}

impl Default for CascadeConfig {
    fn default() -> Self {
        CascadeConfig {
            stages: 3,
            per_stage_fraction: 0.15,
            nu: 0.15,
            kernel: KernelChoice::Linear,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CascadeWarning {
    /// Too few patches (or an infeasible nu*l) to train another stage.
    EarlyStop { stage: usize, remaining: usize },
    /// floor(fraction * count) was zero; the stage removed nothing.
    NoopStage { stage: usize },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CascadeResult {
    /// Sorted surviving patch ids.
    pub kept: Vec<PatchId>,
    pub removed_per_stage: Vec<Vec<PatchId>>,
    #[serde(skip)]
    pub models: Vec<OcsvmModel>,
    pub warnings: Vec<CascadeWarning>,
}

/// Repeatedly trains a one-class SVM on the surviving patches of one scene
/// category and removes exactly `floor(fraction * count)` lowest-scoring
/// patches per stage (ties: smaller patch_id goes first). Callers partition
/// by category before calling.
pub fn cascade_screen(
    ids: &[PatchId],
    features: &FeatureMatrix,
    config: &CascadeConfig,
) -> Result<CascadeResult> {
    if ids.len() != features.rows() {
        return Err(Error::Config(format!(
            "{} ids but {} feature rows",
            ids.len(),
            features.rows()
        )));
    }
    if config.stages < 1 {
        return Err(Error::Config("cascade needs at least 1 stage".into()));
    }
    if !(config.per_stage_fraction > 0.0 && config.per_stage_fraction < 1.0) {
        return Err(Error::Config(format!(
            "per_stage_fraction must be in (0,1), got {}",
            config.per_stage_fraction
        )));
    }

    let mut current: Vec<usize> = (0..ids.len()).collect();
    let mut removed_per_stage = Vec::new();
    let mut models = Vec::new();
    let mut warnings = Vec::new();

    for stage in 0..config.stages {
        if current.len() < 2 || config.nu * (current.len() as f64) < 1.0 {
            warnings.push(CascadeWarning::EarlyStop {
                stage,
                remaining: current.len(),
            });
            break;
        }

        let subset = features.select(&current);
        let kernel = config.kernel.resolve(&subset);
        let model = train_ocsvm(&subset, config.nu, kernel)?;

        let remove_count =
            (config.per_stage_fraction * current.len() as f64).floor() as usize;
        if remove_count == 0 {
            warnings.push(CascadeWarning::NoopStage { stage });
            models.push(model);
            removed_per_stage.push(Vec::new());
            continue;
        }

        let mut scored: Vec<(f64, PatchId, usize)> = current
            .iter()
            .map(|&row| {
                let value = model
                    .decision_value(features.row(row))
                    .expect("dimensions fixed within cascade");
                (value, ids[row], row)
            })
            .collect();
        scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

        let mut removed: Vec<PatchId> =
            scored[..remove_count].iter().map(|&(_, id, _)| id).collect();
        removed.sort_unstable();
        let keep_rows: Vec<usize> = {
            let mut rows: Vec<usize> = scored[remove_count..]
                .iter()
                .map(|&(_, _, row)| row)
                .collect();
            rows.sort_unstable();
            rows
        };

        removed_per_stage.push(removed);
        models.push(model);
        current = keep_rows;
    }

    let mut kept: Vec<PatchId> = current.iter().map(|&row| ids[row]).collect();
    kept.sort_unstable();

    Ok(CascadeResult {
        kept,
        removed_per_stage,
        models,
        warnings,
    })
}
