//! Image-level pooling of meta-object responses.
//!
//! Two encoders: an adaptive 3-level spatial pyramid over region labels
//! (each cell splits 2x2 at the centroid of the regions it contains), and a
//! modified VLAD that aggregates residuals against the meta-object cluster
//! centers, compresses each cluster block by PCA to floor(d/k) dims, then
//! applies signed-sqrt and global L2 normalization. Background regions never
//! reach either encoder.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;

/// A non-background region: its bbox center plus the meta label in 1..=N.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpmRegion {
    pub cx: f64,
    pub cy: f64,
    /// Meta-object label, 1..=N (0 is background and must be filtered out
    /// before pooling).
    pub label: usize,
}

pub const SPM_CELLS: usize = 21; // 1 + 4 + 16

#[derive(Clone)]
struct Cell {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
    members: Vec<usize>,
}

impl Cell {
    fn split_point(&self, regions: &[SpmRegion]) -> (f64, f64) {
        if self.members.is_empty() {
            return (0.5 * (self.x0 + self.x1), 0.5 * (self.y0 + self.y1));
        }
        let n = self.members.len() as f64;
        let sx = self.members.iter().map(|&i| regions[i].cx).sum::<f64>() / n;
        let sy = self.members.iter().map(|&i| regions[i].cy).sum::<f64>() / n;
        (sx, sy)
    }

    /// 2x2 split at the member centroid; a region sitting exactly on a split
    /// boundary goes to the lower-index subcell.
    fn split(&self, regions: &[SpmRegion]) -> [Cell; 4] {
        let (sx, sy) = self.split_point(regions);
        let mut quads: [Vec<usize>; 4] = Default::default();
        for &i in &self.members {
            let ix = if regions[i].cx <= sx { 0 } else { 1 };
            let iy = if regions[i].cy <= sy { 0 } else { 1 };
            quads[2 * iy + ix].push(i);
        }
        let [q0, q1, q2, q3] = quads;
        [
            Cell { x0: self.x0, x1: sx, y0: self.y0, y1: sy, members: q0 },
            Cell { x0: sx, x1: self.x1, y0: self.y0, y1: sy, members: q1 },
            Cell { x0: self.x0, x1: sx, y0: sy, y1: self.y1, members: q2 },
            Cell { x0: sx, x1: self.x1, y0: sy, y1: self.y1, members: q3 },
        ]
    }
}

fn spm_cells(regions: &[SpmRegion]) -> Vec<Cell> {
    let root = Cell {
        x0: 0.0,
        x1: 1.0,
        y0: 0.0,
        y1: 1.0,
        members: (0..regions.len()).collect(),
    };
    let level1 = root.split(regions);
    let mut cells = Vec::with_capacity(SPM_CELLS);
    cells.push(root);
    for cell in &level1 {
        cells.push(cell.clone());
    }
    for cell in &level1 {
        cells.extend(cell.split(regions));
    }
    cells
}

/// Raw per-cell label counts, `[SPM_CELLS * n_meta]`, cells ordered level 0,
/// level 1 (subcells 0..3), level 2 (parent-major).
pub fn spm_counts(regions: &[SpmRegion], n_meta: usize) -> Result<Vec<f64>> {
    for r in regions {
        if r.label < 1 || r.label > n_meta {
            return Err(Error::Config(format!(
                "spm region label {} outside 1..={n_meta}",
                r.label
            )));
        }
    }
    let cells = spm_cells(regions);
    let mut out = vec![0.0; SPM_CELLS * n_meta];
    for (ci, cell) in cells.iter().enumerate() {
        for &i in &cell.members {
            out[ci * n_meta + (regions[i].label - 1)] += 1.0;
        }
    }
    Ok(out)
}

/// Adaptive SPM histogram: per-cell counts, L1-normalized per cell (empty
/// cells stay all-zero).
pub fn spm_encode(regions: &[SpmRegion], n_meta: usize) -> Result<Vec<f64>> {
    let mut counts = spm_counts(regions, n_meta)?;
    for cell in 0..SPM_CELLS {
        let slice = &mut counts[cell * n_meta..(cell + 1) * n_meta];
        let total: f64 = slice.iter().sum();
        if total > 0.0 {
            for v in slice.iter_mut() {
                *v /= total;
            }
        }
    }
    Ok(counts)
}

/// Per-cluster PCA of residual aggregates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterPca {
    pub mean: Vec<f64>,
    /// `components x d`; non-padded rows are orthonormal.
    pub projection: Vec<Vec<f64>>,
    /// Trailing all-zero rows added because the aggregates had lower rank
    /// than the requested component count.
    pub padded_rows: usize,
    /// The aggregates had no variance at all; the projection fell back to
    /// the canonical basis.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    /// floor(d / k) components per cluster.
    pub components: usize,
    pub clusters: Vec<ClusterPca>,
}

/// Fits one PCA per cluster on that cluster's per-image residual-sum
/// vectors. `aggregates[c]` holds the aggregate of every training image
/// with at least one region assigned to cluster c.
pub fn fit_vlad_pca(aggregates: &[Vec<Vec<f64>>], dim: usize) -> Result<PcaModel> {
    let k = aggregates.len();
    if k == 0 {
        return Err(Error::Config("no clusters to fit VLAD PCA on".into()));
    }
    let components = dim / k;
    if components == 0 {
        return Err(Error::Config(format!(
            "{k} clusters in {dim} dims leaves floor(d/k) = 0 PCA components; \
             use fewer clusters or SPM pooling"
        )));
    }

    let clusters = aggregates
        .iter()
        .map(|rows| fit_cluster_pca(rows, dim, components))
        .collect::<Result<Vec<_>>>()?;
    Ok(PcaModel {
        components,
        clusters,
    })
}

fn fit_cluster_pca(rows: &[Vec<f64>], dim: usize, components: usize) -> Result<ClusterPca> {
    for row in rows {
        if row.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: row.len(),
            });
        }
    }
    if rows.is_empty() {
        return Ok(ClusterPca {
            mean: vec![0.0; dim],
            projection: vec![vec![0.0; dim]; components],
            padded_rows: components,
            degenerate: false,
        });
    }

    let mean = math::mean_of_rows(rows.iter().map(|r| r.as_slice()), dim);
    let mut cov = DMatrix::<f64>::zeros(dim, dim);
    for row in rows {
        let centered: Vec<f64> = row.iter().zip(&mean).map(|(v, m)| v - m).collect();
        for a in 0..dim {
            if centered[a] == 0.0 {
                continue;
            }
            for b in a..dim {
                cov[(a, b)] += centered[a] * centered[b];
            }
        }
    }
    for a in 0..dim {
        for b in 0..a {
            cov[(a, b)] = cov[(b, a)];
        }
    }
    cov /= rows.len() as f64;

    let eigen = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| {
        eigen.eigenvalues[b]
            .total_cmp(&eigen.eigenvalues[a])
            .then(a.cmp(&b))
    });

    let max_eigenvalue = eigen.eigenvalues[order[0]].max(0.0);
    if max_eigenvalue <= 1e-15 {
        // zero-variance aggregates: any orthonormal basis works
        let mut projection = vec![vec![0.0; dim]; components];
        for (i, row) in projection.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        return Ok(ClusterPca {
            mean,
            projection,
            padded_rows: 0,
            degenerate: true,
        });
    }

    let rank = order
        .iter()
        .filter(|&&i| eigen.eigenvalues[i] > max_eigenvalue * 1e-9)
        .count();
    let take = components.min(rank);
    let mut projection = Vec::with_capacity(components);
    for &col in order.iter().take(take) {
        let mut row: Vec<f64> = (0..dim).map(|r| eigen.eigenvectors[(r, col)]).collect();
        // deterministic sign: the largest-magnitude coordinate is positive
        let lead = (0..dim)
            .max_by(|&a, &b| row[a].abs().total_cmp(&row[b].abs()).then(b.cmp(&a)))
            .unwrap();
        if row[lead] < 0.0 {
            for v in row.iter_mut() {
                *v = -*v;
            }
        }
        projection.push(row);
    }
    let padded_rows = components - take;
    for _ in 0..padded_rows {
        projection.push(vec![0.0; dim]);
    }

    Ok(ClusterPca {
        mean,
        projection,
        padded_rows,
        degenerate: false,
    })
}

/// Index of the nearest non-empty center, ties to the smaller cluster index.
pub fn nearest_center(x: &[f64], centers: &[Vec<f64>], empty: &[bool]) -> Option<usize> {
    let mut best: Option<(f64, usize)> = None;
    for (c, center) in centers.iter().enumerate() {
        if empty[c] {
            continue;
        }
        let d = math::squared_distance(x, center);
        best = match best {
            Some((bd, bc)) if bd <= d => Some((bd, bc)),
            _ => Some((d, c)),
        };
    }
    best.map(|(_, c)| c)
}

/// Per-cluster residual sums of the given (non-background) region features.
pub fn vlad_aggregates<'a>(
    region_features: impl IntoIterator<Item = &'a [f64]>,
    centers: &[Vec<f64>],
    empty: &[bool],
) -> Vec<Vec<f64>> {
    let dim = centers.first().map(|c| c.len()).unwrap_or(0);
    let mut sums = vec![vec![0.0; dim]; centers.len()];
    for feature in region_features {
        if let Some(c) = nearest_center(feature, centers, empty) {
            for (s, (f, m)) in sums[c].iter_mut().zip(feature.iter().zip(&centers[c])) {
                *s += f - m;
            }
        }
    }
    sums
}

/// Modified VLAD: residual sums per meta-object cluster, PCA-projected per
/// cluster, concatenated, signed-sqrt, then L2-normalized. The projection is
/// applied linearly so that zero residuals encode to the zero vector.
pub fn vlad_encode<'a>(
    region_features: impl IntoIterator<Item = &'a [f64]>,
    centers: &[Vec<f64>],
    empty: &[bool],
    pca: &PcaModel,
) -> Result<Vec<f64>> {
    if centers.len() != pca.clusters.len() {
        return Err(Error::Config(format!(
            "{} centers but PCA for {} clusters",
            centers.len(),
            pca.clusters.len()
        )));
    }
    let sums = vlad_aggregates(region_features, centers, empty);
    let mut out = Vec::with_capacity(centers.len() * pca.components);
    for (c, sum) in sums.iter().enumerate() {
        for row in &pca.clusters[c].projection {
            out.push(math::dot(row, sum));
        }
    }
    for v in out.iter_mut() {
        *v = v.signum() * v.abs().sqrt();
    }
    math::l2_normalize_in_place(&mut out);
    Ok(out)
}

/// Per-level pooled vectors fused with the holistic image feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRepresentation {
    pub level_vectors: Vec<Vec<f64>>,
    pub holistic: Vec<f64>,
    pub beta: f64,
    /// concat(beta * levels..., (1 - beta) * holistic), bottom level first.
    pub fused: Vec<f64>,
}

pub fn build_image_representation(
    level_vectors: Vec<Vec<f64>>,
    holistic: Vec<f64>,
    beta: f64,
) -> Result<ImageRepresentation> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::Config(format!("beta must be in [0,1], got {beta}")));
    }
    let fused_dim = level_vectors.iter().map(|v| v.len()).sum::<usize>() + holistic.len();
    let mut fused = Vec::with_capacity(fused_dim);
    for level in &level_vectors {
        fused.extend(level.iter().map(|&v| beta * v));
    }
    fused.extend(holistic.iter().map(|&v| (1.0 - beta) * v));
    Ok(ImageRepresentation {
        level_vectors,
        holistic,
        beta,
        fused,
    })
}

/// Expected block sizes of a fused representation; the scene classifier
/// validates inputs against this.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepresentationLayout {
    pub level_dims: Vec<usize>,
    pub holistic_dim: usize,
}

impl RepresentationLayout {
    pub fn fused_dim(&self) -> usize {
        self.level_dims.iter().sum::<usize>() + self.holistic_dim
    }

    pub fn check(&self, rep: &ImageRepresentation) -> Result<()> {
        let dims: Vec<usize> = rep.level_vectors.iter().map(|v| v.len()).collect();
        if dims != self.level_dims || rep.holistic.len() != self.holistic_dim {
            return Err(Error::Config(format!(
                "representation layout mismatch: levels {dims:?} + holistic {} vs expected \
                 {:?} + {}",
                rep.holistic.len(),
                self.level_dims,
                self.holistic_dim
            )));
        }
        Ok(())
    }
}
