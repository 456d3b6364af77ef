//! Reference adaptive spatial pyramid: 1 + 4 + 16 cells, each cell split
//! 2x2 at the centroid of its contained region centers (geometric center
//! when empty), boundary points to the lower-index subcell. Histograms are
//! recomputed per cell by filtering the full region list against explicit
//! rectangles, rather than by partitioning.

#[derive(Clone, Copy)]
pub struct Region {
    pub cx: f64,
    pub cy: f64,
    /// 1..=n_meta
    pub label: usize,
}

#[derive(Clone, Copy)]
struct Rect {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

/// Membership is decided by the split chain, not the rectangle, so ties on a
/// boundary follow the lower-index rule exactly. The rectangle is only used
/// for geometric centers of empty cells.
fn members<'a>(regions: &'a [Region], path: &[usize], splits: &dyn Fn(&[usize]) -> (f64, f64)) -> Vec<&'a Region> {
    regions
        .iter()
        .filter(|r| {
            let mut prefix: Vec<usize> = Vec::new();
            for &want in path {
                let (sx, sy) = splits(&prefix);
                let ix = if r.cx <= sx { 0 } else { 1 };
                let iy = if r.cy <= sy { 0 } else { 1 };
                if 2 * iy + ix != want {
                    return false;
                }
                prefix.push(want);
            }
            true
        })
        .collect()
}

fn rect_of(path: &[usize], splits: &dyn Fn(&[usize]) -> (f64, f64)) -> Rect {
    let mut rect = Rect { x0: 0.0, x1: 1.0, y0: 0.0, y1: 1.0 };
    let mut prefix: Vec<usize> = Vec::new();
    for &step in path {
        let (sx, sy) = splits(&prefix);
        if step % 2 == 0 {
            rect.x1 = sx;
        } else {
            rect.x0 = sx;
        }
        if step / 2 == 0 {
            rect.y1 = sy;
        } else {
            rect.y0 = sy;
        }
        prefix.push(step);
    }
    rect
}

/// Raw counts, cells ordered: whole image, the four level-1 cells, then the
/// sixteen level-2 cells parent-major.
pub fn counts(regions: &[Region], n_meta: usize) -> Vec<f64> {
    // split point of the cell reached by `path`
    fn split_for(regions: &[Region], path: &[usize]) -> (f64, f64) {
        // recursive closure workaround: recompute membership down the path
        let splits = |p: &[usize]| split_for(regions, p);
        let inside = members(regions, path, &splits);
        if inside.is_empty() {
            let rect = rect_of(path, &splits);
            (0.5 * (rect.x0 + rect.x1), 0.5 * (rect.y0 + rect.y1))
        } else {
            let n = inside.len() as f64;
            (
                inside.iter().map(|r| r.cx).sum::<f64>() / n,
                inside.iter().map(|r| r.cy).sum::<f64>() / n,
            )
        }
    }
    let splits = |p: &[usize]| split_for(regions, p);

    let mut paths: Vec<Vec<usize>> = vec![vec![]];
    for a in 0..4 {
        paths.push(vec![a]);
    }
    for a in 0..4 {
        for b in 0..4 {
            paths.push(vec![a, b]);
        }
    }

    let mut out = vec![0.0; paths.len() * n_meta];
    for (ci, path) in paths.iter().enumerate() {
        for r in members(regions, path, &splits) {
            out[ci * n_meta + (r.label - 1)] += 1.0;
        }
    }
    out
}

/// Per-cell L1-normalized histogram.
pub fn encode(regions: &[Region], n_meta: usize) -> Vec<f64> {
    let mut raw = counts(regions, n_meta);
    for cell in 0..21 {
        let slice = &mut raw[cell * n_meta..(cell + 1) * n_meta];
        let total: f64 = slice.iter().sum();
        if total > 0.0 {
            for v in slice.iter_mut() {
                *v /= total;
            }
        }
    }
    raw
}
