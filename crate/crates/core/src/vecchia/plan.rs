use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::Grid;

/// Maximin ordering of the grid, as original storage indices.
///
/// The first point is the one nearest the centroid. Every later point maximizes
/// its minimum distance to the points already ordered. Ties go to the smallest
/// original index.
pub fn maximin_order(grid: &Grid) -> Vec<usize> {
    let x = grid.points();
    let p = x.len();
    let centroid = x.iter().sum::<f64>() / p as f64;
    let first = (0..p)
        .min_by(|&a, &b| {
            (x[a] - centroid)
                .abs()
                .total_cmp(&(x[b] - centroid).abs())
                .then(a.cmp(&b))
        })
        .expect("grid is non-empty");

    let mut order = Vec::with_capacity(p);
    let mut placed = vec![false; p];
    let mut min_dist = vec![f64::INFINITY; p];
    let mut next = first;
    for _ in 0..p {
        order.push(next);
        placed[next] = true;
        let xn = x[next];
        let mut best: Option<usize> = None;
        for i in 0..p {
            if placed[i] {
                continue;
            }
            let d = (x[i] - xn).abs();
            if d < min_dist[i] {
                min_dist[i] = d;
            }
            // strict comparison keeps the smallest index on ties
            if best.is_none_or(|b| min_dist[i] > min_dist[b]) {
                best = Some(i);
            }
        }
        match best {
            Some(b) => next = b,
            None => break,
        }
    }
    order
}

/// Ordering plus conditioning sets; fixed for the lifetime of a fit.
///
/// All indices in `csets` and `pattern` refer to positions in the maximin
/// ordering, not to original grid storage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VecchiaPlan {
    /// `order[i]` is the original grid index placed at ordered position `i`.
    order: Vec<usize>,
    /// Conditioning set of each ordered position, ascending ordered positions.
    csets: Vec<Vec<usize>>,
    m: usize,
}

impl VecchiaPlan {
    /// Builds the plan for conditioning-set cap `m` (`1 ≤ m ≤ p - 1`).
    pub fn build(grid: &Grid, m: usize) -> Result<Self> {
        let p = grid.len();
        if p < 2 || m == 0 || m > p - 1 {
            return Err(Error::Domain(format!(
                "conditioning-set size m={m} must lie in [1, {}] for a grid of {p} points",
                p.saturating_sub(1)
            )));
        }
        let order = maximin_order(grid);
        Ok(Self::from_order(grid, order, m))
    }

    pub(crate) fn from_order(grid: &Grid, order: Vec<usize>, m: usize) -> Self {
        let x = grid.points();
        let p = order.len();
        let mut csets = Vec::with_capacity(p);
        let mut candidates: Vec<(f64, usize)> = Vec::with_capacity(p);
        for i in 0..p {
            let xi = x[order[i]];
            let take = m.min(i);
            candidates.clear();
            candidates.extend((0..i).map(|j| ((x[order[j]] - xi).abs(), j)));
            // nearest first, ties to the earlier ordered position
            let by_distance = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
            if take < candidates.len() {
                candidates.select_nth_unstable_by(take, by_distance);
            }
            let mut set: Vec<usize> = candidates[..take].iter().map(|c| c.1).collect();
            set.sort_unstable();
            csets.push(set);
        }
        Self { order, csets, m }
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    /// Conditioning set of ordered position `i`.
    pub fn cset(&self, i: usize) -> &[usize] {
        &self.csets[i]
    }

    pub fn csets(&self) -> &[Vec<usize>] {
        &self.csets
    }

    /// Sparsity pattern: `(i, i)` for every position and `(i, j)` for each `j` in `c(i)`.
    pub fn pattern(&self) -> SparsityPattern {
        SparsityPattern {
            rows: self
                .csets
                .iter()
                .enumerate()
                .map(|(i, c)| {
                    let mut r = c.clone();
                    r.push(i);
                    r
                })
                .collect(),
        }
    }

    /// Reorders a vector in original storage order into ordered coordinates.
    pub fn to_ordered(&self, y: &[f64]) -> Vec<f64> {
        self.order.iter().map(|&i| y[i]).collect()
    }

    /// Inverse of [`Self::to_ordered`].
    pub fn to_original(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; y.len()];
        for (pos, &i) in self.order.iter().enumerate() {
            out[i] = y[pos];
        }
        out
    }

    /// The grid in ordered coordinates.
    pub fn ordered_grid(&self, grid: &Grid) -> Grid {
        grid.permuted(&self.order)
    }
}

/// Lower-triangular sparsity pattern, one ascending column list per row.
/// The last entry of every row is its diagonal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SparsityPattern {
    rows: Vec<Vec<usize>>,
}

impl SparsityPattern {
    /// Builds a pattern from per-row off-diagonal columns; validates lower-triangularity.
    pub fn from_offdiagonal(offdiag: Vec<Vec<usize>>) -> Result<Self> {
        let mut rows = Vec::with_capacity(offdiag.len());
        for (i, mut cols) in offdiag.into_iter().enumerate() {
            cols.sort_unstable();
            cols.dedup();
            if cols.last().is_some_and(|&c| c >= i) {
                return Err(Error::Domain(format!(
                    "pattern row {i} has an entry on or above the diagonal"
                )));
            }
            cols.push(i);
            rows.push(cols);
        }
        Ok(Self { rows })
    }

    /// Every lower-triangular position.
    pub fn full(p: usize) -> Self {
        Self {
            rows: (0..p).map(|i| (0..=i).collect()).collect(),
        }
    }

    /// Diagonal only.
    pub fn diagonal(p: usize) -> Self {
        Self {
            rows: (0..p).map(|i| vec![i]).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    /// Columns of row `i`, ascending, diagonal last.
    pub fn row(&self, i: usize) -> &[usize] {
        &self.rows[i]
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        i < self.rows.len() && self.rows[i].binary_search(&j).is_ok()
    }

    pub fn offdiagonal_count(&self) -> usize {
        self.rows.iter().map(|r| r.len() - 1).sum()
    }
}
