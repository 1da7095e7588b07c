//! Tool-bucketed one-to-one alignment of ground-truth and predicted calls.
//!
//! Calls are grouped by qualified tool name; each bucket's similarities become
//! costs (`1 - s` when `s >= tau_weak`, otherwise a penalty) and are solved as
//! a linear assignment. Pairs that could only be assigned through a penalty
//! edge are dropped, so every surviving match clears `tau_weak` and no match
//! ever crosses tools.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding::SimilarityMatrix;
use crate::error::{Error, Result};
use crate::trajectory::ToolCall;

pub const DEFAULT_TAU_WEAK: f64 = 0.6;
pub const DEFAULT_TAU_STRONG: f64 = 0.8;
pub const DEFAULT_LAMBDA_PEN: f64 = 1000.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlignmentConfig {
    /// Screening threshold: pairs below it are never matched.
    pub tau_weak: f64,
    /// Confidence threshold used by argument similarity.
    pub tau_strong: f64,
    /// Cost of a sub-threshold pair in the assignment problem.
    pub lambda_pen: f64,
}

impl Default for AlignmentConfig {
    fn default() -> Self {
        Self {
            tau_weak: DEFAULT_TAU_WEAK,
            tau_strong: DEFAULT_TAU_STRONG,
            lambda_pen: DEFAULT_LAMBDA_PEN,
        }
    }
}

impl AlignmentConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, t) in [("tau_weak", self.tau_weak), ("tau_strong", self.tau_strong)] {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::Config(format!("{name} = {t} is outside [0, 1]")));
            }
        }
        if self.tau_weak > self.tau_strong {
            return Err(Error::Config(format!(
                "tau_weak ({}) must not exceed tau_strong ({})",
                self.tau_weak, self.tau_strong
            )));
        }
        if !(self.lambda_pen.is_finite() && self.lambda_pen > 1.0) {
            return Err(Error::Config(format!(
                "lambda_pen = {} must be finite and > 1",
                self.lambda_pen
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Match {
    pub gt_index: usize,
    pub pred_index: usize,
    pub similarity: f64,
}

/// One-to-one correspondences, sorted by ground-truth index.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MatchSet {
    pub matches: Vec<Match>,
}

impl MatchSet {
    pub fn len(&self) -> usize {
        self.matches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matches.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Match> {
        self.matches.iter()
    }
}

/// Ground-truth and predicted global indices sharing one tool name.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Bucket {
    pub gt: Vec<usize>,
    pub pred: Vec<usize>,
}

pub fn bucket_indices(gt_calls: &[&ToolCall], pred_calls: &[&ToolCall]) -> BTreeMap<String, Bucket> {
    let mut buckets: BTreeMap<String, Bucket> = BTreeMap::new();
    for (i, c) in gt_calls.iter().enumerate() {
        buckets.entry(c.tool().to_string()).or_default().gt.push(i);
    }
    for (j, c) in pred_calls.iter().enumerate() {
        buckets.entry(c.tool().to_string()).or_default().pred.push(j);
    }
    buckets
}

/// Thresholded cost: `1 - s` for `s >= tau_weak`, `lambda_pen` otherwise.
pub fn cost_matrix(similarities: &[Vec<f64>], cfg: &AlignmentConfig) -> Vec<Vec<f64>> {
    similarities
        .iter()
        .map(|row| {
            row.iter()
                .map(|&s| if s >= cfg.tau_weak { 1.0 - s } else { cfg.lambda_pen })
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// `(row, col)` pairs sorted by row; `min(n, m)` of them.
    pub pairs: Vec<(usize, usize)>,
    /// Sum of the assigned costs, accumulated in row order.
    pub cost: f64,
}

/// Minimum-cost one-to-one assignment of an `n × m` matrix.
///
/// Among optimal assignments the lexicographically smallest `(row, col)`
/// sequence is returned. Rectangular inputs are padded to square with a
/// constant, which leaves the optimum over real cells unchanged.
///
/// Panics on ragged rows or non-finite entries.
pub fn hungarian(cost: &[Vec<f64>]) -> Assignment {
    let n = cost.len();
    let m = cost.first().map_or(0, Vec::len);
    assert!(
        cost.iter().all(|r| r.len() == m),
        "cost matrix rows have unequal lengths"
    );
    assert!(
        cost.iter().flatten().all(|c| c.is_finite()),
        "cost matrix has non-finite entries"
    );
    if n == 0 || m == 0 {
        return Assignment {
            pairs: Vec::new(),
            cost: 0.0,
        };
    }

    let k = n.max(m);
    let mut square = vec![0.0f64; k * k];
    for (i, row) in cost.iter().enumerate() {
        square[i * k..i * k + m].copy_from_slice(row);
    }
    let (row_to_col, u, v) = solve_square(&square, k);
    let row_to_col = lexmin_optimal(&square, k, &u, &v, row_to_col);

    let mut pairs = Vec::with_capacity(n.min(m));
    let mut total = 0.0;
    for (i, &j) in row_to_col.iter().enumerate().take(n) {
        if j < m {
            pairs.push((i, j));
            total += cost[i][j];
        }
    }
    Assignment { pairs, cost: total }
}

/// O(k^3) shortest-augmenting-path Hungarian method with row/column potentials.
/// Returns the row→column assignment and the dual potentials `(u, v)` with
/// `c[i][j] - u[i] - v[j] >= 0`, tight on assigned cells.
fn solve_square(c: &[f64], k: usize) -> (Vec<usize>, Vec<f64>, Vec<f64>) {
    const NONE: usize = usize::MAX;
    // 1-based bookkeeping; index 0 is the virtual root column.
    let mut u = vec![0.0f64; k + 1];
    let mut v = vec![0.0f64; k + 1];
    let mut col_owner = vec![0usize; k + 1];
    let mut way = vec![0usize; k + 1];

    for i in 1..=k {
        col_owner[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; k + 1];
        let mut used = vec![false; k + 1];
        loop {
            used[j0] = true;
            let i0 = col_owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = NONE;
            for j in 1..=k {
                if used[j] {
                    continue;
                }
                let cur = c[(i0 - 1) * k + (j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=k {
                if used[j] {
                    u[col_owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if col_owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            col_owner[j0] = col_owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut row_to_col = vec![0usize; k];
    for j in 1..=k {
        if col_owner[j] > 0 {
            row_to_col[col_owner[j] - 1] = j - 1;
        }
    }
    (row_to_col, u[1..].to_vec(), v[1..].to_vec())
}

/// Every optimal assignment lives on the cells with zero reduced cost under
/// optimal potentials. Walk rows in order and give each the smallest column
/// that still admits a perfect matching of the remaining tight subgraph.
fn lexmin_optimal(c: &[f64], k: usize, u: &[f64], v: &[f64], mut row_to_col: Vec<usize>) -> Vec<usize> {
    const NONE: usize = usize::MAX;
    let scale = c.iter().fold(1.0f64, |acc, x| acc.max(x.abs()));
    let tol = 1e-12 * scale * (k as f64 + 1.0);
    let mut tight = vec![false; k * k];
    for i in 0..k {
        for j in 0..k {
            tight[i * k + j] = c[i * k + j] - u[i] - v[j] <= tol;
        }
        tight[i * k + row_to_col[i]] = true;
    }
    let mut col_to_row = vec![NONE; k];
    for (i, &j) in row_to_col.iter().enumerate() {
        col_to_row[j] = i;
    }

    fn augment(
        row: usize,
        k: usize,
        tight: &[bool],
        blocked: &mut [bool],
        row_to_col: &mut [usize],
        col_to_row: &mut [usize],
    ) -> bool {
        for j in 0..k {
            if !tight[row * k + j] || blocked[j] {
                continue;
            }
            blocked[j] = true;
            let owner = col_to_row[j];
            if owner == usize::MAX || augment(owner, k, tight, blocked, row_to_col, col_to_row) {
                col_to_row[j] = row;
                row_to_col[row] = j;
                return true;
            }
        }
        false
    }

    let mut fixed_col = vec![false; k];
    for r in 0..k {
        for c_try in 0..k {
            if fixed_col[c_try] || !tight[r * k + c_try] {
                continue;
            }
            if row_to_col[r] == c_try {
                break;
            }
            let (saved_rc, saved_cr) = (row_to_col.clone(), col_to_row.clone());
            let displaced = col_to_row[c_try];
            let freed = row_to_col[r];
            row_to_col[r] = c_try;
            col_to_row[c_try] = r;
            col_to_row[freed] = NONE;
            row_to_col[displaced] = NONE;
            let mut blocked = fixed_col.clone();
            blocked[c_try] = true;
            if augment(displaced, k, &tight, &mut blocked, &mut row_to_col, &mut col_to_row) {
                break;
            }
            row_to_col = saved_rc;
            col_to_row = saved_cr;
        }
        fixed_col[row_to_col[r]] = true;
    }
    row_to_col
}

/// Aligns flattened ground-truth and predicted calls given their similarity matrix.
///
/// Within a bucket, ties between equally good assignments are broken
/// lexicographically with rows in ground-truth order and columns ordered by
/// their similarity profile against the bucket's rows (then by index). The
/// column order depends only on tool names and similarities, so relabeling
/// predicted calls never changes which profiles get matched.
pub fn align(
    gt_calls: &[&ToolCall],
    pred_calls: &[&ToolCall],
    similarities: &SimilarityMatrix,
    cfg: &AlignmentConfig,
) -> Result<MatchSet> {
    cfg.validate()?;
    if similarities.rows() != gt_calls.len() || similarities.cols() != pred_calls.len() {
        return Err(Error::Shape(format!(
            "similarity matrix is {}x{}, expected {}x{}",
            similarities.rows(),
            similarities.cols(),
            gt_calls.len(),
            pred_calls.len()
        )));
    }
    let buckets: Vec<Bucket> = bucket_indices(gt_calls, pred_calls)
        .into_values()
        .filter(|b| !b.gt.is_empty() && !b.pred.is_empty())
        .collect();

    let per_bucket: Vec<Vec<Match>> = buckets
        .par_iter()
        .map(|bucket| align_bucket(bucket, similarities, cfg))
        .collect();

    let mut matches: Vec<Match> = per_bucket.into_iter().flatten().collect();
    matches.sort_by_key(|m| m.gt_index);
    Ok(MatchSet { matches })
}

fn align_bucket(bucket: &Bucket, s: &SimilarityMatrix, cfg: &AlignmentConfig) -> Vec<Match> {
    let rows = &bucket.gt;
    let mut cols = bucket.pred.clone();
    cols.sort_by(|&a, &b| {
        rows.iter()
            .map(|&i| s.get(i, b).total_cmp(&s.get(i, a)))
            .find(|o| *o != Ordering::Equal)
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    let sub: Vec<Vec<f64>> = rows
        .iter()
        .map(|&i| cols.iter().map(|&j| s.get(i, j)).collect())
        .collect();
    let assignment = hungarian(&cost_matrix(&sub, cfg));
    assignment
        .pairs
        .into_iter()
        .filter(|&(r, c)| sub[r][c] >= cfg.tau_weak)
        .map(|(r, c)| Match {
            gt_index: rows[r],
            pred_index: cols[c],
            similarity: sub[r][c],
        })
        .collect()
}
