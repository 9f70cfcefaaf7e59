//! Rectangular linear assignment with a post-solve distance gate.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::geometry::Point2;

/// Result of matching tracks (rows) to detections (columns).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    /// `(track, detection)` pairs sorted by track index.
    pub pairs: Vec<(usize, usize)>,
    pub unmatched_tracks: Vec<usize>,
    pub unmatched_detections: Vec<usize>,
    /// Sum of the costs of the returned pairs.
    pub total_cost: f64,
}

impl Assignment {
    pub fn empty(n_tracks: usize, n_dets: usize) -> Self {
        Self {
            pairs: Vec::new(),
            unmatched_tracks: (0..n_tracks).collect(),
            unmatched_detections: (0..n_dets).collect(),
            total_cost: 0.0,
        }
    }
}

/// Euclidean distances between track positions (rows) and detections (columns).
pub fn cost_matrix(tracks: &[Point2], dets: &[Point2]) -> DMatrix<f64> {
    DMatrix::from_fn(tracks.len(), dets.len(), |i, j| tracks[i].dist(&dets[j]))
}

/// Optimal assignment of a square cost matrix (row-major, `n × n`).
/// Returns the column of every row and the dual potentials `(u, v)` with
/// `a[i][j] - u[i] - v[j] >= 0`, tight on the matching.
fn solve_square(a: &[f64], n: usize) -> (Vec<usize>, Vec<f64>, Vec<f64>) {
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = a[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut row_to_col = vec![0; n];
    for j in 1..=n {
        row_to_col[p[j] - 1] = j - 1;
    }
    (row_to_col, u[1..].to_vec(), v[1..].to_vec())
}

/// Among all optimal matchings (perfect matchings on tight edges), moves to
/// the one whose real-row columns are lexicographically smallest, with padding
/// columns ordered last.
struct TieBreak<'a> {
    n: usize,
    tight: &'a [bool],
    row_to_col: Vec<usize>,
    col_to_row: Vec<usize>,
    fixed_row: Vec<bool>,
    fixed_col: Vec<bool>,
}

impl TieBreak<'_> {
    fn is_tight(&self, i: usize, j: usize) -> bool {
        self.tight[i * self.n + j]
    }

    /// Alternating path from `row` to `target` column over free tight edges.
    /// On success the matching along the path is flipped.
    fn augment(&mut self, row: usize, target: usize, seen: &mut [bool]) -> bool {
        for c in 0..self.n {
            if seen[c] || self.fixed_col[c] || !self.is_tight(row, c) {
                continue;
            }
            seen[c] = true;
            let ok = c == target || {
                let next = self.col_to_row[c];
                self.augment(next, target, seen)
            };
            if ok {
                self.row_to_col[row] = c;
                self.col_to_row[c] = row;
                return true;
            }
        }
        false
    }

    /// Tries to rematch row `i` to column `j` while keeping the matching
    /// perfect and optimal.
    fn force(&mut self, i: usize, j: usize) -> bool {
        let old_col = self.row_to_col[i];
        if old_col == j {
            self.fixed_row[i] = true;
            self.fixed_col[j] = true;
            return true;
        }
        let displaced = self.col_to_row[j];
        let snapshot = (self.row_to_col.clone(), self.col_to_row.clone());

        self.fixed_row[i] = true;
        self.fixed_col[j] = true;
        self.row_to_col[i] = j;
        self.col_to_row[j] = i;
        let mut seen = vec![false; self.n];
        if self.augment(displaced, old_col, &mut seen) {
            true
        } else {
            (self.row_to_col, self.col_to_row) = snapshot;
            self.fixed_row[i] = false;
            self.fixed_col[j] = false;
            false
        }
    }
}

/// Minimum-cost assignment of tracks (rows) to detections (columns).
///
/// The rectangular problem is padded to square with the sentinel
/// `d_mtc + 1`, and entries above `d_mtc` are clipped to the same value, so a
/// pair beyond the gate costs exactly as much as leaving both sides
/// unmatched. Such pairs are removed after the solve. A distant pair can
/// therefore never displace a pair inside the gate. Among equal-cost optima,
/// the lexicographically smallest pair set is returned. Non-finite entries
/// are never paired.
pub fn solve_assignment(c: &DMatrix<f64>, d_mtc: f64) -> Assignment {
    let (rows, cols) = c.shape();
    if rows == 0 || cols == 0 {
        return Assignment::empty(rows, cols);
    }
    let n = rows.max(cols);
    let finite_max = c
        .iter()
        .filter(|v| v.is_finite())
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let sentinel = if d_mtc.is_finite() {
        d_mtc.max(0.0) + 1.0
    } else {
        finite_max + 1.0
    };
    // Unpairable entries must lose against any matching that avoids them.
    let forbidden = sentinel + 2.0 * (n as f64) * (finite_max + sentinel) + 1.0;

    let mut a = vec![sentinel; n * n];
    for i in 0..rows {
        for j in 0..cols {
            let v = c[(i, j)];
            a[i * n + j] = if !v.is_finite() {
                forbidden
            } else if v > d_mtc {
                sentinel
            } else {
                v
            };
        }
    }

    let (row_to_col, u, v) = solve_square(&a, n);
    let scale = a.iter().fold(1.0f64, |m, x| m.max(x.abs()));
    let tol = 1e-11 * scale * n as f64;
    let tight: Vec<bool> = (0..n * n)
        .map(|k| a[k] - u[k / n] - v[k % n] <= tol)
        .collect();
    let mut col_to_row = vec![0; n];
    for (i, &j) in row_to_col.iter().enumerate() {
        col_to_row[j] = i;
    }
    let mut tb = TieBreak {
        n,
        tight: &tight,
        row_to_col,
        col_to_row,
        fixed_row: vec![false; n],
        fixed_col: vec![false; n],
    };
    for i in 0..rows {
        let mut placed = false;
        for j in 0..cols {
            if !tb.fixed_col[j] && tb.is_tight(i, j) && tb.force(i, j) {
                placed = true;
                break;
            }
        }
        if !placed {
            let j = tb.row_to_col[i];
            tb.fixed_row[i] = true;
            tb.fixed_col[j] = true;
        }
    }

    let mut out = Assignment {
        pairs: Vec::new(),
        unmatched_tracks: Vec::new(),
        unmatched_detections: Vec::new(),
        total_cost: 0.0,
    };
    let mut det_used = vec![false; cols];
    for i in 0..rows {
        let j = tb.row_to_col[i];
        let cost = if j < cols { c[(i, j)] } else { f64::NAN };
        if j < cols && cost.is_finite() && cost <= d_mtc {
            out.pairs.push((i, j));
            out.total_cost += cost;
            det_used[j] = true;
        } else {
            out.unmatched_tracks.push(i);
        }
    }
    out.unmatched_detections = (0..cols).filter(|&j| !det_used[j]).collect();
    out
}
