//! Minimum-cost injective assignment of treated rows to control columns.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

use super::distance::DistanceMatrix;

/// Optimal pairing by row index: `control_of[i]` is the column matched to row i.
#[derive(Debug, Clone, PartialEq)]
pub struct PairAssignment {
    pub control_of: Vec<usize>,
    pub total_distance: f64,
}

/// Shortest-augmenting-path Hungarian algorithm for an n×m cost matrix,
/// n ≤ m. Returns the column assigned to each row. O(n²m).
fn hungarian(cost: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> Vec<usize> {
    let n = rows.len();
    let m = cols.len();
    debug_assert!(n <= m);
    let a = |i: usize, j: usize| cost[(rows[i - 1], cols[j - 1])];
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if !used[j] {
                    let cur = a(i0, j) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=m {
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
    let mut assigned = vec![usize::MAX; n];
    for j in 1..=m {
        if p[j] != 0 {
            assigned[p[j] - 1] = cols[j - 1];
        }
    }
    assigned
}

fn assignment_cost(cost: &DMatrix<f64>, rows: &[usize], assigned: &[usize]) -> f64 {
    rows.iter().zip(assigned).map(|(&i, &j)| cost[(i, j)]).sum()
}

/// Minimum total distance over injective treated→control assignments.
///
/// Among optimal assignments the lexicographically smallest control
/// sequence (by treated index, then control index) is returned.
/// Infinite entries are forbidden pairs; if every completion uses one the
/// match is infeasible.
pub fn optimal_pair_match(distance: &DistanceMatrix) -> Result<PairAssignment> {
    let d = &distance.values;
    let (n, m) = (d.nrows(), d.ncols());
    if m < n {
        return Err(Error::Infeasible(format!("{n} treated units but only {m} controls")));
    }
    if d.iter().any(|v| v.is_nan() || *v < 0.0) {
        return Err(Error::Validation("distances must be non-negative".into()));
    }
    if n == 0 {
        return Ok(PairAssignment { control_of: Vec::new(), total_distance: 0.0 });
    }

    // Forbidden pairs get a cost larger than any all-finite assignment.
    let max_finite = d.iter().filter(|v| v.is_finite()).fold(0.0f64, |a, &b| a.max(b));
    let forbidden = (max_finite + 1.0) * (n as f64 + 1.0) * 2.0;
    let cost = d.map(|v| if v.is_finite() { v } else { forbidden });

    let all_rows: Vec<usize> = (0..n).collect();
    let all_cols: Vec<usize> = (0..m).collect();
    let first = hungarian(&cost, &all_rows, &all_cols);
    let optimum = assignment_cost(&cost, &all_rows, &first);
    if first.iter().enumerate().any(|(i, &j)| !d[(i, j)].is_finite()) {
        return Err(Error::Infeasible("caliper leaves no complete pair match".into()));
    }

    // Lexicographic refinement: fix rows in order to the smallest column
    // that still admits an optimal completion.
    let tol = 1e-9 * optimum.abs().max(1.0);
    let mut control_of = Vec::with_capacity(n);
    let mut fixed_cost = 0.0;
    let mut free_cols = all_cols;
    for i in 0..n {
        let rest: Vec<usize> = (i + 1..n).collect();
        let mut chosen = None;
        for (pos, &j) in free_cols.iter().enumerate() {
            if !d[(i, j)].is_finite() {
                continue;
            }
            let remaining: Vec<usize> = free_cols.iter().copied().filter(|&c| c != j).collect();
            let tail = if rest.is_empty() {
                0.0
            } else {
                assignment_cost(&cost, &rest, &hungarian(&cost, &rest, &remaining))
            };
            if fixed_cost + cost[(i, j)] + tail <= optimum + tol {
                chosen = Some((pos, j));
                break;
            }
        }
        let (pos, j) = chosen.expect("an optimal completion always exists");
        fixed_cost += cost[(i, j)];
        control_of.push(j);
        free_cols.remove(pos);
    }
    let total_distance = control_of.iter().enumerate().map(|(i, &j)| d[(i, j)]).sum();
    Ok(PairAssignment { control_of, total_distance })
}
