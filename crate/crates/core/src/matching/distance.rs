//! Covariate distances between treated and control units.

use log::warn;
use nalgebra::{DMatrix, DVector};

use crate::config::DistanceKind;
use crate::error::{Error, Result};

/// |T|×|C| distance matrix. Forbidden pairs hold `f64::INFINITY`.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    pub values: DMatrix<f64>,
    /// Set when the covariance was singular and per-covariate variances were used.
    pub diagonal_fallback: bool,
}

impl DistanceMatrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        let m = rows.first().map_or(0, |r| r.len());
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        Self { values: DMatrix::from_row_slice(n, m, &flat), diagonal_fallback: false }
    }

    pub fn n_treated(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_controls(&self) -> usize {
        self.values.ncols()
    }

    /// Forbid every pair farther apart than `caliper`.
    pub fn apply_caliper(&mut self, caliper: f64) {
        for v in self.values.iter_mut() {
            if *v > caliper {
                *v = f64::INFINITY;
            }
        }
    }
}

/// Average ranks (1-based); tied values share the mean of their positions.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

fn sample_covariance(data: &DMatrix<f64>) -> DMatrix<f64> {
    let n = data.nrows() as f64;
    let means = data.row_mean();
    let mut centered = data.clone();
    for mut row in centered.row_iter_mut() {
        row -= &means;
    }
    centered.transpose() * &centered / (n - 1.0)
}

/// Pairwise Mahalanobis distances between every treated and control unit.
///
/// With [`DistanceKind::RankMahalanobis`] each covariate is replaced by its
/// average rank over the combined pool before the covariance is estimated.
/// A singular covariance falls back to the diagonal of per-covariate
/// variances.
pub fn distance_matrix(treated: &[Vec<f64>], controls: &[Vec<f64>], kind: DistanceKind) -> Result<DistanceMatrix> {
    let k = treated.first().or(controls.first()).map_or(0, |r| r.len());
    if treated.iter().chain(controls).any(|r| r.len() != k) {
        return Err(Error::Validation("covariate vectors differ in length".into()));
    }
    if treated.iter().chain(controls).flatten().any(|v| !v.is_finite()) {
        return Err(Error::Validation("covariates must be finite".into()));
    }
    let n_t = treated.len();
    let n = n_t + controls.len();
    if n < 2 {
        return Err(Error::Validation("need at least two units to estimate a covariance".into()));
    }
    let pooled: Vec<f64> = treated.iter().chain(controls).flatten().copied().collect();
    let mut data = DMatrix::from_row_slice(n, k, &pooled);
    if kind == DistanceKind::RankMahalanobis {
        for j in 0..k {
            let col: Vec<f64> = data.column(j).iter().copied().collect();
            data.set_column(j, &DVector::from_vec(average_ranks(&col)));
        }
    }

    let cov = sample_covariance(&data);
    let eig = cov.clone().symmetric_eigen();
    let max_eig = eig.eigenvalues.max();
    let singular = k == 0 || eig.eigenvalues.min() <= 1e-10 * max_eig.max(f64::MIN_POSITIVE);
    let precision = if singular {
        warn!("singular covariate covariance; using per-covariate variances");
        DMatrix::from_fn(k, k, |a, b| {
            if a == b && cov[(a, a)] > 0.0 {
                1.0 / cov[(a, a)]
            } else {
                0.0
            }
        })
    } else {
        cov.try_inverse().ok_or_else(|| Error::Validation("covariance inversion failed".into()))?
    };

    let values = DMatrix::from_fn(n_t, n - n_t, |i, j| {
        let diff = (data.row(i) - data.row(n_t + j)).transpose();
        let q = (diff.transpose() * &precision * &diff)[(0, 0)];
        q.max(0.0).sqrt()
    });
    Ok(DistanceMatrix { values, diagonal_fallback: singular })
}
