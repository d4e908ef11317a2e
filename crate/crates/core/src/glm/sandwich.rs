//! Cluster-robust (Liang–Zeger) sandwich covariance for logistic fits.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::fit::FitResult;

use super::design::DesignMatrix;
use super::irls::symmetrize;

/// Per-cluster score sums s_g = Σ_{i∈g} wᵢ xᵢ (yᵢ − p̂ᵢ), indexed by cluster id.
pub fn cluster_scores(fit: &FitResult, design: &DesignMatrix) -> Vec<Vec<f64>> {
    let p = design.n_cols();
    let n_groups = design.cluster().iter().map(|&c| c as usize + 1).max().unwrap_or(0);
    let mut sums = vec![vec![0.0; p]; n_groups];
    let (y, w) = (design.y(), design.weights());
    for i in 0..design.n_rows() {
        if w[i] <= 0.0 {
            continue;
        }
        let resid = w[i] * (y[i] - fit.fitted[i]);
        let (cols, vals) = design.row(i);
        let s = &mut sums[design.cluster()[i] as usize];
        for (&j, &v) in cols.iter().zip(vals) {
            s[j as usize] += v * resid;
        }
    }
    sums
}

/// B⁻¹ M B⁻¹ · G/(G−1), with B the Fisher information at the fit and
/// M = Σ_g s_g s_gᵀ.
pub fn cluster_robust_covariance(fit: &FitResult, design: &DesignMatrix) -> Result<DMatrix<f64>> {
    if !fit.converged {
        return Err(Error::Validation("cluster-robust covariance needs a converged fit".into()));
    }
    assert_eq!(fit.fitted.len(), design.n_rows(), "fit does not belong to this design");
    let g = design.n_clusters();
    if g < 2 {
        return Err(Error::TooFewClusters(g));
    }
    let p = design.n_cols();
    let mut meat = DMatrix::<f64>::zeros(p, p);
    for s in cluster_scores(fit, design) {
        if s.iter().all(|&v| v == 0.0) {
            continue;
        }
        for a in 0..p {
            if s[a] == 0.0 {
                continue;
            }
            for b in 0..p {
                meat[(a, b)] += s[a] * s[b];
            }
        }
    }
    let bread = &fit.naive_covariance;
    let gf = g as f64;
    Ok(symmetrize(bread * meat * bread * (gf / (gf - 1.0))))
}
