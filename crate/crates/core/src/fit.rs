//! Fitted model results and coefficient summaries.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::glm::{Column, ColumnBlock};

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub columns: Vec<Column>,
    pub coefficients: Vec<f64>,
    /// Inverse Fisher information at the optimum.
    pub naive_covariance: DMatrix<f64>,
    /// Cluster-robust sandwich, once computed.
    pub robust_covariance: Option<DMatrix<f64>>,
    pub n_obs: usize,
    pub n_clusters: usize,
    pub n_dropped_missing: usize,
    pub converged: bool,
    pub iterations: usize,
    pub log_likelihood: f64,
    /// Largest absolute score component at the returned coefficients.
    pub max_score: f64,
    /// Fitted probabilities, one per design row.
    pub fitted: Vec<f64>,
}

/// Estimate, standard errors and Wald inference for one coefficient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSummary {
    pub name: String,
    pub estimate: f64,
    pub naive_se: f64,
    pub robust_se: Option<f64>,
    /// Wald statistic on the robust SE when available, else the naive SE.
    pub statistic: f64,
    pub p_value: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub odds_ratio: f64,
    pub or_ci_low: f64,
    pub or_ci_high: f64,
    /// Degrees of freedom of the reference t distribution; `None` for normal.
    pub df: Option<f64>,
}

impl CoefficientSummary {
    pub fn significant(&self, alpha: f64) -> bool {
        self.p_value < alpha
    }
}

/// Two-sided Wald inference. With `df` the reference distribution is
/// Student t, otherwise standard normal.
pub fn wald(estimate: f64, se: f64, df: Option<f64>, alpha: f64) -> (f64, f64, f64) {
    let stat = estimate / se;
    let (p, crit) = match df {
        Some(df) => {
            let t = StudentsT::new(0.0, 1.0, df).expect("positive df");
            (2.0 * t.sf(stat.abs()), t.inverse_cdf(1.0 - alpha / 2.0))
        }
        None => {
            let n = Normal::standard();
            (2.0 * n.sf(stat.abs()), n.inverse_cdf(1.0 - alpha / 2.0))
        }
    };
    (stat, p.min(1.0), crit)
}

impl FitResult {
    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.columns.iter().map(|c| c.name.as_str())
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    /// Index of the single treatment-block coefficient.
    pub fn treatment_index(&self) -> Option<usize> {
        self.columns.iter().position(|c| c.block == ColumnBlock::Treatment)
    }

    pub fn treatment_estimate(&self) -> Option<f64> {
        self.treatment_index().map(|j| self.coefficients[j])
    }

    pub fn naive_se(&self, j: usize) -> f64 {
        self.naive_covariance[(j, j)].max(0.0).sqrt()
    }

    pub fn robust_se(&self, j: usize) -> Option<f64> {
        self.robust_covariance.as_ref().map(|v| v[(j, j)].max(0.0).sqrt())
    }

    /// Wald summary; cluster-robust inference uses t with G−1 df.
    pub fn summary(&self, j: usize, alpha: f64) -> CoefficientSummary {
        let estimate = self.coefficients[j];
        let naive_se = self.naive_se(j);
        let robust_se = self.robust_se(j);
        let (se, df) = match robust_se {
            Some(se) if self.n_clusters >= 2 => (se, Some((self.n_clusters - 1) as f64)),
            _ => (naive_se, None),
        };
        let (statistic, p_value, crit) = wald(estimate, se, df, alpha);
        let (ci_low, ci_high) = (estimate - crit * se, estimate + crit * se);
        CoefficientSummary {
            name: self.columns[j].name.clone(),
            estimate,
            naive_se,
            robust_se,
            statistic,
            p_value,
            ci_low,
            ci_high,
            odds_ratio: estimate.exp(),
            or_ci_low: ci_low.exp(),
            or_ci_high: ci_high.exp(),
            df,
        }
    }

    pub fn treatment_summary(&self, alpha: f64) -> Option<CoefficientSummary> {
        self.treatment_index().map(|j| self.summary(j, alpha))
    }

    pub fn all_summaries(&self, alpha: f64) -> Vec<CoefficientSummary> {
        (0..self.coefficients.len()).map(|j| self.summary(j, alpha)).collect()
    }
}
