//! Standardized mean differences for covariate balance tables.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn mean_var(values: impl Iterator<Item = f64> + Clone) -> (f64, f64, usize) {
    let n = values.clone().count();
    let mean = values.clone().sum::<f64>() / n as f64;
    let var = if n > 1 {
        values.map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0)
    } else {
        0.0
    };
    (mean, var, n)
}

/// Per-covariate SMD denominators, fixed from the treated units and the full
/// pre-match control pool so matched and unmatched SMDs share one scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmdScale {
    pub names: Vec<String>,
    pub sd: Vec<f64>,
}

impl SmdScale {
    /// s_k = sqrt((var_T,k + var_pool,k) / 2) with n−1 variances.
    pub fn from_pools(names: &[&str], treated: &[Vec<f64>], pool: &[Vec<f64>]) -> Result<Self> {
        if treated.len() < 2 || pool.len() < 2 {
            return Err(Error::Validation(format!(
                "SMD needs at least 2 units per side (treated {}, pool {})",
                treated.len(),
                pool.len()
            )));
        }
        let sd = (0..names.len())
            .map(|k| {
                let (_, vt, _) = mean_var(treated.iter().map(|r| r[k]));
                let (_, vc, _) = mean_var(pool.iter().map(|r| r[k]));
                ((vt + vc) / 2.0).sqrt()
            })
            .collect();
        Ok(Self { names: names.iter().map(|s| s.to_string()).collect(), sd })
    }
}

/// (mean_T − mean_C) / s_k for every covariate. Positive when the treated
/// mean is higher.
pub fn standardized_differences(treated: &[Vec<f64>], comparison: &[Vec<f64>], scale: &SmdScale) -> Result<Vec<f64>> {
    if treated.is_empty() || comparison.is_empty() {
        return Err(Error::Validation("SMD needs non-empty groups".into()));
    }
    scale
        .sd
        .iter()
        .enumerate()
        .map(|(k, &s)| {
            let (mt, _, _) = mean_var(treated.iter().map(|r| r[k]));
            let (mc, _, _) = mean_var(comparison.iter().map(|r| r[k]));
            if s > 0.0 {
                Ok((mt - mc) / s)
            } else if mt == mc {
                Ok(0.0)
            } else {
                Err(Error::DegenerateCovariate(scale.names[k].clone()))
            }
        })
        .collect()
}

/// Group means and SMDs for one covariate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceRow {
    pub covariate: String,
    pub treated_mean: f64,
    pub matched_mean: f64,
    pub pool_mean: f64,
    pub smd_matched: f64,
    pub smd_all: f64,
}

pub fn balance_table(
    treated: &[Vec<f64>],
    matched: &[Vec<f64>],
    pool: &[Vec<f64>],
    scale: &SmdScale,
) -> Result<Vec<BalanceRow>> {
    let smd_matched = standardized_differences(treated, matched, scale)?;
    let smd_all = standardized_differences(treated, pool, scale)?;
    let mean = |rows: &[Vec<f64>], k: usize| rows.iter().map(|r| r[k]).sum::<f64>() / rows.len() as f64;
    Ok((0..scale.names.len())
        .map(|k| BalanceRow {
            covariate: scale.names[k].clone(),
            treated_mean: mean(treated, k),
            matched_mean: mean(matched, k),
            pool_mean: mean(pool, k),
            smd_matched: smd_matched[k],
            smd_all: smd_all[k],
        })
        .collect())
}
