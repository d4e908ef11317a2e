//! Optimal pair matching of treated counties to controls, with balance
//! diagnostics.

mod assignment;
mod balance;
mod distance;

use std::collections::BTreeMap;

pub use assignment::{optimal_pair_match, PairAssignment};
pub use balance::{balance_table, standardized_differences, BalanceRow, SmdScale};
pub use distance::{average_ranks, distance_matrix, DistanceMatrix};

use crate::config::StudyConfig;
use crate::data::{CountyId, CovariateVector};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    /// (treated, control), in treated-id order.
    pub pairs: Vec<(CountyId, CountyId)>,
    pub total_distance: f64,
    /// Treated vs full control pool.
    pub smd_before: Vec<f64>,
    /// Treated vs matched controls, on the same scale as `smd_before`.
    pub smd_after: Vec<f64>,
    pub balance: Vec<BalanceRow>,
    pub diagonal_fallback: bool,
}

impl MatchResult {
    pub fn matched_controls(&self) -> impl Iterator<Item = &CountyId> {
        self.pairs.iter().map(|(_, c)| c)
    }
}

fn lookup(covariates: &BTreeMap<CountyId, CovariateVector>, ids: &[CountyId]) -> Result<Vec<Vec<f64>>> {
    ids.iter()
        .map(|id| {
            covariates
                .get(id)
                .map(|v| v.to_array().to_vec())
                .ok_or_else(|| Error::Data(format!("no covariates for {id}")))
        })
        .collect()
}

/// Pair every treated county with a distinct control minimizing total
/// covariate distance, and report balance before and after.
pub fn match_counties(
    covariates: &BTreeMap<CountyId, CovariateVector>,
    treated: &[CountyId],
    control_pool: &[CountyId],
    cfg: &StudyConfig,
) -> Result<MatchResult> {
    let t = lookup(covariates, treated)?;
    let c = lookup(covariates, control_pool)?;
    let mut dist = distance_matrix(&t, &c, cfg.distance)?;
    if let Some(caliper) = cfg.caliper {
        dist.apply_caliper(caliper);
    }
    let assignment = optimal_pair_match(&dist)?;
    let matched: Vec<Vec<f64>> = assignment.control_of.iter().map(|&j| c[j].clone()).collect();
    let scale = SmdScale::from_pools(&CovariateVector::NAMES, &t, &c)?;
    let balance = balance_table(&t, &matched, &c, &scale)?;
    Ok(MatchResult {
        pairs: treated
            .iter()
            .zip(&assignment.control_of)
            .map(|(tid, &j)| (tid.clone(), control_pool[j].clone()))
            .collect(),
        total_distance: assignment.total_distance,
        smd_before: balance.iter().map(|r| r.smd_all).collect(),
        smd_after: balance.iter().map(|r| r.smd_matched).collect(),
        balance,
        diagonal_fallback: dist.diagonal_fallback,
    })
}
