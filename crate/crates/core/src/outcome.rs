//! Binary outcome derivation from birth records.

use std::collections::BTreeMap;

use crate::config::Outcome;
use crate::data::{BirthRecord, Sex};
use crate::error::{Error, Result};

pub const LBW_GRAMS: f64 = 2500.0;
pub const VLBW_GRAMS: f64 = 1500.0;
pub const PRETERM_WEEKS: f64 = 37.0;

/// 10th-percentile birth weight (grams) by completed gestational week and sex.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SgaTable {
    p10: BTreeMap<(u32, Sex), f64>,
}

impl SgaTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, week: u32, sex: Sex, grams: f64) {
        self.p10.insert((week, sex), grams);
    }

    pub fn threshold(&self, week: u32, sex: Sex) -> Option<f64> {
        self.p10.get(&(week, sex)).copied()
    }

    pub fn len(&self) -> usize {
        self.p10.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p10.is_empty()
    }
}

/// Derive the binary outcome for one record.
///
/// `Ok(None)` means a required field is missing; such records are dropped
/// by each analysis. Thresholds are strict: a birth weight of exactly
/// 2500 g is not low birth weight.
pub fn derive_outcome(
    record: &BirthRecord,
    outcome: Outcome,
    sga_table: Option<&SgaTable>,
) -> Result<Option<bool>> {
    Ok(match outcome {
        Outcome::LowBirthWeight => record.birth_weight_g.map(|w| w < LBW_GRAMS),
        Outcome::VeryLowBirthWeight => record.birth_weight_g.map(|w| w < VLBW_GRAMS),
        Outcome::Preterm => record.gestational_age_wk.map(|g| g < PRETERM_WEEKS),
        Outcome::SmallForGestationalAge => {
            let table = sga_table.ok_or_else(|| {
                Error::Config("outcome sga requires a gestational-age percentile table".into())
            })?;
            match (record.birth_weight_g, record.gestational_age_wk, record.infant_sex) {
                (Some(w), Some(g), Some(sex)) => {
                    table.threshold(g.floor() as u32, sex).map(|p10| w < p10)
                }
                _ => None,
            }
        }
    })
}
