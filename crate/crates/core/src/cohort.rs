//! Treated/control selection and county covariate aggregation.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::config::StudyConfig;
use crate::data::{mean_over, CountyId, CountyPanel, CovariateVector};
use crate::error::{Error, Result};

/// Why a county is in neither the treated set nor the control pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExclusionReason {
    Treated,
    HighSurfaceProduction,
    HighTotalProduction,
    OutsideRegion,
    BorderExcluded,
}

impl ExclusionReason {
    pub fn as_str(self) -> &'static str {
        match self {
            ExclusionReason::Treated => "treated",
            ExclusionReason::HighSurfaceProduction => "high_surface_production",
            ExclusionReason::HighTotalProduction => "high_total_production",
            ExclusionReason::OutsideRegion => "outside_region",
            ExclusionReason::BorderExcluded => "border_excluded",
        }
    }
}

impl fmt::Display for ExclusionReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Partition of the input counties.
///
/// Treated counties appear in `treated` only; `excluded` never carries
/// [`ExclusionReason::Treated`] for a county listed in `treated`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CohortAssignment {
    pub treated: Vec<CountyId>,
    pub control_pool: Vec<CountyId>,
    pub excluded: BTreeMap<CountyId, ExclusionReason>,
}

impl CohortAssignment {
    pub fn total(&self) -> usize {
        self.treated.len() + self.control_pool.len() + self.excluded.len()
    }

    pub fn is_treated(&self, county: &str) -> bool {
        self.treated.binary_search_by(|c| c.as_str().cmp(county)).is_ok()
    }
}

/// Fractions of adults by education category.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EducationShares {
    pub less_than_high_school: f64,
    pub high_school: f64,
    pub some_college: f64,
    pub college: f64,
}

/// Average years of education: categories weighted 10, 12, 14 and 16 years.
pub fn education_index(shares: &EducationShares) -> Result<f64> {
    let parts = [
        shares.less_than_high_school,
        shares.high_school,
        shares.some_college,
        shares.college,
    ];
    if parts.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::Validation(format!("education shares {parts:?} outside [0,1]")));
    }
    let sum: f64 = parts.iter().sum();
    if (sum - 1.0).abs() > 1e-6 {
        return Err(Error::Validation(format!("education shares sum to {sum}, not 1")));
    }
    Ok(10.0 * parts[0] + 12.0 * parts[1] + 14.0 * parts[2] + 16.0 * parts[3])
}

fn check_unique(panels: &[CountyPanel]) -> Result<()> {
    let mut seen = BTreeSet::new();
    for p in panels {
        if !seen.insert(p.county_id.as_str()) {
            return Err(Error::DuplicateKey(p.county_id.clone()));
        }
    }
    Ok(())
}

/// A county enters the cohort only if it lies in the study states and
/// appears in the disturbed-area data.
fn in_study_region(panel: &CountyPanel) -> bool {
    panel.state.in_region() && !panel.disturbed_frac.is_empty()
}

/// Counties whose post-period mean disturbed fraction exceeds the threshold
/// and exceeds their own baseline mean.
pub fn select_treated(panels: &[CountyPanel], cfg: &StudyConfig) -> Result<BTreeSet<CountyId>> {
    check_unique(panels)?;
    let mut gaps = Vec::new();
    let mut treated = BTreeSet::new();
    for panel in panels.iter().filter(|p| in_study_region(p)) {
        let post = panel.mean_disturbed(cfg.post_period);
        let base = panel.mean_disturbed(cfg.baseline_years);
        match (post, base) {
            (Ok(post), Ok(base)) => {
                if post > cfg.treated_threshold && post > base {
                    treated.insert(panel.county_id.clone());
                }
            }
            (post, base) => {
                let mut years: Vec<i32> = post.err().into_iter().chain(base.err()).flatten().collect();
                years.sort_unstable();
                years.dedup();
                gaps.push(format!("{}: {:?}", panel.county_id, years));
            }
        }
    }
    if !gaps.is_empty() {
        return Err(Error::Data(format!("missing disturbed-area years: {}", gaps.join("; "))));
    }
    Ok(treated)
}

/// Assign every county to treated, control pool or an exclusion reason.
pub fn select_controls(
    panels: &[CountyPanel],
    cfg: &StudyConfig,
    treated: &BTreeSet<CountyId>,
) -> Result<CohortAssignment> {
    check_unique(panels)?;
    let mut out = CohortAssignment::default();
    for panel in panels {
        let id = panel.county_id.clone();
        if treated.contains(&id) {
            out.treated.push(id);
            continue;
        }
        if !in_study_region(panel) {
            out.excluded.insert(id, ExclusionReason::OutsideRegion);
            continue;
        }
        let surface_per_sq_mi: BTreeMap<i32, f64> = panel
            .surface_production
            .iter()
            .map(|(&y, &t)| (y, t / panel.area_sq_mi))
            .collect();
        let surface = mean_over(&surface_per_sq_mi, cfg.post_period).map_err(|years| {
            Error::Data(format!("{id}: missing surface production for {years:?}"))
        })?;
        let mut total = mean_over(&panel.total_production, cfg.post_period).map_err(|years| {
            Error::Data(format!("{id}: missing total production for {years:?}"))
        })?;
        if cfg.total_per_sq_mi {
            total /= panel.area_sq_mi;
        }
        let reason = if surface >= cfg.control_surface_max {
            Some(ExclusionReason::HighSurfaceProduction)
        } else if total >= cfg.control_total_max {
            Some(ExclusionReason::HighTotalProduction)
        } else if cfg.exclude_border_controls && panel.borders_treated {
            Some(ExclusionReason::BorderExcluded)
        } else {
            None
        };
        match reason {
            Some(r) => {
                out.excluded.insert(id, r);
            }
            None => out.control_pool.push(id),
        }
    }
    out.treated.sort();
    out.control_pool.sort();
    Ok(out)
}

/// Census, income and vital-statistics inputs for one county. Any `None`
/// is reported as missing by [`aggregate_covariates`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RawCountyCovariates {
    pub county_id: CountyId,
    pub income_1979: Option<f64>,
    pub income_1989: Option<f64>,
    pub income_1999: Option<f64>,
    pub income_2011: Option<f64>,
    pub poverty_1980: Option<f64>,
    pub poverty_1990: Option<f64>,
    pub poverty_2000: Option<f64>,
    pub poverty_2010: Option<f64>,
    pub percent_white_1990: Option<f64>,
    pub education_1980: Option<EducationShares>,
    pub education_1990: Option<EducationShares>,
    pub education_2000: Option<EducationShares>,
    pub education_2012_2016: Option<EducationShares>,
    /// Births 1989-2003 with the mother recorded as smoking.
    pub smoking_births: Option<f64>,
    /// Births 1989-2003 with known smoking status.
    pub smoking_known_births: Option<f64>,
}

/// Collapse raw inputs to the matching covariates: two-point means for
/// income, poverty and education, pooled 1989-2003 smoking rate.
pub fn aggregate_covariates(raw: &RawCountyCovariates) -> Result<CovariateVector> {
    let id = &raw.county_id;
    let need = |name: &str, v: Option<f64>| {
        v.ok_or_else(|| Error::Data(format!("{id}: missing {name}")))
    };
    let need_edu = |name: &str, v: &Option<EducationShares>| -> Result<f64> {
        let shares = v.ok_or_else(|| Error::Data(format!("{id}: missing {name}")))?;
        education_index(&shares).map_err(|e| Error::Data(format!("{id}: {name}: {e}")))
    };
    let mean2 = |a: f64, b: f64| (a + b) / 2.0;

    let smoking_known = need("smoking_known_births", raw.smoking_known_births)?;
    let smoking = need("smoking_births", raw.smoking_births)?;
    if !(smoking_known > 0.0) || smoking < 0.0 || smoking > smoking_known {
        return Err(Error::Data(format!(
            "{id}: smoking births {smoking} inconsistent with known-status births {smoking_known}"
        )));
    }

    let v = CovariateVector {
        median_income_pre: mean2(need("income_1979", raw.income_1979)?, need("income_1989", raw.income_1989)?),
        median_income_post: mean2(need("income_1999", raw.income_1999)?, need("income_2011", raw.income_2011)?),
        poverty_pre: mean2(need("poverty_1980", raw.poverty_1980)?, need("poverty_1990", raw.poverty_1990)?),
        poverty_post: mean2(need("poverty_2000", raw.poverty_2000)?, need("poverty_2010", raw.poverty_2010)?),
        percent_white: need("percent_white_1990", raw.percent_white_1990)?,
        education_pre: mean2(
            need_edu("education_1980", &raw.education_1980)?,
            need_edu("education_1990", &raw.education_1990)?,
        ),
        education_post: mean2(
            need_edu("education_2000", &raw.education_2000)?,
            need_edu("education_2012_2016", &raw.education_2012_2016)?,
        ),
        maternal_smoking_rate: smoking / smoking_known,
    };
    v.validate().map_err(|e| Error::Data(format!("{id}: {e}")))?;
    Ok(v)
}
