//! Dose construction and the difference-in-differences logistic models.
//!
//! All models share county and year fixed effects plus individual
//! covariates; they differ only in the treatment column:
//!
//! * primary: dose `D_it`,
//! * secondary: indicator `T_it` of a treated county in the post period,
//! * treated-only: dose model restricted to treated counties,
//! * test of controls: pre-period only, pseudo-treatment for treated
//!   counties in a late pre-period window.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::config::StudyConfig;
use crate::data::{AgeBand, BirthRecord, CountyId, CountyPanel, Plurality, Race, Sex, YearRange};
use crate::error::{Error, Result};
use crate::fit::FitResult;
use crate::glm::{check_identifiable, cluster_robust_covariance, fit_logistic, Column, ColumnBlock, DesignMatrix};
use crate::outcome::{derive_outcome, SgaTable};

#[derive(Debug, Clone, PartialEq, Default)]
struct CountyDoses {
    treated: bool,
    by_year: BTreeMap<i32, f64>,
}

/// Dose `D_it` and treatment flag `T_it` for every analysed county.
///
/// Doses are zero in the pre-period and for controls; `T_it` is one only for
/// treated counties in the post period.
#[derive(Debug, Clone, PartialEq)]
pub struct DoseAssignment {
    pub pre_period: YearRange,
    pub post_period: YearRange,
    counties: BTreeMap<CountyId, CountyDoses>,
}

impl DoseAssignment {
    pub fn counties(&self) -> impl Iterator<Item = &CountyId> {
        self.counties.keys()
    }

    pub fn contains(&self, county: &str) -> bool {
        self.counties.contains_key(county)
    }

    pub fn is_treated(&self, county: &str) -> bool {
        self.counties.get(county).is_some_and(|c| c.treated)
    }

    pub fn treated_counties(&self) -> impl Iterator<Item = &CountyId> {
        self.counties.iter().filter(|(_, c)| c.treated).map(|(id, _)| id)
    }

    pub fn dose(&self, county: &str, year: i32) -> f64 {
        self.counties
            .get(county)
            .and_then(|c| c.by_year.get(&year))
            .copied()
            .unwrap_or(0.0)
    }

    pub fn treated_flag(&self, county: &str, year: i32) -> bool {
        self.is_treated(county) && self.post_period.contains(year)
    }

    pub fn max_dose(&self) -> f64 {
        self.counties
            .values()
            .flat_map(|c| c.by_year.values())
            .fold(0.0, |m, &d| m.max(d))
    }

    /// Every dose multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for c in out.counties.values_mut() {
            for d in c.by_year.values_mut() {
                *d *= factor;
            }
        }
        out
    }

    /// Same treated/control structure with the given dose for every treated
    /// post-period year.
    pub fn with_constant_dose(&self, dose: f64) -> Self {
        let mut out = self.clone();
        for c in out.counties.values_mut().filter(|c| c.treated) {
            for y in self.post_period.years() {
                c.by_year.insert(y, dose);
            }
        }
        out
    }

    /// (county, year, dose) for every post-period treated county-year.
    pub fn post_doses(&self) -> Vec<(CountyId, i32, f64)> {
        self.counties
            .iter()
            .filter(|(_, c)| c.treated)
            .flat_map(|(id, c)| c.by_year.iter().map(move |(&y, &d)| (id.clone(), y, d)))
            .collect()
    }
}

/// `max(disturbed[year] − mean(disturbed over baseline years), 0)` for a
/// treated county in the post period, zero otherwise.
pub fn dose_for_year(panel: &CountyPanel, treated: bool, year: i32, cfg: &StudyConfig) -> Result<f64> {
    if !treated || !cfg.post_period.contains(year) {
        return Ok(0.0);
    }
    let baseline = panel.mean_disturbed(cfg.baseline_years).map_err(|years| {
        Error::Data(format!("{}: missing baseline disturbed fraction for {years:?}", panel.county_id))
    })?;
    let current = panel.disturbed_frac.get(&year).copied().ok_or_else(|| {
        Error::Data(format!("{}: missing disturbed fraction for {year}", panel.county_id))
    })?;
    Ok((current - baseline).max(0.0))
}

/// Doses for the treated counties and their controls.
pub fn compute_doses(
    panels: &[CountyPanel],
    treated: &[CountyId],
    controls: &[CountyId],
    cfg: &StudyConfig,
) -> Result<DoseAssignment> {
    let by_id: BTreeMap<&str, &CountyPanel> = panels.iter().map(|p| (p.county_id.as_str(), p)).collect();
    let mut counties = BTreeMap::new();
    for id in controls {
        if treated.contains(id) {
            return Err(Error::Validation(format!("{id} is both treated and control")));
        }
        counties.insert(id.clone(), CountyDoses::default());
    }
    for id in treated {
        let panel = by_id
            .get(id.as_str())
            .ok_or_else(|| Error::Data(format!("no exposure panel for treated county {id}")))?;
        let by_year = cfg
            .post_period
            .years()
            .map(|y| dose_for_year(panel, true, y, cfg).map(|d| (y, d)))
            .collect::<Result<_>>()?;
        counties.insert(id.clone(), CountyDoses { treated: true, by_year });
    }
    Ok(DoseAssignment { pre_period: cfg.pre_period, post_period: cfg.post_period, counties })
}

/// The treatment column of a model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TreatmentTerm {
    /// Continuous dose `D_it`.
    Dose,
    /// Indicator `T_it`.
    Binary,
    /// Treated county in one of these (pre-period) years.
    Pseudo(YearRange),
}

impl TreatmentTerm {
    fn column_name(self) -> &'static str {
        match self {
            TreatmentTerm::Dose => "dose",
            TreatmentTerm::Binary => "treated.post",
            TreatmentTerm::Pseudo(_) => "treatment.temp",
        }
    }
}

/// Which births enter a model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleSpec {
    pub treatment: TreatmentTerm,
    pub include_pre: bool,
    pub include_post: bool,
    pub treated_only: bool,
}

impl SampleSpec {
    pub fn primary() -> Self {
        Self { treatment: TreatmentTerm::Dose, include_pre: true, include_post: true, treated_only: false }
    }

    pub fn binary() -> Self {
        Self { treatment: TreatmentTerm::Binary, ..Self::primary() }
    }

    pub fn treated_only() -> Self {
        Self { treated_only: true, ..Self::primary() }
    }

    pub fn test_of_controls(window: YearRange) -> Self {
        Self { treatment: TreatmentTerm::Pseudo(window), include_pre: true, include_post: false, treated_only: false }
    }
}

/// Everything the models need besides the configuration.
#[derive(Debug, Clone, Copy)]
pub struct DidInputs<'a> {
    pub births: &'a [BirthRecord],
    pub doses: &'a DoseAssignment,
    pub cfg: &'a StudyConfig,
    pub sga_table: Option<&'a SgaTable>,
}

/// A design ready for fitting, with per-row exposure kept for the latent
/// exposure and sensitivity models.
#[derive(Debug, Clone)]
pub struct AnalysisData {
    pub design: DesignMatrix,
    pub treatment_col: usize,
    pub dose: Vec<f64>,
    pub treated_post: Vec<bool>,
    pub n_dropped_missing: usize,
    /// Missing-data counts by variable among otherwise eligible births.
    pub missing_by_variable: BTreeMap<String, usize>,
}

const RACE_LEVELS: [Race; 2] = [Race::White, Race::Other];
const AGE_LEVELS: [AgeBand; 5] = [AgeBand::Under20, AgeBand::A25To29, AgeBand::A30To34, AgeBand::A35To39, AgeBand::A40Plus];

/// Build the fixed-effects design for `spec`. Births with a missing
/// outcome or covariate are dropped and counted.
///
/// Reference levels: first county and first year in sort order, black
/// race, age 20-24, female, multiple birth.
pub fn prepare(inputs: &DidInputs<'_>, spec: &SampleSpec) -> Result<AnalysisData> {
    let cfg = inputs.cfg;
    let pre = cfg.effective_pre_period();
    let doses = inputs.doses;
    let keep_year = |y: i32| (spec.include_pre && pre.contains(y)) || (spec.include_post && cfg.post_period.contains(y));
    let keep_county = |c: &str| doses.contains(c) && (!spec.treated_only || doses.is_treated(c));

    let mut missing: BTreeMap<String, usize> = BTreeMap::new();
    let mut n_dropped = 0;
    let mut rows: Vec<(&BirthRecord, bool)> = Vec::new();
    for b in inputs.births {
        if !keep_year(b.year) || !keep_county(&b.county_id) {
            continue;
        }
        let y = derive_outcome(b, cfg.outcome, inputs.sga_table)?;
        let mut tally = |name: &str, absent: bool| {
            if absent {
                *missing.entry(name.to_string()).or_default() += 1;
            }
        };
        tally(cfg.outcome.as_str(), y.is_none());
        tally("mother_race", b.mother_race.is_none());
        tally("mother_age_band", b.mother_age_band.is_none());
        tally("infant_sex", b.infant_sex.is_none());
        tally("plurality", b.plurality.is_none());
        match y {
            Some(y) if b.covariates_complete() => rows.push((b, y)),
            _ => n_dropped += 1,
        }
    }
    if rows.is_empty() {
        return Err(Error::Data("no complete births in the analysis sample".into()));
    }

    let counties: Vec<&str> = rows.iter().map(|(b, _)| b.county_id.as_str()).collect::<BTreeSet<_>>().into_iter().collect();
    let years: Vec<i32> = rows.iter().map(|(b, _)| b.year).collect::<BTreeSet<_>>().into_iter().collect();

    let mut columns = vec![Column::new("intercept", ColumnBlock::Intercept)];
    let county_base = columns.len();
    columns.extend(counties[1..].iter().map(|c| Column::new(format!("county={c}"), ColumnBlock::County)));
    let year_base = columns.len();
    columns.extend(years[1..].iter().map(|y| Column::new(format!("year={y}"), ColumnBlock::Year)));
    let race_base = columns.len();
    columns.extend(RACE_LEVELS.iter().map(|r| Column::new(format!("mother_race={r}"), ColumnBlock::Individual)));
    let age_base = columns.len();
    columns.extend(AGE_LEVELS.iter().map(|a| Column::new(format!("mother_age={a}"), ColumnBlock::Individual)));
    let sex_col = columns.len();
    columns.push(Column::new("infant_sex=male", ColumnBlock::Individual));
    let plural_col = columns.len();
    columns.push(Column::new("plurality=single", ColumnBlock::Individual));
    let treatment_col = columns.len();
    columns.push(Column::new(spec.treatment.column_name(), ColumnBlock::Treatment));

    let mut design = DesignMatrix::new(columns);
    design.set_cluster_names(counties.iter().map(|c| c.to_string()).collect());
    let mut dose = Vec::with_capacity(rows.len());
    let mut treated_post = Vec::with_capacity(rows.len());
    let mut entries: Vec<(usize, f64)> = Vec::with_capacity(10);
    for (b, y) in rows {
        entries.clear();
        entries.push((0, 1.0));
        let ci = counties.binary_search(&b.county_id.as_str()).expect("county indexed");
        if ci > 0 {
            entries.push((county_base + ci - 1, 1.0));
        }
        let yi = years.binary_search(&b.year).expect("year indexed");
        if yi > 0 {
            entries.push((year_base + yi - 1, 1.0));
        }
        if let Some(k) = RACE_LEVELS.iter().position(|r| Some(*r) == b.mother_race) {
            entries.push((race_base + k, 1.0));
        }
        if let Some(k) = AGE_LEVELS.iter().position(|a| Some(*a) == b.mother_age_band) {
            entries.push((age_base + k, 1.0));
        }
        if b.infant_sex == Some(Sex::Male) {
            entries.push((sex_col, 1.0));
        }
        if b.plurality == Some(Plurality::Single) {
            entries.push((plural_col, 1.0));
        }
        let d = doses.dose(&b.county_id, b.year);
        let tp = doses.treated_flag(&b.county_id, b.year);
        let x = match spec.treatment {
            TreatmentTerm::Dose => d,
            TreatmentTerm::Binary => f64::from(u8::from(tp)),
            TreatmentTerm::Pseudo(w) => f64::from(u8::from(doses.is_treated(&b.county_id) && w.contains(b.year))),
        };
        if x != 0.0 {
            entries.push((treatment_col, x));
        }
        design.push_row(&entries, f64::from(u8::from(y)), 1.0, 0.0, ci as u32);
        dose.push(d);
        treated_post.push(tp);
    }
    Ok(AnalysisData { design, treatment_col, dose, treated_post, n_dropped_missing: n_dropped, missing_by_variable: missing })
}

/// Fit a prepared design and attach the county-clustered covariance.
pub fn fit_prepared(data: &AnalysisData) -> Result<FitResult> {
    check_identifiable(&data.design, data.treatment_col)?;
    let mut fit = fit_logistic(&data.design)?;
    fit.robust_covariance = Some(cluster_robust_covariance(&fit, &data.design)?);
    fit.n_dropped_missing = data.n_dropped_missing;
    Ok(fit)
}

pub fn fit_model(inputs: &DidInputs<'_>, spec: &SampleSpec) -> Result<FitResult> {
    fit_prepared(&prepare(inputs, spec)?)
}

/// logit Pr(Y=1) = α_i + λ_t + γᵀX + χ·D_it.
pub fn fit_primary_dose_model(inputs: &DidInputs<'_>) -> Result<FitResult> {
    fit_model(inputs, &SampleSpec::primary())
}

/// logit Pr(Y=1) = α_i + λ_t + γᵀX + β·T_it.
pub fn fit_secondary_binary_model(inputs: &DidInputs<'_>) -> Result<FitResult> {
    fit_model(inputs, &SampleSpec::binary())
}

/// The dose model using treated counties only.
pub fn fit_treated_only_model(inputs: &DidInputs<'_>) -> Result<FitResult> {
    fit_model(inputs, &SampleSpec::treated_only())
}

/// Pre-period fit with pseudo-treatment for treated counties in
/// `cfg.pseudo_treated_years`. A non-significant coefficient is consistent
/// with parallel pre-trends.
pub fn test_of_controls(inputs: &DidInputs<'_>) -> Result<FitResult> {
    let window = inputs.cfg.pseudo_treated_years;
    let pre = inputs.cfg.effective_pre_period();
    if !(pre.contains(window.start) && pre.contains(window.end)) || window == pre {
        return Err(Error::Config(format!(
            "pseudo-treatment window {window} must be a strict sub-range of the pre-period {pre}"
        )));
    }
    fit_model(inputs, &SampleSpec::test_of_controls(window))
}

/// Outcome rates per county and year over complete records.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RateSeries {
    /// county → year → (events, births)
    pub counts: BTreeMap<CountyId, BTreeMap<i32, (u64, u64)>>,
}

impl RateSeries {
    pub fn from_births(births: &[BirthRecord], cfg: &StudyConfig, sga: Option<&SgaTable>) -> Result<Self> {
        let mut counts: BTreeMap<CountyId, BTreeMap<i32, (u64, u64)>> = BTreeMap::new();
        for b in births {
            if let Some(y) = derive_outcome(b, cfg.outcome, sga)? {
                let e = counts.entry(b.county_id.clone()).or_default().entry(b.year).or_default();
                e.0 += u64::from(y);
                e.1 += 1;
            }
        }
        Ok(Self { counts })
    }

    /// Pooled rate for a county over `range`.
    pub fn rate(&self, county: &str, range: YearRange) -> Option<f64> {
        let (e, n) = self
            .counts
            .get(county)?
            .range(range.start..=range.end)
            .fold((0u64, 0u64), |(e, n), (_, &(a, b))| (e + a, n + b));
        (n > 0).then(|| e as f64 / n as f64)
    }

    /// Pooled rate per year over a group of counties.
    pub fn group_series(&self, counties: &[CountyId], range: YearRange) -> Vec<(i32, f64)> {
        range
            .years()
            .filter_map(|y| {
                let (e, n) = counties
                    .iter()
                    .filter_map(|c| self.counts.get(c).and_then(|m| m.get(&y)))
                    .fold((0u64, 0u64), |(e, n), &(a, b)| (e + a, n + b));
                (n > 0).then(|| (y, e as f64 / n as f64))
            })
            .collect()
    }
}

/// Pre-period outcome rates of each treated county and its matched control.
pub fn pretrend_rates(
    rates: &RateSeries,
    pairs: &[(CountyId, CountyId)],
    range: YearRange,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut treated = Vec::with_capacity(pairs.len());
    let mut control = Vec::with_capacity(pairs.len());
    for (t, c) in pairs {
        let missing = |id: &str| Error::Data(format!("no pre-period births with known outcome for {id}"));
        treated.push(rates.rate(t, range).ok_or_else(|| missing(t))?);
        control.push(rates.rate(c, range).ok_or_else(|| missing(c))?);
    }
    Ok((treated, control))
}
