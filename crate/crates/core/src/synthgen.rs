//! Synthetic county panels and births drawn from known parameters.
//!
//! Outcomes follow a correctly specified logistic model,
//! `logit Pr(Y=1) = intercept + α_i + λ_t + γᵀX + effect`, where the effect
//! term is the dose, binary or latent-exposure term selected by
//! [`TrueModel`]. Each county-year cell draws from its own RNG stream, so
//! output is identical for a given seed regardless of scheduling.

use std::collections::BTreeMap;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cohort::{EducationShares, RawCountyCovariates};
use crate::data::{AgeBand, BirthRecord, CountyId, CountyPanel, Plurality, Race, Sex, State, YearRange};
use crate::error::{Error, Result};
use crate::glm::inv_logit;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrueModel {
    Dose { chi: f64 },
    Binary { beta: f64 },
    Latent { theta: f64, tau: f64 },
}

/// Individual-covariate log-odds effects relative to the reference levels
/// (black, 20-24, female, multiple birth).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CovariateEffects {
    pub race_white: f64,
    pub race_other: f64,
    pub age_under20: f64,
    pub age_25_29: f64,
    pub age_30_34: f64,
    pub age_35_39: f64,
    pub age_40_plus: f64,
    pub male: f64,
    pub single: f64,
}

impl Default for CovariateEffects {
    fn default() -> Self {
        Self {
            race_white: -0.57,
            race_other: -0.33,
            age_under20: 0.28,
            age_25_29: -0.14,
            age_30_34: -0.05,
            age_35_39: 0.21,
            age_40_plus: 0.36,
            male: -0.18,
            single: -2.9,
        }
    }
}

impl CovariateEffects {
    fn linear(&self, race: Race, age: AgeBand, sex: Sex, plurality: Plurality) -> f64 {
        let r = match race {
            Race::White => self.race_white,
            Race::Other => self.race_other,
            Race::Black => 0.0,
        };
        let a = match age {
            AgeBand::Under20 => self.age_under20,
            AgeBand::A20To24 => 0.0,
            AgeBand::A25To29 => self.age_25_29,
            AgeBand::A30To34 => self.age_30_34,
            AgeBand::A35To39 => self.age_35_39,
            AgeBand::A40Plus => self.age_40_plus,
        };
        let s = if sex == Sex::Male { self.male } else { 0.0 };
        let p = if plurality == Plurality::Single { self.single } else { 0.0 };
        r + a + s + p
    }
}

/// Unmeasured binary confounder present only in treated post-period births.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantedConfounder {
    pub prevalence: f64,
    pub odds_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorSpec {
    pub n_treated: usize,
    pub n_control: usize,
    /// Extra non-treated counties whose production disqualifies them as controls.
    pub n_high_production: usize,
    pub pre_period: YearRange,
    pub post_period: YearRange,
    pub baseline_years: YearRange,
    pub births_per_cell: f64,
    pub true_model: TrueModel,
    /// Log-odds of the reference individual in the reference county and year.
    pub intercept: f64,
    pub county_effect_sd: f64,
    pub year_effect_sd: f64,
    pub covariate_effects: CovariateEffects,
    /// Range of yearly post-period disturbed-fraction increases in treated counties.
    pub dose_range: (f64, f64),
    /// Treated-group shift of the latent socioeconomic factor behind the
    /// matching covariates.
    pub covariate_shift: f64,
    pub planted_confounder: Option<PlantedConfounder>,
    /// Extra log-odds per pre-period year for treated counties, held at its
    /// end-of-pre-period value afterwards.
    pub differential_trend: Option<f64>,
    /// Probability that a birth's weight is missing (race goes missing at one eighth of it).
    pub missing_rate: f64,
    /// Probability that a control county borders a treated one.
    pub border_prob: f64,
    pub rng_seed: u64,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        Self {
            n_treated: 23,
            n_control: 23,
            n_high_production: 0,
            pre_period: YearRange::new(1977, 1989),
            post_period: YearRange::new(1999, 2011),
            baseline_years: YearRange::new(1985, 1989),
            births_per_cell: 200.0,
            true_model: TrueModel::Dose { chi: 1.25f64.ln() },
            intercept: 0.77,
            county_effect_sd: 0.15,
            year_effect_sd: 0.05,
            covariate_effects: CovariateEffects::default(),
            dose_range: (0.01, 0.06),
            covariate_shift: 0.0,
            planted_confounder: None,
            differential_trend: None,
            missing_rate: 0.0,
            border_prob: 0.3,
            rng_seed: 1,
        }
    }
}

impl GeneratorSpec {
    /// Parse a TOML spec; omitted fields take their defaults.
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let spec: GeneratorSpec = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("GeneratorSpec serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_treated == 0 || self.n_control == 0 {
            return Err(Error::Validation("need at least one treated and one control county".into()));
        }
        if !(self.births_per_cell > 0.0) {
            return Err(Error::Validation("births_per_cell must be positive".into()));
        }
        if self.pre_period.end >= self.post_period.start || self.pre_period.is_empty() || self.post_period.is_empty() {
            return Err(Error::Validation("pre_period must precede post_period".into()));
        }
        if !(self.pre_period.contains(self.baseline_years.start) && self.pre_period.contains(self.baseline_years.end)) {
            return Err(Error::Validation("baseline years must lie in the pre-period".into()));
        }
        let (lo, hi) = self.dose_range;
        if !(0.0 < lo && lo <= hi && hi < 1.0) {
            return Err(Error::Validation(format!("dose_range {lo}..{hi} invalid")));
        }
        if let TrueModel::Latent { theta, .. } = self.true_model {
            if !(theta > 0.0) {
                return Err(Error::Validation("theta must be positive".into()));
            }
            if theta * hi > 1.0 {
                return Err(Error::InvalidTheta { theta, product: theta * hi });
            }
        }
        if let Some(c) = self.planted_confounder {
            if !(0.0..=1.0).contains(&c.prevalence) || !(c.odds_ratio > 0.0) {
                return Err(Error::Validation("planted confounder out of range".into()));
            }
        }
        if !(0.0..1.0).contains(&self.missing_rate) || !(0.0..=1.0).contains(&self.border_prob) {
            return Err(Error::Validation("probabilities out of range".into()));
        }
        Ok(())
    }

    pub fn years(&self) -> Vec<i32> {
        self.pre_period.years().chain(self.post_period.years()).collect()
    }
}

/// Parameters the data were generated from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTruth {
    pub treated: Vec<CountyId>,
    pub controls: Vec<CountyId>,
    pub county_effects: BTreeMap<CountyId, f64>,
    pub year_effects: BTreeMap<i32, f64>,
    /// Post-period dose of each treated county-year.
    pub doses: BTreeMap<(CountyId, i32), f64>,
    pub model: TrueModel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticStudy {
    pub panels: Vec<CountyPanel>,
    pub covariates: Vec<RawCountyCovariates>,
    pub births: Vec<BirthRecord>,
    pub truth: SyntheticTruth,
}

const STATES: [State; 4] = [State::KY, State::TN, State::VA, State::WV];
const RACES: [Race; 3] = [Race::White, Race::Black, Race::Other];
const RACE_W: [f64; 3] = [0.90, 0.07, 0.03];
const AGES: [AgeBand; 6] = [
    AgeBand::Under20,
    AgeBand::A20To24,
    AgeBand::A25To29,
    AgeBand::A30To34,
    AgeBand::A35To39,
    AgeBand::A40Plus,
];
const AGE_W: [f64; 6] = [0.18, 0.33, 0.27, 0.14, 0.06, 0.02];
const P_MALE: f64 = 0.512;
const P_MULTIPLE: f64 = 0.03;

fn normal(rng: &mut impl Rng, mean: f64, sd: f64) -> f64 {
    if sd == 0.0 {
        return mean;
    }
    Normal::new(mean, sd).expect("finite sd").sample(rng)
}

fn education(rng: &mut impl Rng, factor: f64, era: f64) -> EducationShares {
    let lt = (0.42 - era + 0.06 * factor + normal(rng, 0.0, 0.02)).clamp(0.05, 0.8);
    let college = (0.08 + era / 3.0 - 0.02 * factor + normal(rng, 0.0, 0.01)).clamp(0.02, 0.4);
    let rest = 1.0 - lt - college;
    let hs = rest * (0.7 + normal(rng, 0.0, 0.03)).clamp(0.5, 0.9);
    EducationShares { less_than_high_school: lt, high_school: hs, some_college: rest - hs, college }
}

/// County covariates driven by one latent socioeconomic factor; higher
/// factor means poorer and less educated.
fn county_covariates(rng: &mut impl Rng, id: &str, factor: f64) -> RawCountyCovariates {
    let income_pre = (21000.0 - 3000.0 * factor + normal(rng, 0.0, 800.0)).max(5000.0);
    let income_post = (33000.0 - 5500.0 * factor + normal(rng, 0.0, 1200.0)).max(8000.0);
    let pov_pre = (20.0 + 5.5 * factor + normal(rng, 0.0, 1.5)).clamp(1.0, 60.0);
    let pov_post = (19.0 + 5.5 * factor + normal(rng, 0.0, 1.5)).clamp(1.0, 60.0);
    let white = (91.0 + 4.0 * factor + normal(rng, 0.0, 2.0)).clamp(40.0, 99.9);
    let known = 4000.0_f64.round();
    let smoking_rate = (0.25 + 0.05 * factor + normal(rng, 0.0, 0.015)).clamp(0.02, 0.6);
    RawCountyCovariates {
        county_id: id.to_string(),
        income_1979: Some((income_pre * 0.95).round()),
        income_1989: Some((income_pre * 1.05).round()),
        income_1999: Some((income_post * 0.97).round()),
        income_2011: Some((income_post * 1.03).round()),
        poverty_1980: Some(pov_pre),
        poverty_1990: Some(pov_pre),
        poverty_2000: Some(pov_post),
        poverty_2010: Some(pov_post),
        percent_white_1990: Some(white),
        education_1980: Some(education(rng, factor, 0.0)),
        education_1990: Some(education(rng, factor, 0.05)),
        education_2000: Some(education(rng, factor, 0.12)),
        education_2012_2016: Some(education(rng, factor, 0.18)),
        smoking_births: Some((smoking_rate * known).round()),
        smoking_known_births: Some(known),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Treated,
    Control,
    HighProduction,
}

/// Draw panels, covariates and births for `spec`.
pub fn generate_panel(spec: &GeneratorSpec) -> Result<SyntheticStudy> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    let years = spec.years();

    let mut kinds: Vec<(CountyId, Kind)> = Vec::new();
    kinds.extend((1..=spec.n_treated).map(|i| (format!("trt-{i:03}"), Kind::Treated)));
    kinds.extend((1..=spec.n_control).map(|i| (format!("ctl-{i:03}"), Kind::Control)));
    kinds.extend((1..=spec.n_high_production).map(|i| (format!("hip-{i:03}"), Kind::HighProduction)));

    let mut panels = Vec::with_capacity(kinds.len());
    let mut covariates = Vec::with_capacity(kinds.len());
    let mut county_effects = BTreeMap::new();
    let mut doses = BTreeMap::new();
    for (idx, (id, kind)) in kinds.iter().enumerate() {
        let area = rng.gen_range(200.0..700.0);
        let mut p = CountyPanel::new(id.clone(), STATES[idx % 4], area);
        let base: f64 = match kind {
            Kind::Treated => rng.gen_range(0.0..0.01),
            _ => rng.gen_range(0.0..0.002),
        };
        for &y in &years {
            let frac = if *kind == Kind::Treated && spec.post_period.contains(y) {
                let inc = rng.gen_range(spec.dose_range.0..=spec.dose_range.1);
                doses.insert((id.clone(), y), inc);
                base + inc
            } else {
                base
            };
            p.disturbed_frac.insert(y, frac);
            let (surface, total) = match kind {
                Kind::Treated => {
                    let s = area * rng.gen_range(1500.0..5000.0);
                    (s, s * 1.5)
                }
                Kind::Control => {
                    let s = rng.gen_range(0.0..2000.0);
                    (s, s + rng.gen_range(0.0..2500.0))
                }
                Kind::HighProduction => {
                    let s = area * rng.gen_range(1200.0..3000.0);
                    (s, s * 1.2)
                }
            };
            p.surface_production.insert(y, surface);
            p.total_production.insert(y, total);
        }
        p.borders_treated = *kind == Kind::Control && rng.gen_bool(spec.border_prob);
        let shift = if *kind == Kind::Treated { spec.covariate_shift } else { 0.0 };
        let factor = normal(&mut rng, shift, 1.0);
        covariates.push(county_covariates(&mut rng, id, factor));
        county_effects.insert(id.clone(), normal(&mut rng, 0.0, spec.county_effect_sd));
        panels.push(p);
    }
    let year_effects: BTreeMap<i32, f64> = years.iter().map(|&y| (y, normal(&mut rng, 0.0, spec.year_effect_sd))).collect();

    // Births for treated and control counties only.
    let cells: Vec<(usize, &CountyId, Kind, i32)> = kinds
        .iter()
        .filter(|(_, k)| *k != Kind::HighProduction)
        .flat_map(|(id, k)| years.iter().map(move |&y| (id, *k, y)))
        .enumerate()
        .map(|(i, (id, k, y))| (i, id, k, y))
        .collect();
    let race_dist = WeightedIndex::new(RACE_W).expect("weights");
    let age_dist = WeightedIndex::new(AGE_W).expect("weights");
    let births: Vec<BirthRecord> = cells
        .par_iter()
        .map(|&(cell, id, kind, year)| {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
            rng.set_stream(cell as u64 + 1);
            let n = Poisson::new(spec.births_per_cell).expect("positive rate").sample(&mut rng) as usize;
            let treated = kind == Kind::Treated;
            let post = spec.post_period.contains(year);
            let dose = doses.get(&(id.clone(), year)).copied().unwrap_or(0.0);
            let mut cell_eta = spec.intercept + county_effects[id] + year_effects[&year];
            if treated {
                if let Some(slope) = spec.differential_trend {
                    let t = year.min(spec.pre_period.end) - spec.pre_period.start;
                    cell_eta += slope * t as f64;
                }
            }
            let mut out = Vec::with_capacity(n);
            for _ in 0..n {
                let race = RACES[race_dist.sample(&mut rng)];
                let age = AGES[age_dist.sample(&mut rng)];
                let sex = if rng.gen_bool(P_MALE) { Sex::Male } else { Sex::Female };
                let plurality = if rng.gen_bool(P_MULTIPLE) { Plurality::Multiple } else { Plurality::Single };
                let mut eta = cell_eta + spec.covariate_effects.linear(race, age, sex, plurality);
                if treated && post {
                    eta += match spec.true_model {
                        TrueModel::Dose { chi } => chi * dose,
                        TrueModel::Binary { beta } => beta,
                        TrueModel::Latent { theta, tau } => {
                            if rng.gen_bool((theta * dose).clamp(0.0, 1.0)) {
                                tau
                            } else {
                                0.0
                            }
                        }
                    };
                    if let Some(c) = spec.planted_confounder {
                        if rng.gen_bool(c.prevalence) {
                            eta += c.odds_ratio.ln();
                        }
                    }
                }
                let y = rng.gen_bool(inv_logit(eta));
                let weight = if y {
                    normal(&mut rng, 2050.0, 350.0).clamp(300.0, 2499.0)
                } else {
                    normal(&mut rng, 3350.0, 450.0).clamp(2500.0, 5500.0)
                }
                .round();
                let gestation = if y {
                    normal(&mut rng, 35.0, 2.5).clamp(22.0, 42.0)
                } else {
                    normal(&mut rng, 39.0, 1.2).clamp(34.0, 43.0)
                }
                .round();
                let weight_missing = spec.missing_rate > 0.0 && rng.gen_bool(spec.missing_rate);
                let race_missing = spec.missing_rate > 0.0 && rng.gen_bool(spec.missing_rate / 8.0);
                out.push(BirthRecord {
                    county_id: id.clone(),
                    year,
                    birth_weight_g: (!weight_missing).then_some(weight),
                    gestational_age_wk: Some(gestation),
                    mother_race: (!race_missing).then_some(race),
                    mother_age_band: Some(age),
                    infant_sex: Some(sex),
                    plurality: Some(plurality),
                });
            }
            out
        })
        .flatten()
        .collect();

    let pick = |k: Kind| kinds.iter().filter(|(_, kk)| *kk == k).map(|(id, _)| id.clone()).collect::<Vec<_>>();
    Ok(SyntheticStudy {
        panels,
        covariates,
        births,
        truth: SyntheticTruth {
            treated: pick(Kind::Treated),
            controls: pick(Kind::Control),
            county_effects,
            year_effects,
            doses,
            model: spec.true_model,
        },
    })
}
