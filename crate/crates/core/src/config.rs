//! Study configuration. Every field has the protocol default, so an empty
//! TOML file reproduces the primary analysis.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::YearRange;
use crate::error::{Error, Result};

/// First pre-period year usable for gestational-age outcomes.
pub const GESTATIONAL_PRE_START: i32 = 1981;

/// Binary birth outcome analysed by the models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Outcome {
    /// Birth weight below 2500 g.
    LowBirthWeight,
    /// Birth weight below 1500 g.
    VeryLowBirthWeight,
    /// Gestational age below 37 weeks.
    Preterm,
    /// Birth weight below the 10th percentile for gestational week and sex.
    SmallForGestationalAge,
}

impl Outcome {
    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::LowBirthWeight => "lbw",
            Outcome::VeryLowBirthWeight => "vlbw",
            Outcome::Preterm => "preterm",
            Outcome::SmallForGestationalAge => "sga",
        }
    }

    pub fn needs_gestational_age(self) -> bool {
        matches!(self, Outcome::Preterm | Outcome::SmallForGestationalAge)
    }
}

impl FromStr for Outcome {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "lbw" => Ok(Outcome::LowBirthWeight),
            "vlbw" => Ok(Outcome::VeryLowBirthWeight),
            "preterm" => Ok(Outcome::Preterm),
            "sga" => Ok(Outcome::SmallForGestationalAge),
            other => Err(Error::Config(format!(
                "unknown outcome {other:?} (expected lbw, vlbw, preterm or sga)"
            ))),
        }
    }
}

impl TryFrom<String> for Outcome {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Outcome> for String {
    fn from(o: Outcome) -> String {
        o.as_str().to_string()
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// How covariate distances are built before pair matching.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceKind {
    #[default]
    RankMahalanobis,
    Mahalanobis,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyConfig {
    pub pre_period: YearRange,
    pub post_period: YearRange,
    /// Post-period mean disturbed fraction a county must exceed to be treated.
    pub treated_threshold: f64,
    /// Years whose mean disturbed fraction is the dose baseline.
    pub baseline_years: YearRange,
    /// Maximum mean yearly surface production per square mile for controls.
    pub control_surface_max: f64,
    /// Maximum mean yearly total production for controls.
    pub control_total_max: f64,
    /// Apply `control_total_max` per square mile instead of to raw tons.
    pub total_per_sq_mi: bool,
    pub exclude_border_controls: bool,
    pub outcome: Outcome,
    /// Pre-period years treated as the pseudo-treatment window in the test of controls.
    pub pseudo_treated_years: YearRange,
    pub distance: DistanceKind,
    /// Optional caliper on the matching distance; pairs beyond it are forbidden.
    pub caliper: Option<f64>,
    /// Significance level for Wald tests and the sensitivity frontier.
    pub alpha: f64,
    pub theta_grid: Vec<f64>,
    pub confounder_prevalences: Vec<f64>,
    pub confounder_odds_ratios: Vec<f64>,
    pub rng_seed: u64,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            pre_period: YearRange::new(1977, 1989),
            post_period: YearRange::new(1999, 2011),
            treated_threshold: 0.01,
            baseline_years: YearRange::new(1985, 1989),
            control_surface_max: 1000.0,
            control_total_max: 5000.0,
            total_per_sq_mi: false,
            exclude_border_controls: false,
            outcome: Outcome::LowBirthWeight,
            pseudo_treated_years: YearRange::new(1984, 1989),
            distance: DistanceKind::RankMahalanobis,
            caliper: None,
            alpha: 0.05,
            theta_grid: (1..=10).map(f64::from).collect(),
            confounder_prevalences: vec![0.1, 0.25, 0.5, 0.75, 1.0],
            confounder_odds_ratios: vec![1.0, 1.1, 1.25, 1.5, 2.0, 3.0, 5.0],
            rng_seed: 20190101,
        }
    }
}

impl StudyConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: StudyConfig = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("StudyConfig serializes")
    }

    pub fn validate(&self) -> Result<()> {
        for (name, r) in [
            ("pre_period", self.pre_period),
            ("post_period", self.post_period),
            ("baseline_years", self.baseline_years),
            ("pseudo_treated_years", self.pseudo_treated_years),
        ] {
            if r.is_empty() {
                return Err(Error::Config(format!("{name} {r} is empty")));
            }
        }
        if self.pre_period.end >= self.post_period.start {
            return Err(Error::Config(format!(
                "pre_period {} must end before post_period {} starts",
                self.pre_period, self.post_period
            )));
        }
        if !(self.treated_threshold > 0.0) {
            return Err(Error::Config("treated_threshold must be positive".into()));
        }
        if !(self.control_surface_max > 0.0 && self.control_total_max > 0.0) {
            return Err(Error::Config("control thresholds must be positive".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha {} outside (0,1)", self.alpha)));
        }
        if let Some(c) = self.caliper {
            if !(c > 0.0) {
                return Err(Error::Config("caliper must be positive".into()));
            }
        }
        if self.theta_grid.iter().any(|&t| !(t > 0.0 && t.is_finite())) {
            return Err(Error::Config("theta_grid values must be positive".into()));
        }
        if self.confounder_prevalences.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Config("confounder prevalences must lie in [0,1]".into()));
        }
        if self.confounder_odds_ratios.iter().any(|&g| !(g >= 1.0)) {
            return Err(Error::Config("confounder odds ratios must be >= 1".into()));
        }
        Ok(())
    }

    /// Pre-period used for the configured outcome: gestational-age outcomes
    /// start no earlier than 1981.
    pub fn effective_pre_period(&self) -> YearRange {
        if self.outcome.needs_gestational_age() {
            YearRange::new(self.pre_period.start.max(GESTATIONAL_PRE_START), self.pre_period.end)
        } else {
            self.pre_period
        }
    }

    /// True when `year` is in the analysed pre or post period.
    pub fn in_study_window(&self, year: i32) -> bool {
        self.effective_pre_period().contains(year) || self.post_period.contains(year)
    }
}
