//! Domain types: county exposure panels, county covariates and birth records.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Opaque county identifier, e.g. `"Boone County, WV"`.
pub type CountyId = String;

/// State of the study region. Anything else parses as `Other` and is
/// excluded from cohorts as outside the region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum State {
    KY,
    TN,
    VA,
    WV,
    Other,
}

impl State {
    pub fn in_region(self) -> bool {
        !matches!(self, State::Other)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            State::KY => "KY",
            State::TN => "TN",
            State::VA => "VA",
            State::WV => "WV",
            State::Other => "other",
        }
    }
}

impl FromStr for State {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim().to_ascii_uppercase().as_str() {
            "KY" | "KENTUCKY" => State::KY,
            "TN" | "TENNESSEE" => State::TN,
            "VA" | "VIRGINIA" => State::VA,
            "WV" | "WEST VIRGINIA" => State::WV,
            "" => return Err(Error::Validation("empty state".into())),
            _ => State::Other,
        })
    }
}

impl fmt::Display for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Inclusive range of calendar years.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct YearRange {
    pub start: i32,
    pub end: i32,
}

impl YearRange {
    pub const fn new(start: i32, end: i32) -> Self {
        Self { start, end }
    }

    pub fn contains(&self, year: i32) -> bool {
        year >= self.start && year <= self.end
    }

    pub fn years(&self) -> impl Iterator<Item = i32> {
        self.start..=self.end
    }

    pub fn len(&self) -> usize {
        if self.end < self.start {
            0
        } else {
            (self.end - self.start + 1) as usize
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl fmt::Display for YearRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.start, self.end)
    }
}

/// Yearly exposure and production series for one county.
#[derive(Debug, Clone, PartialEq)]
pub struct CountyPanel {
    pub county_id: CountyId,
    pub state: State,
    pub area_sq_mi: f64,
    /// Fraction of land area disturbed by surface mining, by year.
    pub disturbed_frac: BTreeMap<i32, f64>,
    /// Surface-mining coal production in short tons, by year.
    pub surface_production: BTreeMap<i32, f64>,
    /// Total coal production in short tons, by year.
    pub total_production: BTreeMap<i32, f64>,
    pub borders_treated: bool,
}

impl CountyPanel {
    pub fn new(county_id: impl Into<CountyId>, state: State, area_sq_mi: f64) -> Self {
        Self {
            county_id: county_id.into(),
            state,
            area_sq_mi,
            disturbed_frac: BTreeMap::new(),
            surface_production: BTreeMap::new(),
            total_production: BTreeMap::new(),
            borders_treated: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.area_sq_mi > 0.0 && self.area_sq_mi.is_finite()) {
            return Err(Error::Validation(format!(
                "{}: area_sq_mi must be positive, got {}",
                self.county_id, self.area_sq_mi
            )));
        }
        for (&year, &frac) in &self.disturbed_frac {
            if !(0.0..=1.0).contains(&frac) {
                return Err(Error::Validation(format!(
                    "{} {}: disturbed_frac {} outside [0,1]",
                    self.county_id, year, frac
                )));
            }
        }
        for (&year, &surface) in &self.surface_production {
            if surface < 0.0 {
                return Err(Error::Validation(format!(
                    "{} {}: negative surface production",
                    self.county_id, year
                )));
            }
            if let Some(&total) = self.total_production.get(&year) {
                if total < surface {
                    return Err(Error::Validation(format!(
                        "{} {}: total production {} below surface production {}",
                        self.county_id, year, total, surface
                    )));
                }
            }
        }
        if self.total_production.values().any(|&t| t < 0.0) {
            return Err(Error::Validation(format!(
                "{}: negative total production",
                self.county_id
            )));
        }
        Ok(())
    }

    /// Mean disturbed fraction over `range`, or the list of missing years.
    pub fn mean_disturbed(&self, range: YearRange) -> std::result::Result<f64, Vec<i32>> {
        mean_over(&self.disturbed_frac, range)
    }
}

pub(crate) fn mean_over(series: &BTreeMap<i32, f64>, range: YearRange) -> std::result::Result<f64, Vec<i32>> {
    let missing: Vec<i32> = range.years().filter(|y| !series.contains_key(y)).collect();
    if !missing.is_empty() {
        return Err(missing);
    }
    let sum: f64 = range.years().map(|y| series[&y]).sum();
    Ok(sum / range.len() as f64)
}

/// County-level matching covariates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovariateVector {
    pub median_income_pre: f64,
    pub median_income_post: f64,
    pub poverty_pre: f64,
    pub poverty_post: f64,
    pub percent_white: f64,
    pub education_pre: f64,
    pub education_post: f64,
    pub maternal_smoking_rate: f64,
}

impl CovariateVector {
    pub const NAMES: [&'static str; 8] = [
        "median.income.pre",
        "median.income.post",
        "poverty.pre",
        "poverty.post",
        "percent.white",
        "education.pre",
        "education.post",
        "maternal.smoking.rate",
    ];

    pub fn to_array(&self) -> [f64; 8] {
        [
            self.median_income_pre,
            self.median_income_post,
            self.poverty_pre,
            self.poverty_post,
            self.percent_white,
            self.education_pre,
            self.education_post,
            self.maternal_smoking_rate,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str, v: f64| Err(Error::Validation(format!("{what} = {v} out of range")));
        for (name, v) in [
            ("poverty_pre", self.poverty_pre),
            ("poverty_post", self.poverty_post),
            ("percent_white", self.percent_white),
        ] {
            if !(0.0..=100.0).contains(&v) {
                return bad(name, v);
            }
        }
        for (name, v) in [
            ("median_income_pre", self.median_income_pre),
            ("median_income_post", self.median_income_post),
        ] {
            if !(v > 0.0) {
                return bad(name, v);
            }
        }
        for (name, v) in [
            ("education_pre", self.education_pre),
            ("education_post", self.education_post),
        ] {
            if !(10.0 - 1e-9..=16.0 + 1e-9).contains(&v) {
                return bad(name, v);
            }
        }
        if !(0.0..=1.0).contains(&self.maternal_smoking_rate) {
            return bad("maternal_smoking_rate", self.maternal_smoking_rate);
        }
        Ok(())
    }
}

macro_rules! labelled_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $label:literal $(| $alias:literal)*),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn label(self) -> &'static str {
                match self {
                    $($name::$variant => $label),+
                }
            }
        }

        impl FromStr for $name {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                let t = s.trim();
                $(
                    if t.eq_ignore_ascii_case($label) $(|| t.eq_ignore_ascii_case($alias))* {
                        return Ok($name::$variant);
                    }
                )+
                Err(Error::Validation(format!(
                    concat!("unknown ", stringify!($name), " {:?}"),
                    t
                )))
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.label())
            }
        }
    };
}

labelled_enum!(
    /// Mother's race as recorded on the birth certificate.
    Race { White => "white", Black => "black", Other => "other" }
);

labelled_enum!(
    /// Maternal age band.
    AgeBand {
        Under20 => "<20" | "19 or less" | "less than 20",
        A20To24 => "20-24",
        A25To29 => "25-29",
        A30To34 => "30-34",
        A35To39 => "35-39",
        A40Plus => "40+",
    }
);

labelled_enum!(Sex { Male => "male" | "m", Female => "female" | "f" });

labelled_enum!(Plurality { Single => "single", Multiple => "multiple" });

/// One birth.
#[derive(Debug, Clone, PartialEq)]
pub struct BirthRecord {
    pub county_id: CountyId,
    pub year: i32,
    pub birth_weight_g: Option<f64>,
    pub gestational_age_wk: Option<f64>,
    pub mother_race: Option<Race>,
    pub mother_age_band: Option<AgeBand>,
    pub infant_sex: Option<Sex>,
    pub plurality: Option<Plurality>,
}

impl BirthRecord {
    pub fn validate(&self) -> Result<()> {
        if let Some(w) = self.birth_weight_g {
            if !(w > 0.0 && w < 9999.0) {
                return Err(Error::Validation(format!("birth weight {w} outside (0, 9999)")));
            }
        }
        if let Some(g) = self.gestational_age_wk {
            if !(g > 0.0 && g < 60.0) {
                return Err(Error::Validation(format!("gestational age {g} outside (0, 60)")));
            }
        }
        Ok(())
    }

    /// True when every individual covariate used by the models is recorded.
    pub fn covariates_complete(&self) -> bool {
        self.mother_race.is_some()
            && self.mother_age_band.is_some()
            && self.infant_sex.is_some()
            && self.plurality.is_some()
    }
}
