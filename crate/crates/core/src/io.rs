//! CSV readers and writers for county panels, county covariates, birth
//! records and SGA reference tables.
//!
//! Empty fields mean missing. Row numbers in errors are file line numbers,
//! counting the header as line 1. Floats are written in shortest
//! round-trip form, so writing and reading back is lossless.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use csv::{ReaderBuilder, StringRecord, Writer};

use crate::cohort::{EducationShares, RawCountyCovariates};
use crate::data::{AgeBand, BirthRecord, CountyId, CountyPanel, Plurality, Race, Sex, State};
use crate::error::{Error, Result};
use crate::outcome::SgaTable;

pub const COUNTY_COLUMNS: [&str; 8] =
    ["county_id", "state", "area_sq_mi", "year", "disturbed_frac", "surface_tons", "total_tons", "borders_treated"];

pub const BIRTH_COLUMNS: [&str; 8] = [
    "county_id",
    "year",
    "birth_weight_g",
    "gestational_age_wk",
    "mother_race",
    "mother_age_band",
    "infant_sex",
    "plurality",
];

const EDUCATION_ERAS: [&str; 4] = ["1980", "1990", "2000", "2012_2016"];
const EDUCATION_LEVELS: [&str; 4] = ["lt_hs", "hs", "some_college", "college"];
const COVARIATE_SCALARS: [&str; 9] = [
    "income_1979",
    "income_1989",
    "income_1999",
    "income_2011",
    "poverty_1980",
    "poverty_1990",
    "poverty_2000",
    "poverty_2010",
    "percent_white_1990",
];

/// Covariate file header: `county_id`, the scalar columns, sixteen
/// `edu_<era>_<level>` share columns, then the two smoking counts.
pub fn covariate_columns() -> Vec<String> {
    let mut cols = vec!["county_id".to_string()];
    cols.extend(COVARIATE_SCALARS.iter().map(|s| s.to_string()));
    for era in EDUCATION_ERAS {
        cols.extend(EDUCATION_LEVELS.iter().map(|l| format!("edu_{era}_{l}")));
    }
    cols.push("smoking_births".into());
    cols.push("smoking_known_births".into());
    cols
}

struct Table<R: Read> {
    reader: csv::Reader<R>,
    index: HashMap<String, usize>,
}

impl<R: Read> Table<R> {
    fn new(source: R, required: &[&str]) -> Result<Self> {
        let mut reader = ReaderBuilder::new().trim(csv::Trim::All).from_reader(source);
        let index: HashMap<String, usize> =
            reader.headers()?.iter().enumerate().map(|(i, h)| (h.to_string(), i)).collect();
        for col in required {
            if !index.contains_key(*col) {
                return Err(Error::Parse { row: 1, message: format!("missing required column {col}") });
            }
        }
        Ok(Self { reader, index })
    }
}

struct Row<'a> {
    record: &'a StringRecord,
    index: &'a HashMap<String, usize>,
    line: usize,
}

impl Row<'_> {
    fn err(&self, message: impl Into<String>) -> Error {
        Error::Parse { row: self.line, message: message.into() }
    }

    fn text(&self, col: &str) -> Option<&str> {
        self.index.get(col).and_then(|&i| self.record.get(i)).filter(|s| !s.is_empty())
    }

    fn required(&self, col: &str) -> Result<&str> {
        self.text(col).ok_or_else(|| self.err(format!("{col} is empty")))
    }

    fn parse<T: FromStr>(&self, col: &str) -> Result<Option<T>> {
        self.text(col)
            .map(|s| s.parse::<T>().map_err(|_| self.err(format!("cannot parse {col} value {s:?}"))))
            .transpose()
    }

    fn number(&self, col: &str) -> Result<Option<f64>> {
        match self.parse::<f64>(col)? {
            Some(v) if !v.is_finite() => Err(self.err(format!("{col} is not finite"))),
            v => Ok(v),
        }
    }

    fn label<T: FromStr<Err = Error>>(&self, col: &str) -> Result<Option<T>> {
        self.text(col).map(|s| s.parse::<T>().map_err(|e| self.err(format!("{col}: {e}")))).transpose()
    }

    fn flag(&self, col: &str) -> Result<bool> {
        match self.text(col).map(str::to_ascii_lowercase).as_deref() {
            None | Some("false" | "0" | "no" | "n") => Ok(false),
            Some("true" | "1" | "yes" | "y") => Ok(true),
            Some(other) => Err(self.err(format!("cannot parse {col} value {other:?}"))),
        }
    }
}

fn for_each_row<R: Read>(table: &mut Table<R>, mut f: impl FnMut(&Row<'_>) -> Result<()>) -> Result<()> {
    let mut record = StringRecord::new();
    let mut line = 1;
    while table.reader.read_record(&mut record)? {
        line = record.position().map_or(line + 1, |p| p.line() as usize);
        f(&Row { record: &record, index: &table.index, line })?;
    }
    Ok(())
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

/// Read a long-format county file, one row per county-year. Panels are
/// returned sorted by county id.
pub fn read_county_csv<R: Read>(source: R) -> Result<Vec<CountyPanel>> {
    let mut table = Table::new(source, &["county_id", "state", "area_sq_mi", "year"])?;
    let mut panels: BTreeMap<CountyId, CountyPanel> = BTreeMap::new();
    let mut keys: BTreeSet<(CountyId, i32)> = BTreeSet::new();
    for_each_row(&mut table, |row| {
        let id = row.required("county_id")?.to_string();
        let state: State = row.label("state")?.ok_or_else(|| row.err("state is empty"))?;
        let area = row.number("area_sq_mi")?.ok_or_else(|| row.err("area_sq_mi is empty"))?;
        if !(area > 0.0) {
            return Err(row.err(format!("area_sq_mi must be positive, got {area}")));
        }
        let year: i32 = row.parse("year")?.ok_or_else(|| row.err("year is empty"))?;
        let borders = row.flag("borders_treated")?;
        let panel = panels.entry(id.clone()).or_insert_with(|| {
            let mut p = CountyPanel::new(id.clone(), state, area);
            p.borders_treated = borders;
            p
        });
        if panel.state != state || panel.area_sq_mi != area || panel.borders_treated != borders {
            return Err(row.err(format!("{id}: state, area or border flag differs from an earlier row")));
        }
        if !keys.insert((id.clone(), year)) {
            return Err(Error::DuplicateKey(format!("({id}, {year}) at row {}", row.line)));
        }
        if let Some(f) = row.number("disturbed_frac")? {
            if !(0.0..=1.0).contains(&f) {
                return Err(row.err(format!("disturbed_frac {f} outside [0,1]")));
            }
            panel.disturbed_frac.insert(year, f);
        }
        let surface = row.number("surface_tons")?;
        let total = row.number("total_tons")?;
        for (name, v) in [("surface_tons", surface), ("total_tons", total)] {
            if v.is_some_and(|v| v < 0.0) {
                return Err(row.err(format!("{name} is negative")));
            }
        }
        if let (Some(s), Some(t)) = (surface, total) {
            if t < s {
                return Err(row.err(format!("total_tons {t} below surface_tons {s}")));
            }
        }
        if let Some(s) = surface {
            panel.surface_production.insert(year, s);
        }
        if let Some(t) = total {
            panel.total_production.insert(year, t);
        }
        Ok(())
    })?;
    Ok(panels.into_values().collect())
}

pub fn load_county_csv(path: &Path) -> Result<Vec<CountyPanel>> {
    read_county_csv(open(path)?)
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |v| v.to_string())
}

pub fn write_county_csv<W: Write>(sink: W, panels: &[CountyPanel]) -> Result<()> {
    let mut w = Writer::from_writer(sink);
    w.write_record(COUNTY_COLUMNS)?;
    for p in panels {
        let mut years: Vec<i32> = p
            .disturbed_frac
            .keys()
            .chain(p.surface_production.keys())
            .chain(p.total_production.keys())
            .copied()
            .collect();
        years.sort_unstable();
        years.dedup();
        for y in years {
            w.write_record([
                p.county_id.clone(),
                p.state.to_string(),
                p.area_sq_mi.to_string(),
                y.to_string(),
                opt(p.disturbed_frac.get(&y).copied()),
                opt(p.surface_production.get(&y).copied()),
                opt(p.total_production.get(&y).copied()),
                p.borders_treated.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Read county covariate inputs, one row per county.
pub fn read_covariates_csv<R: Read>(source: R) -> Result<Vec<RawCountyCovariates>> {
    let mut table = Table::new(source, &["county_id"])?;
    let mut seen: BTreeMap<CountyId, RawCountyCovariates> = BTreeMap::new();
    for_each_row(&mut table, |row| {
        let id = row.required("county_id")?.to_string();
        if seen.contains_key(&id) {
            return Err(Error::DuplicateKey(format!("{id} at row {}", row.line)));
        }
        let s = |i: usize| row.number(COVARIATE_SCALARS[i]);
        let education = |era: &str| -> Result<Option<EducationShares>> {
            let vals: Vec<Option<f64>> =
                EDUCATION_LEVELS.iter().map(|l| row.number(&format!("edu_{era}_{l}"))).collect::<Result<_>>()?;
            match vals.iter().filter(|v| v.is_some()).count() {
                0 => Ok(None),
                4 => Ok(Some(EducationShares {
                    less_than_high_school: vals[0].unwrap(),
                    high_school: vals[1].unwrap(),
                    some_college: vals[2].unwrap(),
                    college: vals[3].unwrap(),
                })),
                _ => Err(row.err(format!("education shares for {era} are partially missing"))),
            }
        };
        let raw = RawCountyCovariates {
            county_id: id.clone(),
            income_1979: s(0)?,
            income_1989: s(1)?,
            income_1999: s(2)?,
            income_2011: s(3)?,
            poverty_1980: s(4)?,
            poverty_1990: s(5)?,
            poverty_2000: s(6)?,
            poverty_2010: s(7)?,
            percent_white_1990: s(8)?,
            education_1980: education(EDUCATION_ERAS[0])?,
            education_1990: education(EDUCATION_ERAS[1])?,
            education_2000: education(EDUCATION_ERAS[2])?,
            education_2012_2016: education(EDUCATION_ERAS[3])?,
            smoking_births: row.number("smoking_births")?,
            smoking_known_births: row.number("smoking_known_births")?,
        };
        seen.insert(id, raw);
        Ok(())
    })?;
    Ok(seen.into_values().collect())
}

pub fn load_covariates_csv(path: &Path) -> Result<Vec<RawCountyCovariates>> {
    read_covariates_csv(open(path)?)
}

pub fn write_covariates_csv<W: Write>(sink: W, rows: &[RawCountyCovariates]) -> Result<()> {
    let mut w = Writer::from_writer(sink);
    w.write_record(covariate_columns())?;
    for r in rows {
        let mut rec = vec![r.county_id.clone()];
        rec.extend(
            [
                r.income_1979,
                r.income_1989,
                r.income_1999,
                r.income_2011,
                r.poverty_1980,
                r.poverty_1990,
                r.poverty_2000,
                r.poverty_2010,
                r.percent_white_1990,
            ]
            .map(opt),
        );
        for e in [&r.education_1980, &r.education_1990, &r.education_2000, &r.education_2012_2016] {
            match e {
                Some(e) => rec.extend([e.less_than_high_school, e.high_school, e.some_college, e.college].map(|v| v.to_string())),
                None => rec.extend(std::iter::repeat_n(String::new(), 4)),
            }
        }
        rec.push(opt(r.smoking_births));
        rec.push(opt(r.smoking_known_births));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Birth records with per-variable missing counts. No row is dropped.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BirthLoad {
    pub records: Vec<BirthRecord>,
    /// Column name → number of rows with that field empty.
    pub missing: BTreeMap<String, usize>,
}

pub fn read_births_csv<R: Read>(source: R) -> Result<BirthLoad> {
    let mut table = Table::new(source, &BIRTH_COLUMNS)?;
    let mut load = BirthLoad::default();
    for col in &BIRTH_COLUMNS[2..] {
        load.missing.insert(col.to_string(), 0);
    }
    for_each_row(&mut table, |row| {
        let record = BirthRecord {
            county_id: row.required("county_id")?.to_string(),
            year: row.parse("year")?.ok_or_else(|| row.err("year is empty"))?,
            birth_weight_g: row.number("birth_weight_g")?,
            gestational_age_wk: row.number("gestational_age_wk")?,
            mother_race: row.label::<Race>("mother_race")?,
            mother_age_band: row.label::<AgeBand>("mother_age_band")?,
            infant_sex: row.label::<Sex>("infant_sex")?,
            plurality: row.label::<Plurality>("plurality")?,
        };
        record.validate().map_err(|e| row.err(e.to_string()))?;
        for col in &BIRTH_COLUMNS[2..] {
            if row.text(col).is_none() {
                *load.missing.get_mut(*col).expect("tally initialised") += 1;
            }
        }
        load.records.push(record);
        Ok(())
    })?;
    Ok(load)
}

pub fn load_births_csv(path: &Path) -> Result<BirthLoad> {
    read_births_csv(open(path)?)
}

pub fn write_births_csv<W: Write>(sink: W, births: &[BirthRecord]) -> Result<()> {
    let mut w = Writer::from_writer(sink);
    w.write_record(BIRTH_COLUMNS)?;
    let label = |s: Option<&'static str>| s.unwrap_or("").to_string();
    for b in births {
        w.write_record([
            b.county_id.clone(),
            b.year.to_string(),
            opt(b.birth_weight_g),
            opt(b.gestational_age_wk),
            label(b.mother_race.map(|v| v.label())),
            label(b.mother_age_band.map(|v| v.label())),
            label(b.infant_sex.map(|v| v.label())),
            label(b.plurality.map(|v| v.label())),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Columns `week`, `sex`, `p10_grams`.
pub fn read_sga_csv<R: Read>(source: R) -> Result<SgaTable> {
    let mut table = Table::new(source, &["week", "sex", "p10_grams"])?;
    let mut sga = SgaTable::new();
    for_each_row(&mut table, |row| {
        let week: u32 = row.parse("week")?.ok_or_else(|| row.err("week is empty"))?;
        let sex: Sex = row.label("sex")?.ok_or_else(|| row.err("sex is empty"))?;
        let grams = row.number("p10_grams")?.ok_or_else(|| row.err("p10_grams is empty"))?;
        if sga.threshold(week, sex).is_some() {
            return Err(Error::DuplicateKey(format!("({week}, {sex}) at row {}", row.line)));
        }
        sga.insert(week, sex, grams);
        Ok(())
    })?;
    Ok(sga)
}

pub fn load_sga_csv(path: &Path) -> Result<SgaTable> {
    read_sga_csv(open(path)?)
}

/// Write a synthetic study as `counties.csv`, `covariates.csv` and `births.csv` in `dir`.
pub fn write_study(dir: &Path, study: &crate::synthgen::SyntheticStudy) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_county_csv(File::create(dir.join("counties.csv"))?, &study.panels)?;
    write_covariates_csv(File::create(dir.join("covariates.csv"))?, &study.covariates)?;
    write_births_csv(File::create(dir.join("births.csv"))?, &study.births)?;
    Ok(())
}
