use minedid::io::{
    read_births_csv, read_county_csv, read_covariates_csv, read_sga_csv, write_births_csv, write_county_csv,
    write_covariates_csv, write_study, load_births_csv, load_county_csv, load_covariates_csv,
};
use minedid::data::{Race, Sex, State};
use minedid::synthgen::{generate_panel, GeneratorSpec};
use minedid::Error;

const HEADER: &str = "county_id,state,area_sq_mi,year,disturbed_frac,surface_tons,total_tons,borders_treated\n";

#[test]
fn two_county_happy_path() {
    let csv = format!(
        "{HEADER}Boone,WV,503,1999,0.05,1000,2000,false\nBoone,WV,503,2000,0.06,,,false\nPike,Kentucky,787,1999,0.02,10,20,true\nPike,Kentucky,787,2000,,5,5,true\n"
    );
    let panels = read_county_csv(csv.as_bytes()).unwrap();
    assert_eq!(panels.len(), 2);
    assert_eq!(panels[0].county_id, "Boone");
    assert_eq!(panels[0].disturbed_frac.len(), 2);
    assert_eq!(panels[0].surface_production.len(), 1);
    assert_eq!(panels[1].state, State::KY);
    assert!(panels[1].borders_treated);
    assert_eq!(panels[1].disturbed_frac.len(), 1);
}

#[test]
fn duplicate_county_year_names_key() {
    let csv = format!("{HEADER}Boone,WV,503,1999,0.05,1,2,false\nBoone,WV,503,1999,0.06,1,2,false\n");
    let err = read_county_csv(csv.as_bytes()).unwrap_err();
    assert!(matches!(&err, Error::DuplicateKey(k) if k.contains("Boone") && k.contains("1999")), "{err}");
}

#[test]
fn fraction_out_of_range_reports_row() {
    let csv = format!("{HEADER}Boone,WV,503,1999,0.05,1,2,false\nBoone,WV,503,2000,1.5,1,2,false\n");
    match read_county_csv(csv.as_bytes()).unwrap_err() {
        Error::Parse { row, message } => {
            assert_eq!(row, 3);
            assert!(message.contains("disturbed_frac"));
        }
        e => panic!("{e}"),
    }
}

#[test]
fn county_schema_errors() {
    let missing = "county_id,state,year\nA,WV,1999\n";
    assert!(matches!(read_county_csv(missing.as_bytes()), Err(Error::Parse { row: 1, .. })));
    let bad_number = format!("{HEADER}A,WV,abc,1999,0.1,1,2,false\n");
    assert!(matches!(read_county_csv(bad_number.as_bytes()), Err(Error::Parse { row: 2, .. })));
    let inconsistent = format!("{HEADER}A,WV,10,1999,0.1,1,2,false\nA,WV,11,2000,0.1,1,2,false\n");
    assert!(matches!(read_county_csv(inconsistent.as_bytes()), Err(Error::Parse { row: 3, .. })));
}

const BIRTHS: &str = "county_id,year,birth_weight_g,gestational_age_wk,mother_race,mother_age_band,infant_sex,plurality\n";

#[test]
fn missing_fields_are_loaded_and_tallied() {
    let csv = format!(
        "{BIRTHS}A,1980,,39,white,20-24,male,single\nA,1981,3100,40,,25-29,female,single\nA,1982,2400,36,black,<20,female,multiple\n"
    );
    let load = read_births_csv(csv.as_bytes()).unwrap();
    assert_eq!(load.records.len(), 3);
    assert_eq!(load.missing["birth_weight_g"], 1);
    assert_eq!(load.missing["mother_race"], 1);
    assert_eq!(load.missing["plurality"], 0);
    assert_eq!(load.records[0].birth_weight_g, None);
    assert_eq!(load.records[1].mother_race, None);
    assert_eq!(load.records[2].mother_race, Some(Race::Black));
}

#[test]
fn unknown_age_band_reports_row() {
    let csv = format!("{BIRTHS}A,1980,3000,39,white,20-24,male,single\nA,1980,3000,39,white,teen,male,single\n");
    match read_births_csv(csv.as_bytes()).unwrap_err() {
        Error::Parse { row, message } => {
            assert_eq!(row, 3);
            assert!(message.contains("mother_age_band"), "{message}");
        }
        e => panic!("{e}"),
    }
    let weight = format!("{BIRTHS}A,1980,12000,39,white,20-24,male,single\n");
    assert!(matches!(read_births_csv(weight.as_bytes()), Err(Error::Parse { row: 2, .. })));
}

#[test]
fn sga_table_loads() {
    let csv = "week,sex,p10_grams\n39,male,2900\n39,female,2800\n";
    let t = read_sga_csv(csv.as_bytes()).unwrap();
    assert_eq!(t.threshold(39, Sex::Female), Some(2800.0));
    let dup = "week,sex,p10_grams\n39,male,2900\n39,m,2800\n";
    assert!(matches!(read_sga_csv(dup.as_bytes()), Err(Error::DuplicateKey(_))));
}

#[test]
fn synthetic_study_round_trips() {
    let spec = GeneratorSpec { n_treated: 3, n_control: 4, n_high_production: 1, births_per_cell: 25.0, missing_rate: 0.1, ..Default::default() };
    let study = generate_panel(&spec).unwrap();

    let mut buf = Vec::new();
    write_births_csv(&mut buf, &study.births).unwrap();
    assert_eq!(read_births_csv(buf.as_slice()).unwrap().records, study.births);

    let mut buf = Vec::new();
    write_county_csv(&mut buf, &study.panels).unwrap();
    let mut panels = study.panels.clone();
    panels.sort_by(|a, b| a.county_id.cmp(&b.county_id));
    assert_eq!(read_county_csv(buf.as_slice()).unwrap(), panels);

    let mut buf = Vec::new();
    write_covariates_csv(&mut buf, &study.covariates).unwrap();
    let mut covs = study.covariates.clone();
    covs.sort_by(|a, b| a.county_id.cmp(&b.county_id));
    assert_eq!(read_covariates_csv(buf.as_slice()).unwrap(), covs);

    let dir = tempfile::tempdir().unwrap();
    write_study(dir.path(), &study).unwrap();
    assert_eq!(load_births_csv(&dir.path().join("births.csv")).unwrap().records, study.births);
    assert_eq!(load_county_csv(&dir.path().join("counties.csv")).unwrap(), panels);
    assert_eq!(load_covariates_csv(&dir.path().join("covariates.csv")).unwrap(), covs);
}

#[test]
fn covariate_partial_education_is_error() {
    let mut header = minedid::io::covariate_columns().join(",");
    header.push('\n');
    let mut fields = vec!["A".to_string()];
    fields.extend(std::iter::repeat_n("1".to_string(), 9));
    fields.extend(["0.4", "0.3", "", "0.1"].map(String::from));
    fields.extend(std::iter::repeat_n(String::new(), 12));
    fields.extend(["10", "100"].map(String::from));
    let csv = format!("{header}{}\n", fields.join(","));
    assert!(matches!(read_covariates_csv(csv.as_bytes()), Err(Error::Parse { row: 2, .. })));
    let dup = format!("{header}A{}\nA{}\n", ",".repeat(27), ",".repeat(27));
    assert!(matches!(read_covariates_csv(dup.as_bytes()), Err(Error::DuplicateKey(_))));
}
