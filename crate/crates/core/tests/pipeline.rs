use std::fs;
use std::path::Path;

use minedid::io::write_study;
use minedid::pipeline::{run_pipeline, run_stages, PipelineInputs, Stage};
use minedid::report::Table;
use minedid::synthgen::{generate_panel, GeneratorSpec, TrueModel};
use minedid::{Error, StudyConfig};

fn spec(model: TrueModel, seed: u64) -> GeneratorSpec {
    GeneratorSpec {
        n_treated: 6,
        n_control: 12,
        n_high_production: 2,
        births_per_cell: 60.0,
        covariate_shift: 1.0,
        true_model: model,
        rng_seed: seed,
        ..Default::default()
    }
}

fn write_inputs(dir: &Path, spec: &GeneratorSpec) -> PipelineInputs {
    write_study(dir, &generate_panel(spec).unwrap()).unwrap();
    PipelineInputs::in_dir(dir)
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap())
        .map(|e| (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap()))
        .collect();
    out.sort();
    out
}

#[test]
fn null_effect_run_skips_sweep() {
    let tmp = tempfile::tempdir().unwrap();
    let inputs = write_inputs(&tmp.path().join("in"), &spec(TrueModel::Binary { beta: 0.0 }, 36));
    let out = tmp.path().join("out");
    let report = run_pipeline(&StudyConfig::default(), &inputs, &out).unwrap();
    let primary = report.model("primary_dose").unwrap().treatment().unwrap().clone();
    assert!(!primary.significant(0.05), "{primary:?}");
    let sweep = report.sensitivity.as_ref().unwrap();
    assert_eq!(sweep.skipped.as_deref(), Some("primary not significant"));
    assert_eq!(report.theta_grid.len(), 10);
    assert_eq!(report.label, "primary control group");
    let cohort = report.cohort.as_ref().unwrap();
    assert_eq!(cohort.treated.len(), 6);
    assert_eq!(cohort.excluded.len(), 2);
    assert_eq!(report.matching.as_ref().unwrap().pairs.len(), 6);
    assert_eq!(report.pretrend[0].test.df, 5);

    let manifest = fs::read_to_string(out.join("MANIFEST")).unwrap();
    assert!(manifest.starts_with("status: complete"), "{manifest}");
    assert!(manifest.contains("sensitivity\tskipped: primary not significant"));
    for name in ["cohort", "balance", "pairs", "pretrend_tests", "plot_pretrend", "plot_dose", "model_primary_dose", "model_test_of_controls", "theta_grid", "missing", "exclusions"] {
        assert!(out.join(format!("{name}.csv")).exists(), "{name}");
    }
    let summary = fs::read_to_string(out.join("summary.txt")).unwrap();
    assert!(summary.contains("Sensitivity sweep skipped: primary not significant"));
}

#[test]
fn every_table_round_trips() {
    let tmp = tempfile::tempdir().unwrap();
    let inputs = write_inputs(&tmp.path().join("in"), &spec(TrueModel::Dose { chi: 1.25f64.ln() }, 32));
    let out = tmp.path().join("out");
    let report = run_pipeline(&StudyConfig::default(), &inputs, &out).unwrap();
    assert_eq!(report.theta_grid.len(), 10);
    assert_eq!(report.models.len(), 4);
    for t in report.tables() {
        let text = fs::read_to_string(out.join(t.file_name())).unwrap();
        let back = Table::from_csv(&t.name, &text).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.to_csv().unwrap(), text);
    }
}

#[test]
fn border_exclusion_labels_secondary_group() {
    let tmp = tempfile::tempdir().unwrap();
    let inputs = write_inputs(&tmp.path().join("in"), &spec(TrueModel::Dose { chi: 0.0 }, 33));
    let cfg = StudyConfig { exclude_border_controls: true, ..Default::default() };
    let out = tmp.path().join("out");
    let report = run_stages(&cfg, &inputs, &out, &[Stage::Matching]).unwrap();
    assert_eq!(report.label, "secondary control group");
    assert!(report.cohort.as_ref().unwrap().excluded.values().any(|r| r.as_str() == "border_excluded"));
    assert!(fs::read_to_string(out.join("summary.txt")).unwrap().starts_with("Run: secondary control group"));
    assert!(report.models.is_empty());
}

#[test]
fn identical_inputs_give_identical_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let inputs = write_inputs(&tmp.path().join("in"), &spec(TrueModel::Dose { chi: 10.0 }, 34));
    let cfg = StudyConfig::default();
    run_pipeline(&cfg, &inputs, &tmp.path().join("a")).unwrap();
    run_pipeline(&cfg, &inputs, &tmp.path().join("b")).unwrap();
    assert_eq!(files(&tmp.path().join("a")), files(&tmp.path().join("b")));
}

#[test]
fn stage_failure_is_tagged_and_partial_output_flushed() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("in");
    let inputs = write_inputs(&dir, &spec(TrueModel::Dose { chi: 0.0 }, 35));
    let cov = fs::read_to_string(&inputs.covariates).unwrap();
    let trimmed: Vec<&str> = cov.lines().filter(|l| !l.starts_with("trt-002")).collect();
    fs::write(&inputs.covariates, trimmed.join("\n") + "\n").unwrap();
    let out = tmp.path().join("out");
    let err = run_pipeline(&StudyConfig::default(), &inputs, &out).unwrap_err();
    assert!(matches!(&err, Error::Stage { stage: "covariates", .. }), "{err}");
    assert!(err.to_string().contains("trt-002"));
    let manifest = fs::read_to_string(out.join("MANIFEST")).unwrap();
    assert!(manifest.starts_with("status: incomplete"));
    assert!(manifest.contains("cohort\tcompleted"));
    assert!(manifest.contains("matching\tnot run"));
    assert!(out.join("cohort.csv").exists());
    assert!(!out.join("pairs.csv").exists());
}

#[test]
fn missing_input_fails_load_stage() {
    let tmp = tempfile::tempdir().unwrap();
    let inputs = PipelineInputs::in_dir(&tmp.path().join("nowhere"));
    let err = run_pipeline(&StudyConfig::default(), &inputs, &tmp.path().join("out")).unwrap_err();
    assert!(matches!(err, Error::Stage { stage: "load", .. }));
    assert!(tmp.path().join("out/MANIFEST").exists());
}
