//! End-to-end orchestration: load, cohort, matching, pre-trend tests,
//! dose, models, test of controls, sensitivity sweep and the latent
//! exposure grid.
//!
//! Stages run in order. Requesting a stage also runs the stages it depends
//! on. Whatever completed is written to the output directory even when a
//! later stage fails, together with a `MANIFEST` recording each stage's
//! status.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use log::info;

use crate::cohort::{aggregate_covariates, select_controls, select_treated, RawCountyCovariates};
use crate::config::StudyConfig;
use crate::data::{CountyId, CountyPanel, CovariateVector, YearRange};
use crate::did::{
    compute_doses, fit_prepared, prepare, pretrend_rates, test_of_controls, AnalysisData, DidInputs, DoseAssignment,
    RateSeries, SampleSpec,
};
use crate::error::{Error, Result};
use crate::fit::FitResult;
use crate::glm::paired_t_test;
use crate::io::{load_births_csv, load_county_csv, load_covariates_csv, load_sga_csv, BirthLoad};
use crate::matching::match_counties;
use crate::outcome::SgaTable;
use crate::report::{ModelBlock, PretrendBlock, RunReport};
use crate::sensitivity::{confounder_sweep, design_effect, theta_grid_report, ConfounderSpec, LatentExposureModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Load,
    Cohort,
    Covariates,
    Matching,
    Pretrend,
    Dose,
    PrimaryModel,
    SecondaryModels,
    TestOfControls,
    Sensitivity,
    ThetaGrid,
}

impl Stage {
    pub const ALL: [Stage; 11] = [
        Stage::Load,
        Stage::Cohort,
        Stage::Covariates,
        Stage::Matching,
        Stage::Pretrend,
        Stage::Dose,
        Stage::PrimaryModel,
        Stage::SecondaryModels,
        Stage::TestOfControls,
        Stage::Sensitivity,
        Stage::ThetaGrid,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Load => "load",
            Stage::Cohort => "cohort",
            Stage::Covariates => "covariates",
            Stage::Matching => "matching",
            Stage::Pretrend => "pretrend",
            Stage::Dose => "dose",
            Stage::PrimaryModel => "primary_model",
            Stage::SecondaryModels => "secondary_models",
            Stage::TestOfControls => "test_of_controls",
            Stage::Sensitivity => "sensitivity",
            Stage::ThetaGrid => "theta_grid",
        }
    }

    fn prerequisites(self) -> &'static [Stage] {
        match self {
            Stage::Load => &[],
            Stage::Cohort => &[Stage::Load],
            Stage::Covariates => &[Stage::Cohort],
            Stage::Matching => &[Stage::Covariates],
            Stage::Pretrend | Stage::Dose => &[Stage::Matching],
            Stage::PrimaryModel | Stage::SecondaryModels | Stage::TestOfControls => &[Stage::Dose],
            Stage::Sensitivity => &[Stage::PrimaryModel],
            Stage::ThetaGrid => &[Stage::PrimaryModel, Stage::SecondaryModels],
        }
    }

    /// `targets` plus everything they depend on.
    pub fn closure(targets: &[Stage]) -> BTreeSet<Stage> {
        let mut out = BTreeSet::new();
        let mut stack = targets.to_vec();
        while let Some(s) = stack.pop() {
            if out.insert(s) {
                stack.extend_from_slice(s.prerequisites());
            }
        }
        out
    }
}

/// Input file locations.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineInputs {
    pub counties: PathBuf,
    pub covariates: PathBuf,
    pub births: PathBuf,
    pub sga_table: Option<PathBuf>,
}

impl PipelineInputs {
    /// `counties.csv`, `covariates.csv` and `births.csv` in `dir`.
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            counties: dir.join("counties.csv"),
            covariates: dir.join("covariates.csv"),
            births: dir.join("births.csv"),
            sga_table: None,
        }
    }

    pub fn load(&self) -> Result<LoadedInputs> {
        Ok(LoadedInputs {
            panels: load_county_csv(&self.counties)?,
            covariates: load_covariates_csv(&self.covariates)?,
            births: load_births_csv(&self.births)?,
            sga_table: self.sga_table.as_deref().map(load_sga_csv).transpose()?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedInputs {
    pub panels: Vec<CountyPanel>,
    pub covariates: Vec<RawCountyCovariates>,
    pub births: BirthLoad,
    pub sga_table: Option<SgaTable>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StageStatus {
    Completed,
    Skipped(String),
    Failed(String),
    NotRun,
}

impl std::fmt::Display for StageStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StageStatus::Completed => f.write_str("completed"),
            StageStatus::Skipped(r) => write!(f, "skipped: {r}"),
            StageStatus::Failed(e) => write!(f, "failed: {e}"),
            StageStatus::NotRun => f.write_str("not run"),
        }
    }
}

/// A finished or aborted run.
#[derive(Debug)]
pub struct RunOutcome {
    pub report: RunReport,
    pub stages: Vec<(Stage, StageStatus)>,
    pub error: Option<Error>,
}

impl RunOutcome {
    pub fn into_result(self) -> Result<RunReport> {
        match self.error {
            Some(e) => Err(e),
            None => Ok(self.report),
        }
    }

    pub fn manifest(&self, files: &[String]) -> String {
        let mut s = String::new();
        match &self.error {
            None => s.push_str("status: complete\n"),
            Some(e) => {
                let _ = writeln!(s, "status: incomplete ({e})");
            }
        }
        s.push_str("\nstages:\n");
        for (stage, status) in &self.stages {
            let _ = writeln!(s, "{}\t{}", stage.name(), status);
        }
        s.push_str("\nfiles:\n");
        for f in files {
            let _ = writeln!(s, "{f}");
        }
        s
    }

    /// Write every table, `summary.txt` and `MANIFEST` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut files = Vec::new();
        for t in self.report.tables() {
            t.write(dir)?;
            files.push(t.file_name());
        }
        std::fs::write(dir.join("summary.txt"), self.report.summary())?;
        files.push("summary.txt".into());
        std::fs::write(dir.join("MANIFEST"), self.manifest(&files))?;
        Ok(())
    }
}

#[derive(Default)]
struct Work {
    treated: Vec<CountyId>,
    covariates: BTreeMap<CountyId, CovariateVector>,
    doses: Option<DoseAssignment>,
    primary: Option<FitResult>,
    binary: Option<(AnalysisData, FitResult)>,
}

fn model_block(name: &str, fit: &FitResult, alpha: f64) -> ModelBlock {
    ModelBlock {
        name: name.into(),
        n_obs: fit.n_obs,
        n_clusters: fit.n_clusters,
        n_dropped_missing: fit.n_dropped_missing,
        converged: fit.converged,
        iterations: fit.iterations,
        log_likelihood: fit.log_likelihood,
        coefficients: fit.columns.iter().map(|c| c.block).zip(fit.all_summaries(alpha)).collect(),
    }
}

fn run_stage(stage: Stage, cfg: &StudyConfig, data: &LoadedInputs, report: &mut RunReport, work: &mut Work) -> Result<Option<String>> {
    let alpha = cfg.alpha;
    let inputs = |doses| DidInputs { births: &data.births.records, doses, cfg, sga_table: data.sga_table.as_ref() };
    match stage {
        Stage::Load => {
            report.missing = data.births.missing.clone();
        }
        Stage::Cohort => {
            let treated = select_treated(&data.panels, cfg)?;
            let cohort = select_controls(&data.panels, cfg, &treated)?;
            work.treated = cohort.treated.clone();
            if cohort.treated.is_empty() {
                return Err(Error::Data("no county meets the treatment rule".into()));
            }
            report.cohort = Some(cohort);
        }
        Stage::Covariates => {
            let cohort = report.cohort.as_ref().expect("cohort ran");
            let wanted: BTreeSet<&str> =
                cohort.treated.iter().chain(&cohort.control_pool).map(String::as_str).collect();
            for raw in data.covariates.iter().filter(|r| wanted.contains(r.county_id.as_str())) {
                work.covariates.insert(raw.county_id.clone(), aggregate_covariates(raw)?);
            }
            let missing: Vec<&str> = wanted.iter().copied().filter(|id| !work.covariates.contains_key(*id)).collect();
            if !missing.is_empty() {
                return Err(Error::Data(format!("no covariate row for {}", missing.join(", "))));
            }
        }
        Stage::Matching => {
            let cohort = report.cohort.as_ref().expect("cohort ran");
            report.matching = Some(match_counties(&work.covariates, &cohort.treated, &cohort.control_pool, cfg)?);
        }
        Stage::Pretrend => {
            let pairs = &report.matching.as_ref().expect("matching ran").pairs;
            let rates = RateSeries::from_births(&data.births.records, cfg, data.sga_table.as_ref())?;
            let pre = cfg.effective_pre_period();
            let first = rates.counts.values().filter_map(|m| m.keys().next()).min().copied().unwrap_or(pre.start);
            let mut windows = vec![("study_pre_period".to_string(), pre)];
            if first < pre.start {
                windows.push(("all_pre_years".to_string(), YearRange::new(first, pre.end)));
            }
            for (label, years) in windows {
                let (t, c) = pretrend_rates(&rates, pairs, years)?;
                let test = paired_t_test(&t, &c)?;
                report.pretrend.push(PretrendBlock { label, years, treated_rates: t, control_rates: c, test });
            }
            let span = YearRange::new(first.min(pre.start), pre.end);
            let treated: Vec<CountyId> = pairs.iter().map(|(t, _)| t.clone()).collect();
            let controls: Vec<CountyId> = pairs.iter().map(|(_, c)| c.clone()).collect();
            for (group, ids) in [("treated", &treated), ("matched_control", &controls)] {
                for (y, r) in rates.group_series(ids, span) {
                    report.pretrend_series.push((group.into(), y, r));
                }
            }
        }
        Stage::Dose => {
            let m = report.matching.as_ref().expect("matching ran");
            let controls: Vec<CountyId> = m.matched_controls().cloned().collect();
            let doses = compute_doses(&data.panels, &work.treated, &controls, cfg)?;
            report.doses = doses.post_doses();
            work.doses = Some(doses);
        }
        Stage::PrimaryModel => {
            let doses = work.doses.as_ref().expect("dose ran");
            let fit = fit_prepared(&prepare(&inputs(doses), &SampleSpec::primary())?)?;
            report.models.push(model_block("primary_dose", &fit, alpha));
            work.primary = Some(fit);
        }
        Stage::SecondaryModels => {
            let doses = work.doses.as_ref().expect("dose ran");
            let data = prepare(&inputs(doses), &SampleSpec::binary())?;
            let fit = fit_prepared(&data)?;
            report.models.push(model_block("secondary_binary", &fit, alpha));
            let treated_only = fit_prepared(&prepare(&inputs(doses), &SampleSpec::treated_only())?)?;
            report.models.push(model_block("treated_only_dose", &treated_only, alpha));
            work.binary = Some((data, fit));
        }
        Stage::TestOfControls => {
            let doses = work.doses.as_ref().expect("dose ran");
            let fit = test_of_controls(&inputs(doses))?;
            report.models.push(model_block("test_of_controls", &fit, alpha));
        }
        Stage::Sensitivity => {
            let doses = work.doses.as_ref().expect("dose ran");
            let primary = work.primary.as_ref().expect("primary ran");
            let grid = ConfounderSpec::grid(&cfg.confounder_prevalences, &cfg.confounder_odds_ratios);
            let sweep = confounder_sweep(&inputs(doses), primary, &grid, alpha)?;
            let skipped = sweep.skipped.clone();
            report.sensitivity = Some(sweep);
            return Ok(skipped);
        }
        Stage::ThetaGrid => {
            let primary = work.primary.as_ref().expect("primary ran");
            let (data, fit) = work.binary.take().expect("secondary models ran");
            let model = LatentExposureModel::from_parts(data, &fit, design_effect(primary)?)?;
            report.theta_grid = theta_grid_report(&model, &cfg.theta_grid)?;
        }
    }
    Ok(None)
}

/// Run `targets` and their prerequisites on loaded inputs. Never panics on
/// stage failure; the error is carried in the outcome.
pub fn execute(cfg: &StudyConfig, data: &LoadedInputs, targets: &[Stage]) -> RunOutcome {
    let needed = Stage::closure(targets);
    let mut report = RunReport {
        label: if cfg.exclude_border_controls { "secondary control group" } else { "primary control group" }.into(),
        config: cfg.clone(),
        ..Default::default()
    };
    let mut work = Work::default();
    let mut stages = Vec::new();
    let mut error = None;
    if let Err(e) = cfg.validate() {
        error = Some(Error::Stage { stage: "config", source: Box::new(e) });
    }
    for stage in Stage::ALL.into_iter().filter(|s| needed.contains(s)) {
        if error.is_some() {
            stages.push((stage, StageStatus::NotRun));
            continue;
        }
        info!("stage {}", stage.name());
        match run_stage(stage, cfg, data, &mut report, &mut work) {
            Ok(None) => stages.push((stage, StageStatus::Completed)),
            Ok(Some(reason)) => stages.push((stage, StageStatus::Skipped(reason))),
            Err(e) => {
                stages.push((stage, StageStatus::Failed(e.to_string())));
                error = Some(Error::Stage { stage: stage.name(), source: Box::new(e) });
            }
        }
    }
    RunOutcome { report, stages, error }
}

/// Load inputs, run `targets` and write results to `out_dir`.
pub fn run_stages(cfg: &StudyConfig, inputs: &PipelineInputs, out_dir: &Path, targets: &[Stage]) -> Result<RunReport> {
    let outcome = match inputs.load() {
        Ok(data) => execute(cfg, &data, targets),
        Err(e) => RunOutcome {
            report: RunReport::default(),
            stages: vec![(Stage::Load, StageStatus::Failed(e.to_string()))],
            error: Some(Error::Stage { stage: Stage::Load.name(), source: Box::new(e) }),
        },
    };
    outcome.write(out_dir)?;
    outcome.into_result()
}

/// The full protocol.
pub fn run_pipeline(cfg: &StudyConfig, inputs: &PipelineInputs, out_dir: &Path) -> Result<RunReport> {
    run_stages(cfg, inputs, out_dir, &Stage::ALL)
}
