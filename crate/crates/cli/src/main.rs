//! `minedid` command-line driver.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use minedid::config::DistanceKind;
use minedid::io::write_study;
use minedid::pipeline::{run_stages, PipelineInputs, Stage};
use minedid::synthgen::{generate_panel, GeneratorSpec, PlantedConfounder, TrueModel};
use minedid::{Outcome, StudyConfig};

#[derive(Parser)]
#[command(name = "minedid", version, about = "Matched difference-in-differences for county exposure studies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Select treated counties and the control pool.
    Cohort(RunArgs),
    /// Cohort selection plus optimal pair matching and balance tables.
    Match(RunArgs),
    /// Matching, pre-trend tests and the dose and binary DiD models.
    Fit(RunArgs),
    /// Pre-period pseudo-treatment test of controls.
    TestControls(RunArgs),
    /// Unmeasured-confounder sweep on the primary model.
    Sensitivity(RunArgs),
    /// Latent exposure model over the theta grid.
    Em(RunArgs),
    /// The full protocol.
    RunAll(RunArgs),
    /// Write synthetic inputs with known parameters.
    Simulate(SimulateArgs),
    /// Print the default study configuration as TOML.
    PrintConfig,
}

#[derive(Args)]
struct RunArgs {
    /// Directory holding counties.csv, covariates.csv and births.csv.
    #[arg(long, short = 'i')]
    input_dir: Option<PathBuf>,
    #[arg(long)]
    counties: Option<PathBuf>,
    #[arg(long)]
    covariates: Option<PathBuf>,
    #[arg(long)]
    births: Option<PathBuf>,
    /// SGA reference table (week, sex, p10_grams); needed for --outcome sga.
    #[arg(long)]
    sga_table: Option<PathBuf>,
    /// Output directory for tables, summary.txt and MANIFEST.
    #[arg(long, short = 'o')]
    out: PathBuf,
    /// Study configuration (TOML). Flags below override it.
    #[arg(long, short = 'c')]
    config: Option<PathBuf>,
    #[arg(long)]
    outcome: Option<String>,
    #[arg(long)]
    treated_threshold: Option<f64>,
    #[arg(long)]
    control_surface_max: Option<f64>,
    #[arg(long)]
    control_total_max: Option<f64>,
    #[arg(long)]
    total_per_sq_mi: bool,
    #[arg(long)]
    exclude_border_controls: bool,
    #[arg(long, value_enum)]
    distance: Option<DistanceArg>,
    #[arg(long)]
    caliper: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Comma-separated theta values.
    #[arg(long, value_delimiter = ',')]
    theta_grid: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    confounder_prevalences: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    confounder_odds_ratios: Option<Vec<f64>>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum DistanceArg {
    RankMahalanobis,
    Mahalanobis,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Dose,
    Binary,
    Latent,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, short = 'o')]
    out: PathBuf,
    /// Generator spec (TOML). Flags below override it.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    n_treated: Option<usize>,
    #[arg(long)]
    n_control: Option<usize>,
    #[arg(long)]
    n_high_production: Option<usize>,
    #[arg(long)]
    births_per_cell: Option<f64>,
    #[arg(long, value_enum)]
    model: Option<ModelArg>,
    /// Dose coefficient, binary coefficient or latent effect, by model.
    #[arg(long)]
    effect: Option<f64>,
    /// Share of affected mothers per unit dose (latent model).
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    confounder_prevalence: Option<f64>,
    #[arg(long)]
    confounder_or: Option<f64>,
    /// Extra treated-county log-odds per pre-period year.
    #[arg(long)]
    differential_trend: Option<f64>,
    #[arg(long)]
    missing_rate: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

fn study_config(a: &RunArgs) -> minedid::Result<StudyConfig> {
    let mut cfg = match &a.config {
        Some(p) => StudyConfig::load(p)?,
        None => StudyConfig::default(),
    };
    if let Some(o) = &a.outcome {
        cfg.outcome = o.parse::<Outcome>()?;
    }
    if let Some(v) = a.treated_threshold {
        cfg.treated_threshold = v;
    }
    if let Some(v) = a.control_surface_max {
        cfg.control_surface_max = v;
    }
    if let Some(v) = a.control_total_max {
        cfg.control_total_max = v;
    }
    cfg.total_per_sq_mi |= a.total_per_sq_mi;
    cfg.exclude_border_controls |= a.exclude_border_controls;
    if let Some(d) = a.distance {
        cfg.distance = match d {
            DistanceArg::RankMahalanobis => DistanceKind::RankMahalanobis,
            DistanceArg::Mahalanobis => DistanceKind::Mahalanobis,
        };
    }
    if a.caliper.is_some() {
        cfg.caliper = a.caliper;
    }
    if let Some(v) = a.alpha {
        cfg.alpha = v;
    }
    if let Some(v) = &a.theta_grid {
        cfg.theta_grid = v.clone();
    }
    if let Some(v) = &a.confounder_prevalences {
        cfg.confounder_prevalences = v.clone();
    }
    if let Some(v) = &a.confounder_odds_ratios {
        cfg.confounder_odds_ratios = v.clone();
    }
    if let Some(v) = a.seed {
        cfg.rng_seed = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn pipeline_inputs(a: &RunArgs) -> minedid::Result<PipelineInputs> {
    let base = a.input_dir.as_deref().map(PipelineInputs::in_dir);
    let pick = |flag: &Option<PathBuf>, from_dir: Option<PathBuf>, name: &str| {
        flag.clone()
            .or(from_dir)
            .ok_or_else(|| minedid::Error::Config(format!("--{name} or --input-dir is required")))
    };
    Ok(PipelineInputs {
        counties: pick(&a.counties, base.as_ref().map(|b| b.counties.clone()), "counties")?,
        covariates: pick(&a.covariates, base.as_ref().map(|b| b.covariates.clone()), "covariates")?,
        births: pick(&a.births, base.as_ref().map(|b| b.births.clone()), "births")?,
        sga_table: a.sga_table.clone(),
    })
}

fn run(a: &RunArgs, targets: &[Stage]) -> minedid::Result<()> {
    let cfg = study_config(a)?;
    let inputs = pipeline_inputs(a)?;
    let report = run_stages(&cfg, &inputs, &a.out, targets)?;
    print!("{}", report.summary());
    Ok(())
}

fn simulate(a: &SimulateArgs) -> minedid::Result<()> {
    let mut spec = match &a.spec {
        Some(p) => GeneratorSpec::from_toml_str(&std::fs::read_to_string(p)?)?,
        None => GeneratorSpec::default(),
    };
    macro_rules! set {
        ($($field:ident),*) => {$(if let Some(v) = a.$field { spec.$field = v; })*};
    }
    set!(n_treated, n_control, n_high_production, births_per_cell, missing_rate);
    if let Some(v) = a.seed {
        spec.rng_seed = v;
    }
    if a.differential_trend.is_some() {
        spec.differential_trend = a.differential_trend;
    }
    if let Some(m) = a.model {
        let effect = a.effect.unwrap_or(0.0);
        spec.true_model = match m {
            ModelArg::Dose => TrueModel::Dose { chi: effect },
            ModelArg::Binary => TrueModel::Binary { beta: effect },
            ModelArg::Latent => TrueModel::Latent { theta: a.theta.unwrap_or(5.0), tau: effect },
        };
    } else if a.effect.is_some() || a.theta.is_some() {
        return Err(minedid::Error::Config("--effect and --theta need --model".into()));
    }
    match (a.confounder_prevalence, a.confounder_or) {
        (Some(prevalence), Some(odds_ratio)) => spec.planted_confounder = Some(PlantedConfounder { prevalence, odds_ratio }),
        (None, None) => {}
        _ => return Err(minedid::Error::Config("--confounder-prevalence and --confounder-or go together".into())),
    }
    let study = generate_panel(&spec)?;
    write_study(&a.out, &study)?;
    std::fs::write(a.out.join("generator_spec.toml"), spec.to_toml_string())?;
    println!(
        "wrote {} counties and {} births to {}",
        study.panels.len(),
        study.births.len(),
        a.out.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Cohort(a) => run(a, &[Stage::Cohort]),
        Command::Match(a) => run(a, &[Stage::Matching]),
        Command::Fit(a) => run(a, &[Stage::Pretrend, Stage::PrimaryModel, Stage::SecondaryModels]),
        Command::TestControls(a) => run(a, &[Stage::TestOfControls]),
        Command::Sensitivity(a) => run(a, &[Stage::Sensitivity]),
        Command::Em(a) => run(a, &[Stage::ThetaGrid]),
        Command::RunAll(a) => run(a, &Stage::ALL),
        Command::Simulate(a) => simulate(a),
        Command::PrintConfig => {
            print!("{}", StudyConfig::default().to_toml_string());
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
