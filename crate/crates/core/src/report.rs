//! Run report: typed results plus their rendering as CSV tables and a
//! plain-text summary.
//!
//! Every number is written with six significant digits by [`fmt_num`].
//! Rendering a table, parsing it back and rendering again gives the same
//! bytes.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::cohort::CohortAssignment;
use crate::config::StudyConfig;
use crate::data::CountyId;
use crate::error::{Error, Result};
use crate::fit::CoefficientSummary;
use crate::glm::{ColumnBlock, PairedTTest};
use crate::matching::MatchResult;
use crate::sensitivity::{LatentExposureFit, SensitivityReport};

/// Six significant digits, shortest decimal form, no exponent.
pub fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        return "NaN".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let rounded: f64 = format!("{x:.5e}").parse().expect("formatted float parses");
    format!("{rounded}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(String::new, fmt_num)
}

/// A named CSV table of already formatted cells.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self { name: name.into(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn file_name(&self) -> String {
        format!("{}.csv", self.name)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn from_csv(name: &str, text: &str) -> Result<Self> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let columns = r.headers()?.iter().map(String::from).collect();
        let rows = r
            .records()
            .map(|rec| rec.map(|rec| rec.iter().map(String::from).collect()))
            .collect::<std::result::Result<_, _>>()?;
        Ok(Self { name: name.into(), columns, rows })
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::write(dir.join(self.file_name()), self.to_csv()?)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PretrendBlock {
    pub label: String,
    pub years: crate::data::YearRange,
    pub treated_rates: Vec<f64>,
    pub control_rates: Vec<f64>,
    pub test: PairedTTest,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelBlock {
    pub name: String,
    pub n_obs: usize,
    pub n_clusters: usize,
    pub n_dropped_missing: usize,
    pub converged: bool,
    pub iterations: usize,
    pub log_likelihood: f64,
    /// Summaries paired with the block each coefficient belongs to.
    pub coefficients: Vec<(ColumnBlock, CoefficientSummary)>,
}

impl ModelBlock {
    pub fn treatment(&self) -> Option<&CoefficientSummary> {
        self.coefficients.iter().find(|(b, _)| *b == ColumnBlock::Treatment).map(|(_, s)| s)
    }
}

/// Everything a run produced. Stages that did not run are `None` or empty.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunReport {
    /// "primary control group" or "secondary control group".
    pub label: String,
    pub config: StudyConfig,
    pub cohort: Option<CohortAssignment>,
    pub matching: Option<MatchResult>,
    pub pretrend: Vec<PretrendBlock>,
    pub pretrend_series: Vec<(String, i32, f64)>,
    pub doses: Vec<(CountyId, i32, f64)>,
    pub models: Vec<ModelBlock>,
    pub sensitivity: Option<SensitivityReport>,
    pub theta_grid: Vec<LatentExposureFit>,
    /// Variable → number of records with it missing, as loaded.
    pub missing: BTreeMap<String, usize>,
}

impl RunReport {
    pub fn model(&self, name: &str) -> Option<&ModelBlock> {
        self.models.iter().find(|m| m.name == name)
    }

    pub fn tables(&self) -> Vec<Table> {
        let mut out = Vec::new();
        if let Some(c) = &self.cohort {
            let mut t = Table::new("cohort", &["county_id", "status", "reason"]);
            for id in &c.treated {
                t.push(vec![id.clone(), "treated".into(), String::new()]);
            }
            for id in &c.control_pool {
                t.push(vec![id.clone(), "control_pool".into(), String::new()]);
            }
            for (id, reason) in &c.excluded {
                t.push(vec![id.clone(), "excluded".into(), reason.to_string()]);
            }
            out.push(t);
            let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
            for r in c.excluded.values() {
                *counts.entry(r.as_str()).or_default() += 1;
            }
            let mut t = Table::new("exclusions", &["reason", "count"]);
            for (r, n) in counts {
                t.push(vec![r.into(), n.to_string()]);
            }
            out.push(t);
        }
        if let Some(m) = &self.matching {
            let mut t = Table::new(
                "balance",
                &["covariate", "treated_mean", "matched_mean", "control_all_mean", "smd_matched", "smd_control_all"],
            );
            for r in &m.balance {
                t.push(vec![
                    r.covariate.clone(),
                    fmt_num(r.treated_mean),
                    fmt_num(r.matched_mean),
                    fmt_num(r.pool_mean),
                    fmt_num(r.smd_matched),
                    fmt_num(r.smd_all),
                ]);
            }
            out.push(t);
            let mut t = Table::new("pairs", &["pair", "treated", "control"]);
            for (i, (a, b)) in m.pairs.iter().enumerate() {
                t.push(vec![(i + 1).to_string(), a.clone(), b.clone()]);
            }
            out.push(t);
        }
        if !self.pretrend.is_empty() {
            let mut t = Table::new(
                "pretrend_tests",
                &["period", "years", "t", "df", "p_value", "ci_low", "ci_high", "mean_difference"],
            );
            for b in &self.pretrend {
                let s = &b.test;
                t.push(vec![
                    b.label.clone(),
                    b.years.to_string(),
                    fmt_num(s.t),
                    s.df.to_string(),
                    fmt_num(s.p_value),
                    fmt_num(s.ci_low),
                    fmt_num(s.ci_high),
                    fmt_num(s.mean_diff),
                ]);
            }
            out.push(t);
            let mut t = Table::new("pretrend_pairs", &["period", "pair", "treated_rate", "control_rate"]);
            for b in &self.pretrend {
                for (i, (x, y)) in b.treated_rates.iter().zip(&b.control_rates).enumerate() {
                    t.push(vec![b.label.clone(), (i + 1).to_string(), fmt_num(*x), fmt_num(*y)]);
                }
            }
            out.push(t);
        }
        if !self.pretrend_series.is_empty() {
            let mut t = Table::new("plot_pretrend", &["group", "year", "rate"]);
            for (g, y, r) in &self.pretrend_series {
                t.push(vec![g.clone(), y.to_string(), fmt_num(*r)]);
            }
            out.push(t);
        }
        if !self.doses.is_empty() {
            let mut t = Table::new("plot_dose", &["county_id", "year", "dose"]);
            for (c, y, d) in &self.doses {
                t.push(vec![c.clone(), y.to_string(), fmt_num(*d)]);
            }
            out.push(t);
        }
        for m in &self.models {
            let mut t = Table::new(
                &format!("model_{}", m.name),
                &[
                    "term",
                    "estimate",
                    "naive_se",
                    "robust_se",
                    "statistic",
                    "p_value",
                    "ci_low",
                    "ci_high",
                    "odds_ratio",
                    "or_ci_low",
                    "or_ci_high",
                ],
            );
            for (_, s) in &m.coefficients {
                t.push(vec![
                    s.name.clone(),
                    fmt_num(s.estimate),
                    fmt_num(s.naive_se),
                    fmt_opt(s.robust_se),
                    fmt_num(s.statistic),
                    fmt_num(s.p_value),
                    fmt_num(s.ci_low),
                    fmt_num(s.ci_high),
                    fmt_num(s.odds_ratio),
                    fmt_num(s.or_ci_low),
                    fmt_num(s.or_ci_high),
                ]);
            }
            out.push(t);
        }
        if !self.models.is_empty() {
            let mut t = Table::new(
                "models",
                &["model", "n_obs", "n_clusters", "n_dropped_missing", "converged", "iterations", "log_likelihood"],
            );
            for m in &self.models {
                t.push(vec![
                    m.name.clone(),
                    m.n_obs.to_string(),
                    m.n_clusters.to_string(),
                    m.n_dropped_missing.to_string(),
                    m.converged.to_string(),
                    m.iterations.to_string(),
                    fmt_num(m.log_likelihood),
                ]);
            }
            out.push(t);
        }
        if let Some(s) = &self.sensitivity {
            let mut t = Table::new(
                "sensitivity",
                &["prevalence", "confounder_or", "estimate", "se", "p_value", "significant", "converged"],
            );
            for r in &s.rows {
                t.push(vec![
                    fmt_num(r.prevalence),
                    fmt_num(r.outcome_or),
                    fmt_num(r.estimate),
                    fmt_num(r.se),
                    fmt_num(r.p_value),
                    r.significant.to_string(),
                    r.converged.to_string(),
                ]);
            }
            out.push(t);
            let mut t = Table::new("sensitivity_frontier", &["prevalence", "smallest_or_losing_significance"]);
            for (p, g) in &s.frontier {
                t.push(vec![fmt_num(*p), fmt_opt(*g)]);
            }
            out.push(t);
        }
        if !self.theta_grid.is_empty() {
            let mut t = Table::new(
                "theta_grid",
                &["theta", "tau", "exp_tau", "adjusted_se", "unadjusted_se", "design_effect", "em_iterations", "converged"],
            );
            for f in &self.theta_grid {
                t.push(vec![
                    fmt_num(f.theta),
                    fmt_num(f.tau),
                    fmt_num(f.odds_ratio),
                    fmt_num(f.tau_se),
                    fmt_num(f.tau_se_unadjusted),
                    fmt_num(f.design_effect),
                    f.em_iterations.to_string(),
                    f.converged.to_string(),
                ]);
            }
            out.push(t);
        }
        if !self.missing.is_empty() || !self.models.is_empty() {
            let mut t = Table::new("missing", &["variable", "count"]);
            for (k, v) in &self.missing {
                t.push(vec![k.clone(), v.to_string()]);
            }
            for m in &self.models {
                t.push(vec![format!("dropped:{}", m.name), m.n_dropped_missing.to_string()]);
            }
            out.push(t);
        }
        out
    }

    /// Plain-text summary of the run.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        let cfg = &self.config;
        let _ = writeln!(s, "Run: {}", self.label);
        let _ = writeln!(
            s,
            "Outcome: {}; pre-period {}; post-period {}; alpha {}",
            cfg.outcome.as_str(),
            cfg.effective_pre_period(),
            cfg.post_period,
            fmt_num(cfg.alpha)
        );
        if let Some(c) = &self.cohort {
            let _ = writeln!(
                s,
                "\nCohort: {} treated, {} in control pool, {} excluded ({} counties)",
                c.treated.len(),
                c.control_pool.len(),
                c.excluded.len(),
                c.total()
            );
        }
        if let Some(m) = &self.matching {
            let _ = writeln!(s, "\nMatching: {} pairs, total distance {}", m.pairs.len(), fmt_num(m.total_distance));
            if m.diagonal_fallback {
                let _ = writeln!(s, "  (rank covariance singular; diagonal scaling used)");
            }
            let _ = writeln!(s, "  {:<28} {:>12} {:>12}", "covariate", "SMD matched", "SMD all");
            for r in &m.balance {
                let _ = writeln!(s, "  {:<28} {:>12} {:>12}", r.covariate, fmt_num(r.smd_matched), fmt_num(r.smd_all));
            }
        }
        for b in &self.pretrend {
            let t = &b.test;
            let _ = writeln!(
                s,
                "\nPaired t-test of pre-period rates ({}, {}): t = {}, df = {}, p-value = {}, 95% CI [{}, {}], mean difference {}",
                b.label,
                b.years,
                fmt_num(t.t),
                t.df,
                fmt_num(t.p_value),
                fmt_num(t.ci_low),
                fmt_num(t.ci_high),
                fmt_num(t.mean_diff)
            );
        }
        for m in &self.models {
            let _ = writeln!(
                s,
                "\nModel {}: n = {}, clusters = {}, dropped for missing data = {}, converged = {} in {} iterations",
                m.name, m.n_obs, m.n_clusters, m.n_dropped_missing, m.converged, m.iterations
            );
            for (block, c) in &m.coefficients {
                if matches!(block, ColumnBlock::Treatment | ColumnBlock::Individual) {
                    let _ = writeln!(
                        s,
                        "  {:<24} est {:>10}  naive SE {:>10}  robust SE {:>10}  p {:>10}  OR {:>10} [{}, {}]",
                        c.name,
                        fmt_num(c.estimate),
                        fmt_num(c.naive_se),
                        fmt_opt(c.robust_se),
                        fmt_num(c.p_value),
                        fmt_num(c.odds_ratio),
                        fmt_num(c.or_ci_low),
                        fmt_num(c.or_ci_high)
                    );
                }
            }
        }
        if let Some(sens) = &self.sensitivity {
            match &sens.skipped {
                Some(reason) => {
                    let _ = writeln!(s, "\nSensitivity sweep skipped: {reason}");
                }
                None => {
                    let _ = writeln!(s, "\nSensitivity frontier (smallest confounder OR removing significance):");
                    for (p, g) in &sens.frontier {
                        let g = g.map_or_else(|| "none in grid".to_string(), fmt_num);
                        let _ = writeln!(s, "  prevalence {}: {}", fmt_num(*p), g);
                    }
                }
            }
        }
        if !self.theta_grid.is_empty() {
            let _ = writeln!(s, "\nLatent exposure model (EM):");
            for f in &self.theta_grid {
                let _ = writeln!(
                    s,
                    "  theta {:>4}  tau {:>10}  exp(tau) {:>10}  adjusted SE {:>10}",
                    fmt_num(f.theta),
                    fmt_num(f.tau),
                    fmt_num(f.odds_ratio),
                    fmt_num(f.tau_se)
                );
            }
        }
        if !self.missing.is_empty() {
            let _ = writeln!(s, "\nFrequencies of missing values by variable:");
            for (k, v) in &self.missing {
                let _ = writeln!(s, "  {k} {v}");
            }
        }
        s
    }
}
