//! Sensitivity analyses built on a two-component logistic mixture.
//!
//! Both analyses add a binary latent indicator `W` to the birth-level model.
//! Each row has a known probability `π` that `W = 1`. The latent-exposure
//! model estimates the effect of `W` (with `π = θ·D`), while the confounder
//! sweep holds it fixed at `ln Γ` (with `π` the confounder prevalence among
//! treated post-period births). Estimation is by EM on rows duplicated as
//! `W = 1` and `W = 0` and weighted by the posterior of `W`. Standard errors
//! come from the observed information (Louis' identity) multiplied by the
//! design effect of the primary dose model.

use std::collections::BTreeMap;

use log::warn;
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::did::{fit_prepared, prepare, AnalysisData, DidInputs, SampleSpec};
use crate::error::{Error, Result};
use crate::fit::{wald, FitResult};
use crate::glm::{
    bernoulli_loglik, fit_logistic_with, inv_logit, invert_information, score_and_information, Column, ColumnBlock,
    DesignMatrix, IrlsOptions,
};

/// EM stops once the observed log-likelihood changes by less than this.
pub const EM_TOL: f64 = 1e-8;
pub const EM_MAX_ITER: usize = 5000;
const THETA_SLACK: f64 = 1e-12;
const SQUAREM_STEP_GROWTH: f64 = 4.0;

/// `robust_var / naive_var`, applied to `target_var`.
pub fn design_effect_adjust(robust_var: f64, naive_var: f64, target_var: f64) -> Result<f64> {
    if !(naive_var > 0.0) {
        return Err(Error::Validation(format!("naive variance must be positive, got {naive_var}")));
    }
    if !(robust_var >= 0.0) {
        return Err(Error::Validation(format!("robust variance must be non-negative, got {robust_var}")));
    }
    Ok(target_var * robust_var / naive_var)
}

/// Design effect of the treatment coefficient of a clustered fit.
pub fn design_effect(fit: &FitResult) -> Result<f64> {
    let j = fit.treatment_index().ok_or_else(|| Error::Validation("fit has no treatment column".into()))?;
    let robust = fit
        .robust_covariance
        .as_ref()
        .ok_or_else(|| Error::Validation("fit has no cluster-robust covariance".into()))?[(j, j)];
    design_effect_adjust(robust, fit.naive_covariance[(j, j)], 1.0)
}

/// How the latent indicator enters the linear predictor.
#[derive(Debug, Clone, Copy, PartialEq)]
enum LatentEffect {
    /// Estimated coefficient on this column.
    Free(usize),
    /// Known offset.
    Fixed(f64),
}

/// Rows of the augmented design belonging to one original observation.
#[derive(Debug, Clone, Copy)]
struct Slots {
    prob: f64,
    with: Option<usize>,
    without: Option<usize>,
}

struct Mixture {
    design: DesignMatrix,
    slots: Vec<Slots>,
}

#[derive(Debug, Clone)]
struct MixtureFit {
    coefficients: Vec<f64>,
    covariance: DMatrix<f64>,
    log_likelihood: f64,
    trace: Vec<f64>,
    iterations: usize,
    converged: bool,
}

/// Neumaier summation; the EM trace compares sums of many small terms.
#[derive(Default)]
struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    fn add(mut self, x: f64) -> Self {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
        self
    }

    fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

fn log_mix(prob: f64, l1: f64, l0: f64) -> f64 {
    if prob >= 1.0 {
        l1
    } else if prob <= 0.0 {
        l0
    } else {
        let a = prob.ln() + l1;
        let b = (-prob).ln_1p() + l0;
        let m = a.max(b);
        m + ((a - m).exp() + (b - m).exp()).ln()
    }
}

impl Mixture {
    /// Duplicate each row with `0 < π < 1`. For `LatentEffect::Free(col)`
    /// any existing entry in `col` is replaced by the indicator.
    fn build(base: &DesignMatrix, columns: Vec<Column>, probs: &[f64], effect: LatentEffect) -> Self {
        let mut design = DesignMatrix::new(columns);
        design.set_cluster_names(base.cluster_names().to_vec());
        let mut slots = Vec::with_capacity(base.n_rows());
        let mut entries: Vec<(usize, f64)> = Vec::new();
        for (i, &prob) in probs.iter().enumerate() {
            let (cols, vals) = base.row(i);
            let (y, off, cl) = (base.y()[i], base.offset()[i], base.cluster()[i]);
            let mut push = |w: bool, weight: f64| {
                entries.clear();
                entries.extend(cols.iter().zip(vals).map(|(&c, &v)| (c as usize, v)));
                let mut offset = off;
                match effect {
                    LatentEffect::Free(col) => {
                        entries.retain(|&(c, _)| c != col);
                        if w {
                            entries.push((col, 1.0));
                        }
                    }
                    LatentEffect::Fixed(shift) => {
                        if w {
                            offset += shift;
                        }
                    }
                }
                design.push_row(&entries, y, weight, offset, cl);
                design.n_rows() - 1
            };
            let s = if prob >= 1.0 {
                Slots { prob: 1.0, with: Some(push(true, 1.0)), without: None }
            } else if prob <= 0.0 {
                Slots { prob: 0.0, with: None, without: Some(push(false, 1.0)) }
            } else {
                let with = push(true, prob);
                let without = push(false, 1.0 - prob);
                Slots { prob, with: Some(with), without: Some(without) }
            };
            slots.push(s);
        }
        Self { design, slots }
    }

    fn row_logliks(&self, eta: &[f64], s: &Slots) -> (f64, f64) {
        let y = self.design.y();
        let l = |r: Option<usize>| r.map_or(f64::NEG_INFINITY, |r| bernoulli_loglik(y[r], eta[r]));
        (l(s.with), l(s.without))
    }

    fn observed_loglik(&self, eta: &[f64]) -> f64 {
        self.slots
            .iter()
            .map(|s| {
                let (l1, l0) = self.row_logliks(eta, s);
                log_mix(s.prob, l1, l0)
            })
            .fold(CompensatedSum::default(), CompensatedSum::add)
            .value()
    }

    /// Set row weights to the posterior of `W`.
    fn e_step(&mut self, eta: &[f64]) {
        let mut updates = Vec::new();
        for s in &self.slots {
            if let (Some(r1), Some(r0)) = (s.with, s.without) {
                let (l1, l0) = self.row_logliks(eta, s);
                let a = s.prob.ln() + l1;
                let b = (-s.prob).ln_1p() + l0;
                let q = 1.0 / (1.0 + (b - a).exp());
                updates.push((r1, r0, q));
            }
        }
        let w = self.design.weights_mut();
        for (r1, r0, q) in updates {
            w[r1] = q;
            w[r0] = 1.0 - q;
        }
    }

    /// Observed information by Louis' identity at the current E-step weights.
    fn observed_information(&self, eta: &[f64]) -> DMatrix<f64> {
        let (_, mut info) = score_and_information(&self.design, eta);
        let (y, w) = (self.design.y(), self.design.weights());
        let p = self.design.n_cols();
        let mut diff: BTreeMap<usize, f64> = BTreeMap::new();
        for s in &self.slots {
            let (Some(r1), Some(r0)) = (s.with, s.without) else { continue };
            let q = w[r1];
            let v = q * (1.0 - q);
            if v == 0.0 {
                continue;
            }
            diff.clear();
            for (r, sign) in [(r1, 1.0), (r0, -1.0)] {
                let resid = y[r] - inv_logit(eta[r]);
                let (cols, vals) = self.design.row(r);
                for (&c, &x) in cols.iter().zip(vals) {
                    *diff.entry(c as usize).or_default() += sign * x * resid;
                }
            }
            for (&a, &da) in &diff {
                for (&b, &db) in &diff {
                    info[(a, b)] -= v * da * db;
                }
            }
        }
        debug_assert_eq!(info.nrows(), p);
        info
    }

    /// One EM update: E-step at `beta`, then a full weighted logistic M-step.
    fn em_map(&mut self, beta: &[f64]) -> Result<(Vec<f64>, f64)> {
        let eta = self.design.linear_predictor(beta);
        self.e_step(&eta);
        let fit = fit_logistic_with(&self.design, &IrlsOptions { start: Some(beta), max_iter: None })?;
        let ll = self.observed_loglik(&self.design.linear_predictor(&fit.coefficients));
        Ok((fit.coefficients, ll))
    }

    /// EM with squared extrapolation (SQUAREM). Each cycle takes two plain
    /// EM steps, extrapolates along them and applies one more EM step from
    /// the extrapolated point. The extrapolated result is kept only if it
    /// beats the second plain step, so every recorded log-likelihood is at
    /// least the one before it. The extrapolation length is capped, and the
    /// cap grows while capped steps keep succeeding.
    fn run(mut self, start: &[f64]) -> Result<MixtureFit> {
        let mut beta = start.to_vec();
        let mut ll = self.observed_loglik(&self.design.linear_predictor(&beta));
        let mut trace = vec![ll];
        let mut converged = false;
        let mut iterations = 0;
        let mut step_max = 1.0;
        while iterations < EM_MAX_ITER {
            let (b1, ll1) = self.em_map(&beta)?;
            let (b2, ll2) = self.em_map(&b1)?;
            iterations += 2;
            trace.extend([ll1, ll2]);
            let r: Vec<f64> = b1.iter().zip(&beta).map(|(a, b)| a - b).collect();
            let v: Vec<f64> = b2.iter().zip(&b1).zip(&r).map(|((c, b), r)| c - b - r).collect();
            let (nr, nv) = (norm(&r), norm(&v));
            let mut next = (b2, ll2);
            if nv > 0.0 && (ll2 - ll).abs() >= EM_TOL {
                let alpha = (-nr / nv).clamp(-step_max, -1.0);
                let jump: Vec<f64> =
                    beta.iter().zip(&r).zip(&v).map(|((b, r), v)| b - 2.0 * alpha * r + alpha * alpha * v).collect();
                let mut accepted = false;
                if let Ok((b3, ll3)) = self.em_map(&jump) {
                    iterations += 1;
                    if ll3 >= next.1 {
                        trace.push(ll3);
                        next = (b3, ll3);
                        accepted = true;
                    }
                }
                if accepted && alpha == -step_max {
                    step_max *= SQUAREM_STEP_GROWTH;
                } else if !accepted {
                    step_max = (step_max / SQUAREM_STEP_GROWTH).max(1.0);
                }
            }
            for w in trace.windows(2).rev().take(3) {
                if w[1] < w[0] - 1e-9 * w[0].abs().max(1.0) {
                    warn!("EM log-likelihood decreased from {} to {}", w[0], w[1]);
                }
            }
            let change = (next.1 - ll).abs();
            (beta, ll) = next;
            if change < EM_TOL {
                converged = true;
                break;
            }
        }
        if !converged {
            warn!("EM stopped after {iterations} iterations without meeting the {EM_TOL:e} tolerance");
        }
        let eta = self.design.linear_predictor(&beta);
        self.e_step(&eta);
        let covariance = invert_information(&self.observed_information(&eta))?;
        Ok(MixtureFit { coefficients: beta, covariance, log_likelihood: ll, trace, iterations, converged })
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentExposureFit {
    pub theta: f64,
    pub tau: f64,
    /// `exp(tau)`.
    pub odds_ratio: f64,
    /// Observed-information SE times the square root of the design effect.
    pub tau_se: f64,
    pub tau_se_unadjusted: f64,
    pub design_effect: f64,
    pub em_iterations: usize,
    pub converged: bool,
    pub log_likelihood: f64,
    /// Observed log-likelihood at the start and after every EM iteration.
    pub log_likelihood_trace: Vec<f64>,
}

impl LatentExposureFit {
    /// Whether the log-likelihood never dropped by more than `tol` (relative).
    pub fn is_monotone(&self, tol: f64) -> bool {
        self.log_likelihood_trace.windows(2).all(|w| w[1] >= w[0] - tol * w[0].abs().max(1.0))
    }
}

/// Data and starting values shared by every θ of the latent-exposure model
/// `logit Pr(Y=1) = α_i + λ_t + γᵀX + τ·W`, `W ~ Bernoulli(θ·D_it)`.
pub struct LatentExposureModel {
    data: AnalysisData,
    start: Vec<f64>,
    /// Design effect of the primary dose model.
    pub design_effect: f64,
    /// `β̂` of the binary treatment model, the starting value of `τ`.
    pub binary_estimate: f64,
}

impl LatentExposureModel {
    pub fn new(inputs: &DidInputs<'_>) -> Result<Self> {
        let primary = fit_prepared(&prepare(inputs, &SampleSpec::primary())?)?;
        let data = prepare(inputs, &SampleSpec::binary())?;
        let binary = fit_prepared(&data)?;
        Self::from_parts(data, &binary, design_effect(&primary)?)
    }

    /// From a prepared binary-model sample, its fit and a design effect.
    pub fn from_parts(data: AnalysisData, binary: &FitResult, design_effect: f64) -> Result<Self> {
        if data.dose.iter().all(|&d| d == 0.0) {
            return Err(Error::NonIdentifiable("every dose is zero; tau is not identified".into()));
        }
        Ok(Self {
            start: binary.coefficients.clone(),
            binary_estimate: binary.coefficients[data.treatment_col],
            data,
            design_effect,
        })
    }

    pub fn max_dose(&self) -> f64 {
        self.data.dose.iter().copied().fold(0.0, f64::max)
    }

    pub fn check_theta(&self, theta: f64) -> Result<()> {
        let product = theta * self.max_dose();
        if !(theta > 0.0) || product > 1.0 + THETA_SLACK {
            return Err(Error::InvalidTheta { theta, product });
        }
        Ok(())
    }

    pub fn fit(&self, theta: f64) -> Result<LatentExposureFit> {
        self.check_theta(theta)?;
        let col = self.data.treatment_col;
        let mut columns = self.data.design.columns().to_vec();
        columns[col] = Column::new("latent.exposure", ColumnBlock::Treatment);
        let probs: Vec<f64> = self.data.dose.iter().map(|&d| (theta * d).min(1.0)).collect();
        let mix = Mixture::build(&self.data.design, columns, &probs, LatentEffect::Free(col));
        let fit = mix.run(&self.start)?;
        let var = fit.covariance[(col, col)];
        let adjusted = design_effect_adjust(self.design_effect, 1.0, var)?;
        let tau = fit.coefficients[col];
        Ok(LatentExposureFit {
            theta,
            tau,
            odds_ratio: tau.exp(),
            tau_se: adjusted.sqrt(),
            tau_se_unadjusted: var.sqrt(),
            design_effect: self.design_effect,
            em_iterations: fit.iterations,
            converged: fit.converged,
            log_likelihood: fit.log_likelihood,
            log_likelihood_trace: fit.trace,
        })
    }
}

/// Fit the latent-exposure model at one θ.
pub fn em_latent_exposure(inputs: &DidInputs<'_>, theta: f64) -> Result<LatentExposureFit> {
    LatentExposureModel::new(inputs)?.fit(theta)
}

/// One EM fit per distinct θ, in increasing θ order.
pub fn theta_grid_report(model: &LatentExposureModel, grid: &[f64]) -> Result<Vec<LatentExposureFit>> {
    let mut thetas = grid.to_vec();
    thetas.sort_by(f64::total_cmp);
    let before = thetas.len();
    thetas.dedup();
    if thetas.len() < before {
        warn!("dropped {} duplicate theta value(s) from the grid", before - thetas.len());
    }
    for &t in &thetas {
        model.check_theta(t)?;
    }
    thetas.par_iter().map(|&t| model.fit(t)).collect()
}

/// An unmeasured binary confounder present only in treated post-period births.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfounderSpec {
    /// Share of treated post-period births with the confounder.
    pub prevalence: f64,
    /// Odds ratio Γ linking the confounder to the outcome.
    pub outcome_or: f64,
}

impl ConfounderSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.prevalence) {
            return Err(Error::Validation(format!("prevalence {} outside [0,1]", self.prevalence)));
        }
        if !(self.outcome_or >= 1.0) {
            return Err(Error::Validation(format!("confounder odds ratio {} must be at least 1", self.outcome_or)));
        }
        Ok(())
    }

    /// Cartesian product, prevalence-major.
    pub fn grid(prevalences: &[f64], odds_ratios: &[f64]) -> Vec<Self> {
        prevalences
            .iter()
            .flat_map(|&p| odds_ratios.iter().map(move |&g| Self { prevalence: p, outcome_or: g }))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub prevalence: f64,
    pub outcome_or: f64,
    pub estimate: f64,
    pub se: f64,
    pub p_value: f64,
    pub significant: bool,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    /// Why the sweep did not run, if it did not.
    pub skipped: Option<String>,
    pub original_estimate: f64,
    pub original_se: f64,
    pub rows: Vec<SweepRow>,
    /// Smallest Γ at each prevalence that removes significance, if any in the grid.
    pub frontier: Vec<(f64, Option<f64>)>,
}

/// Re-estimate the primary dose coefficient under each hypothesized
/// confounder. The confounder raises the odds in the direction of the
/// original estimate, so it always explains the effect away.
pub fn confounder_sweep(
    inputs: &DidInputs<'_>,
    primary: &FitResult,
    grid: &[ConfounderSpec],
    alpha: f64,
) -> Result<SensitivityReport> {
    for s in grid {
        s.validate()?;
    }
    let summary = primary
        .treatment_summary(alpha)
        .ok_or_else(|| Error::Validation("primary fit has no treatment column".into()))?;
    let original_se = summary.robust_se.unwrap_or(summary.naive_se);
    if !summary.significant(alpha) {
        return Ok(SensitivityReport {
            skipped: Some("primary not significant".into()),
            original_estimate: summary.estimate,
            original_se,
            rows: Vec::new(),
            frontier: Vec::new(),
        });
    }
    let data = prepare(inputs, &SampleSpec::primary())?;
    let de = design_effect(primary)?;
    let col = data.treatment_col;
    let direction = summary.estimate.signum();
    let df = summary.df;

    let rows: Vec<SweepRow> = grid
        .par_iter()
        .map(|s| {
            let probs: Vec<f64> = data.treated_post.iter().map(|&tp| if tp { s.prevalence } else { 0.0 }).collect();
            let shift = direction * s.outcome_or.ln();
            let mix = Mixture::build(&data.design, data.design.columns().to_vec(), &probs, LatentEffect::Fixed(shift));
            let fit = mix.run(&primary.coefficients)?;
            let estimate = fit.coefficients[col];
            let se = design_effect_adjust(de, 1.0, fit.covariance[(col, col)])?.sqrt();
            let (_, p_value, _) = wald(estimate, se, df, alpha);
            Ok(SweepRow {
                prevalence: s.prevalence,
                outcome_or: s.outcome_or,
                estimate,
                se,
                p_value,
                significant: p_value < alpha,
                converged: fit.converged,
            })
        })
        .collect::<Result<_>>()?;

    let mut by_prev: BTreeMap<u64, (f64, Option<f64>)> = BTreeMap::new();
    for r in &rows {
        let e = by_prev.entry(r.prevalence.to_bits()).or_insert((r.prevalence, None));
        if !r.significant && e.1.is_none_or(|g| r.outcome_or < g) {
            e.1 = Some(r.outcome_or);
        }
    }
    let mut frontier: Vec<(f64, Option<f64>)> = by_prev.into_values().collect();
    frontier.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(SensitivityReport { skipped: None, original_estimate: summary.estimate, original_se, rows, frontier })
}
