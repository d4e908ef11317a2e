//! Maximum-likelihood logistic regression by iteratively reweighted least
//! squares (Newton–Raphson on the Bernoulli log-likelihood).

use log::warn;
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fit::FitResult;

use super::design::DesignMatrix;

/// Convergence when the largest absolute score component falls below this.
pub const SCORE_TOL: f64 = 1e-8;
/// ... or when the relative deviance change falls below this.
pub const DEVIANCE_TOL: f64 = 1e-10;
pub const MAX_ITER: usize = 50;
const PROB_EPS: f64 = 1e-10;
const RIDGE: f64 = 1e-10;

#[derive(Debug, Clone, Default)]
pub struct IrlsOptions<'a> {
    /// Warm start; zeros when absent.
    pub start: Option<&'a [f64]>,
    /// Defaults to [`MAX_ITER`].
    pub max_iter: Option<usize>,
}

#[inline]
pub(crate) fn inv_logit(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// log(1 + e^x) without overflow.
#[inline]
pub(crate) fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Bernoulli log-likelihood contribution y·η − log(1 + e^η).
#[inline]
pub(crate) fn bernoulli_loglik(y: f64, eta: f64) -> f64 {
    y * eta - softplus(eta)
}

pub(crate) struct Evaluation {
    pub eta: Vec<f64>,
    pub loglik: f64,
}

pub(crate) fn evaluate(design: &DesignMatrix, beta: &[f64]) -> Evaluation {
    let eta = design.linear_predictor(beta);
    let loglik = eta
        .iter()
        .zip(design.y())
        .zip(design.weights())
        .map(|((&e, &y), &w)| if w > 0.0 { w * bernoulli_loglik(y, e) } else { 0.0 })
        .sum();
    Evaluation { eta, loglik }
}

/// Score vector Σ wᵢ xᵢ (yᵢ − pᵢ) and Fisher information Σ wᵢ pᵢ(1−pᵢ) xᵢxᵢᵀ.
pub(crate) fn score_and_information(design: &DesignMatrix, eta: &[f64]) -> (Vec<f64>, DMatrix<f64>) {
    let p = design.n_cols();
    let mut score = vec![0.0; p];
    let mut info = vec![0.0; p * p];
    let (y, w) = (design.y(), design.weights());
    for i in 0..design.n_rows() {
        if w[i] <= 0.0 {
            continue;
        }
        let mu = inv_logit(eta[i]);
        let resid = w[i] * (y[i] - mu);
        let var = w[i] * mu * (1.0 - mu);
        let (cols, vals) = design.row(i);
        for (&a, &va) in cols.iter().zip(vals) {
            let a = a as usize;
            score[a] += va * resid;
            let base = a * p;
            let wa = var * va;
            for (&b, &vb) in cols.iter().zip(vals) {
                info[base + b as usize] += wa * vb;
            }
        }
    }
    (score, DMatrix::from_row_slice(p, p, &info))
}

/// Solve `info · x = rhs`; on a singular system retry once with a 1e-10 ridge.
pub(crate) fn solve_information(info: &DMatrix<f64>, rhs: &[f64]) -> Result<DVector<f64>> {
    let b = DVector::from_column_slice(rhs);
    if let Some(ch) = info.clone().cholesky() {
        return Ok(ch.solve(&b));
    }
    warn!("singular weighted normal equations; adding ridge {RIDGE:e} to the diagonal");
    let mut ridged = info.clone();
    for j in 0..ridged.nrows() {
        ridged[(j, j)] += RIDGE;
    }
    ridged
        .cholesky()
        .map(|ch| ch.solve(&b))
        .ok_or_else(|| Error::NonIdentifiable("information matrix is singular".into()))
}

/// Inverse of the Fisher information, with the same ridge fallback.
pub(crate) fn invert_information(info: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let inv = match info.clone().cholesky() {
        Some(ch) => ch.inverse(),
        None => {
            warn!("singular information at the optimum; adding ridge {RIDGE:e} to the diagonal");
            let mut ridged = info.clone();
            for j in 0..ridged.nrows() {
                ridged[(j, j)] += RIDGE;
            }
            ridged
                .cholesky()
                .ok_or_else(|| Error::NonIdentifiable("information matrix is singular".into()))?
                .inverse()
        }
    };
    Ok(symmetrize(inv))
}

pub(crate) fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    let t = m.transpose();
    (m + t) * 0.5
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Fit with default options.
pub fn fit_logistic(design: &DesignMatrix) -> Result<FitResult> {
    fit_logistic_with(design, &IrlsOptions::default())
}

pub fn fit_logistic_with(design: &DesignMatrix, opts: &IrlsOptions<'_>) -> Result<FitResult> {
    let p = design.n_cols();
    let n_pos = design.weights().iter().filter(|&&w| w > 0.0).count();
    if n_pos <= p {
        return Err(Error::Validation(format!(
            "need more observations ({n_pos}) than columns ({p})"
        )));
    }
    if design.y().iter().any(|&y| !(0.0..=1.0).contains(&y)) {
        return Err(Error::Validation("outcomes must lie in [0,1]".into()));
    }
    let mut observed = design.y().iter().zip(design.weights()).filter(|(_, &w)| w > 0.0).map(|(y, _)| *y);
    if let Some(first) = observed.next() {
        if (first == 0.0 || first == 1.0) && observed.all(|y| y == first) {
            return Err(Error::Separation(format!("every outcome equals {first}; the MLE does not exist")));
        }
    }
    let max_iter = opts.max_iter.unwrap_or(MAX_ITER);
    let mut beta: Vec<f64> = match opts.start {
        Some(s) => {
            assert_eq!(s.len(), p, "warm start has wrong length");
            s.to_vec()
        }
        None => vec![0.0; p],
    };

    let mut ev = evaluate(design, &beta);
    let mut prev_norm = norm(&beta);
    let mut iterations = 0;
    let mut converged = false;
    let (mut score, mut info) = score_and_information(design, &ev.eta);

    while iterations < max_iter {
        if max_abs(&score) < SCORE_TOL {
            converged = true;
            break;
        }
        iterations += 1;
        let step = solve_information(&info, &score)?;

        // Newton step with halving while the likelihood decreases.
        let mut t = 1.0;
        let mut candidate: Vec<f64>;
        let mut cand_ev;
        loop {
            candidate = beta.iter().zip(step.iter()).map(|(b, s)| b + t * s).collect();
            cand_ev = evaluate(design, &candidate);
            if cand_ev.loglik >= ev.loglik - 1e-12 * ev.loglik.abs() || t < 1e-6 {
                break;
            }
            t *= 0.5;
        }
        let rel_change = (cand_ev.loglik - ev.loglik).abs() / (ev.loglik.abs() + 0.1);
        beta = candidate;
        ev = cand_ev;
        (score, info) = score_and_information(design, &ev.eta);

        let cur_norm = norm(&beta);
        let extreme = ev
            .eta
            .iter()
            .zip(design.weights())
            .any(|(&e, &w)| w > 0.0 && {
                let mu = inv_logit(e);
                !(PROB_EPS..=1.0 - PROB_EPS).contains(&mu)
            });
        if extreme && cur_norm > prev_norm {
            return Err(Error::Separation(format!(
                "fitted probabilities within {PROB_EPS:e} of 0 or 1 with coefficient norm growing to {cur_norm:.3} at iteration {iterations}"
            )));
        }
        prev_norm = cur_norm;

        // deviance = -2 loglik, so relative changes coincide
        if rel_change < DEVIANCE_TOL {
            converged = true;
            break;
        }
    }

    if !converged {
        if max_abs(&score) < SCORE_TOL {
            converged = true;
        } else {
            return Err(Error::NonConvergence {
                iterations,
                max_score: max_abs(&score),
                last: beta,
            });
        }
    }

    let naive_covariance = invert_information(&info)?;
    let fitted = ev.eta.iter().map(|&e| inv_logit(e)).collect();
    Ok(FitResult {
        columns: design.columns().to_vec(),
        coefficients: beta,
        naive_covariance,
        robust_covariance: None,
        n_obs: n_pos,
        n_clusters: design.n_clusters(),
        n_dropped_missing: 0,
        converged,
        iterations,
        log_likelihood: ev.loglik,
        max_score: max_abs(&score),
        fitted,
    })
}
