//! Logistic regression with dense fixed effects, cluster-robust covariance
//! and the paired t-test.

mod design;
mod irls;
mod sandwich;
mod ttest;

pub use design::{Column, ColumnBlock, DesignMatrix};
pub use irls::{fit_logistic, fit_logistic_with, IrlsOptions, DEVIANCE_TOL, MAX_ITER, SCORE_TOL};
pub use sandwich::{cluster_robust_covariance, cluster_scores};
pub use ttest::{paired_t_test, PairedTTest};

pub(crate) use irls::{bernoulli_loglik, inv_logit, invert_information, score_and_information};

use crate::error::{Error, Result};

/// Fails when column `col` lies (numerically) in the span of the other
/// columns, i.e. its coefficient is not identified by the design.
pub fn check_identifiable(design: &DesignMatrix, col: usize) -> Result<()> {
    let name = &design.columns()[col].name;
    let values = design.column_values(col);
    let first = values.iter().zip(design.weights()).find(|(_, &w)| w > 0.0).map(|(v, _)| *v);
    if let Some(first) = first {
        if values.iter().zip(design.weights()).all(|(&v, &w)| w <= 0.0 || v == first) {
            return Err(Error::NonIdentifiable(format!("constant treatment column {name}")));
        }
    }
    let gram = design.gram();
    let p = gram.nrows();
    let others: Vec<usize> = (0..p).filter(|&j| j != col).collect();
    let g_oo = gram.select_rows(&others).select_columns(&others);
    let g_ot = gram.select_rows(&others).column(col).into_owned();
    let g_tt = gram[(col, col)];
    if g_tt <= 0.0 {
        return Err(Error::NonIdentifiable(format!("column {name} is identically zero")));
    }
    let pinv = g_oo
        .pseudo_inverse(1e-10 * gram.diagonal().max())
        .map_err(|e| Error::NonIdentifiable(e.to_string()))?;
    // residual sum of squares of the column regressed on the others
    let rss = g_tt - (g_ot.transpose() * pinv * &g_ot)[(0, 0)];
    if rss / g_tt < 1e-9 {
        return Err(Error::NonIdentifiable(format!(
            "column {name} is collinear with the fixed effects (relative residual {:.2e})",
            rss / g_tt
        )));
    }
    Ok(())
}
