//! Paired t-test, used for the pre-period trend comparison of matched pairs.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedTTest {
    pub t: f64,
    pub df: usize,
    pub p_value: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub mean_diff: f64,
}

/// Two-sided paired t-test of `x − y` against zero with a 95% interval.
pub fn paired_t_test(x: &[f64], y: &[f64]) -> Result<PairedTTest> {
    if x.len() != y.len() {
        return Err(Error::Validation(format!("paired samples differ in length: {} vs {}", x.len(), y.len())));
    }
    let n = x.len();
    if n < 2 {
        return Err(Error::Validation("paired t-test needs at least 2 pairs".into()));
    }
    let d: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    let nf = n as f64;
    let mean = d.iter().sum::<f64>() / nf;
    let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (nf - 1.0);
    if d.iter().all(|&v| v == d[0]) || var == 0.0 {
        return Err(Error::DegenerateVariance("differences are constant".into()));
    }
    let se = (var / nf).sqrt();
    let t = mean / se;
    let df = n - 1;
    let dist = StudentsT::new(0.0, 1.0, df as f64).expect("df >= 1");
    let p_value = (2.0 * dist.sf(t.abs())).min(1.0);
    let crit = dist.inverse_cdf(0.975);
    Ok(PairedTTest {
        t,
        df,
        p_value,
        ci_low: mean - crit * se,
        ci_high: mean + crit * se,
        mean_diff: mean,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_mean_difference() {
        let r = paired_t_test(&[1.0, 2.0, 3.0], &[0.0, 2.0, 4.0]).unwrap();
        assert_eq!(r.t, 0.0);
        assert_eq!(r.df, 2);
        assert!((r.p_value - 1.0).abs() < 1e-12);
        assert!((r.ci_low + r.ci_high).abs() < 1e-12);
    }

    #[test]
    fn twenty_three_pairs_give_22_df() {
        let x: Vec<f64> = (0..23).map(|i| 0.08 + 0.001 * (i as f64).sin()).collect();
        let y: Vec<f64> = (0..23).map(|i| 0.08 + 0.001 * (i as f64).cos()).collect();
        assert_eq!(paired_t_test(&x, &y).unwrap().df, 22);
    }

    #[test]
    fn constant_differences_are_degenerate() {
        let y = [1.0, 5.0, 2.0];
        let x: Vec<f64> = y.iter().map(|v| v + 1.0).collect();
        assert!(matches!(paired_t_test(&x, &y), Err(Error::DegenerateVariance(_))));
    }

    #[test]
    fn antisymmetric_in_arguments() {
        let x = [0.1, 0.4, 0.35, 0.8, 0.2];
        let y = [0.15, 0.3, 0.3, 0.5, 0.25];
        let a = paired_t_test(&x, &y).unwrap();
        let b = paired_t_test(&y, &x).unwrap();
        assert_eq!(a.t, -b.t);
        assert_eq!(a.p_value, b.p_value);
    }

    #[test]
    fn matches_r_reference() {
        // R: t.test(c(5.1,4.9,6.2,5.8,6.0), c(4.8,5.0,5.9,5.1,5.7), paired=TRUE)
        // mean diff 0.3, sd(d) = 0.2828427, t = 2.371708, df = 4
        let r = paired_t_test(&[5.1, 4.9, 6.2, 5.8, 6.0], &[4.8, 5.0, 5.9, 5.1, 5.7]).unwrap();
        assert!((r.mean_diff - 0.3).abs() < 1e-12);
        assert!((r.t - 2.371708245).abs() < 1e-8);
        // two-sided p for t(4) at 2.3717: 0.0766781
        assert!((r.p_value - 0.076678140).abs() < 1e-8, "{}", r.p_value);
    }
}
