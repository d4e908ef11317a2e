use minedid::glm::{
    check_identifiable, cluster_robust_covariance, fit_logistic, paired_t_test, Column, ColumnBlock,
    DesignMatrix,
};
use minedid::Error;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn cols(names: &[&str]) -> Vec<Column> {
    names
        .iter()
        .enumerate()
        .map(|(j, n)| {
            let block = match j {
                0 => ColumnBlock::Intercept,
                _ if j == names.len() - 1 => ColumnBlock::Treatment,
                _ => ColumnBlock::Individual,
            };
            Column::new(*n, block)
        })
        .collect()
}

/// 100 treated with 30 events, 100 controls with 10 events.
fn two_by_two() -> DesignMatrix {
    let mut rows = Vec::new();
    let mut y = Vec::new();
    for (group, events) in [(1.0, 30), (0.0, 10)] {
        for k in 0..100 {
            rows.push(vec![1.0, group]);
            y.push(if k < events { 1.0 } else { 0.0 });
        }
    }
    let clusters: Vec<u32> = (0..200).map(|i| (i % 10) as u32).collect();
    DesignMatrix::from_dense(cols(&["intercept", "group"]), &rows, &y, &clusters)
}

#[test]
fn two_by_two_log_odds_ratio() {
    let fit = fit_logistic(&two_by_two()).unwrap();
    let closed_form = ((30.0f64 / 70.0) / (10.0 / 90.0)).ln();
    assert!((fit.coefficients[1] - closed_form).abs() < 1e-8);
    assert!((closed_form - 1.349927).abs() < 1e-6);
    assert!((fit.coefficients[0] - (10.0f64 / 90.0).ln()).abs() < 1e-8);
    assert!(fit.iterations <= 25);
    assert!(fit.max_score < 1e-6);
    // naive variance of a 2x2 log odds ratio: 1/a + 1/b + 1/c + 1/d
    let woolf = 1.0 / 30.0 + 1.0 / 70.0 + 1.0 / 10.0 + 1.0 / 90.0;
    assert!((fit.naive_covariance[(1, 1)] - woolf).abs() < 1e-8);
}

#[test]
fn intercept_only_half_ones() {
    let rows = vec![vec![1.0]; 10];
    let y: Vec<f64> = (0..10).map(|i| (i % 2) as f64).collect();
    let d = DesignMatrix::from_dense(vec![Column::new("intercept", ColumnBlock::Intercept)], &rows, &y, &[0; 10]);
    let fit = fit_logistic(&d).unwrap();
    assert!(fit.coefficients[0].abs() < 1e-12);
}

#[test]
fn all_ones_is_separation() {
    let rows = vec![vec![1.0]; 10];
    let d = DesignMatrix::from_dense(vec![Column::new("intercept", ColumnBlock::Intercept)], &rows, &[1.0; 10], &[0; 10]);
    assert!(matches!(fit_logistic(&d), Err(Error::Separation(_))), "{:?}", fit_logistic(&d).err());
}

#[test]
fn more_columns_than_rows_rejected() {
    let rows = vec![vec![1.0, 0.0, 1.0], vec![1.0, 1.0, 0.0]];
    let d = DesignMatrix::from_dense(cols(&["i", "a", "t"]), &rows, &[0.0, 1.0], &[0, 1]);
    assert!(matches!(fit_logistic(&d), Err(Error::Validation(_))));
}

fn random_design(rng: &mut ChaCha8Rng, n: usize, clusters: &[u32]) -> DesignMatrix {
    let mut rows = Vec::new();
    let mut y = Vec::new();
    for _ in 0..n {
        let x1: f64 = rng.gen_range(-1.0..1.0);
        let x2 = if rng.gen_bool(0.4) { 1.0 } else { 0.0 };
        let p = 1.0 / (1.0 + (-(-0.3 + 0.8 * x1 - 0.5 * x2)).exp());
        rows.push(vec![1.0, x1, x2]);
        y.push(if rng.gen_bool(p) { 1.0 } else { 0.0 });
    }
    DesignMatrix::from_dense(cols(&["intercept", "x1", "x2"]), &rows, &y, clusters)
}

/// Dense, independent sandwich: (XᵀWX)⁻¹ (Σ_g s_g s_gᵀ) (XᵀWX)⁻¹.
fn dense_sandwich(d: &DesignMatrix, beta: &[f64]) -> (DMatrix<f64>, DMatrix<f64>) {
    let x = d.to_dense();
    let b = DVector::from_column_slice(beta);
    let eta = &x * &b;
    let p: Vec<f64> = eta.iter().map(|e| 1.0 / (1.0 + (-e).exp())).collect();
    let n = x.nrows();
    let k = x.ncols();
    let mut info = DMatrix::zeros(k, k);
    for i in 0..n {
        let xi = x.row(i).transpose();
        info += &xi * xi.transpose() * (p[i] * (1.0 - p[i]));
    }
    let bread = info.try_inverse().unwrap();
    let g_max = *d.cluster().iter().max().unwrap() as usize + 1;
    let mut meat = DMatrix::zeros(k, k);
    for g in 0..g_max {
        let mut s = DVector::zeros(k);
        for i in 0..n {
            if d.cluster()[i] as usize == g {
                s += x.row(i).transpose() * (d.y()[i] - p[i]);
            }
        }
        meat += &s * s.transpose();
    }
    (bread.clone(), &bread * meat * &bread)
}

#[test]
fn singleton_clusters_equal_hc0() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n = 120;
    let clusters: Vec<u32> = (0..n as u32).collect();
    let d = random_design(&mut rng, n, &clusters);
    let mut fit = fit_logistic(&d).unwrap();
    let robust = cluster_robust_covariance(&fit, &d).unwrap();
    let (_, hc0) = dense_sandwich(&d, &fit.coefficients);
    let g = n as f64;
    let scaled = &robust * ((g - 1.0) / g);
    assert!((scaled - hc0).abs().max() < 1e-10);
    fit.robust_covariance = Some(robust);
}

#[test]
fn two_cluster_hand_example() {
    // six rows, two clusters of three
    let rows = vec![
        vec![1.0, 0.5],
        vec![1.0, -1.0],
        vec![1.0, 2.0],
        vec![1.0, 0.0],
        vec![1.0, 1.5],
        vec![1.0, -0.5],
    ];
    let y = [1.0, 0.0, 1.0, 0.0, 0.0, 1.0];
    let clusters = [0, 0, 0, 1, 1, 1];
    let d = DesignMatrix::from_dense(cols(&["intercept", "x"]), &rows, &y, &clusters);
    let fit = fit_logistic(&d).unwrap();
    let robust = cluster_robust_covariance(&fit, &d).unwrap();

    // explicit score sums
    let p: Vec<f64> = rows
        .iter()
        .map(|r| 1.0 / (1.0 + (-(fit.coefficients[0] * r[0] + fit.coefficients[1] * r[1])).exp()))
        .collect();
    let mut s = [[0.0f64; 2]; 2];
    let mut info = [[0.0f64; 2]; 2];
    for i in 0..6 {
        let g = clusters[i] as usize;
        for a in 0..2 {
            s[g][a] += rows[i][a] * (y[i] - p[i]);
            for b in 0..2 {
                info[a][b] += rows[i][a] * rows[i][b] * p[i] * (1.0 - p[i]);
            }
        }
    }
    // at the MLE the total score is zero, so s_1 = -s_0
    assert!((s[0][0] + s[1][0]).abs() < 1e-8);
    let det = info[0][0] * info[1][1] - info[0][1] * info[1][0];
    let bread = [[info[1][1] / det, -info[0][1] / det], [-info[1][0] / det, info[0][0] / det]];
    let mut meat = [[0.0; 2]; 2];
    for g in 0..2 {
        for a in 0..2 {
            for b in 0..2 {
                meat[a][b] += s[g][a] * s[g][b];
            }
        }
    }
    for a in 0..2 {
        for b in 0..2 {
            let mut v = 0.0;
            for k in 0..2 {
                for l in 0..2 {
                    v += bread[a][k] * meat[k][l] * bread[l][b];
                }
            }
            v *= 2.0; // G/(G-1)
            assert!((robust[(a, b)] - v).abs() < 1e-10, "({a},{b}): {} vs {v}", robust[(a, b)]);
        }
    }
}

#[test]
fn one_cluster_is_rejected() {
    let d = two_by_two();
    let fit = fit_logistic(&d).unwrap();
    let mut rows = Vec::new();
    for i in 0..d.n_rows() {
        let (c, v) = d.row(i);
        let mut r = vec![0.0; 2];
        for (&j, &x) in c.iter().zip(v) {
            r[j as usize] = x;
        }
        rows.push(r);
    }
    let single = DesignMatrix::from_dense(cols(&["intercept", "group"]), &rows, d.y(), &vec![0; rows.len()]);
    assert!(matches!(cluster_robust_covariance(&fit, &single), Err(Error::TooFewClusters(1))));
}

#[test]
fn duplicating_rows_within_clusters() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 80;
    let clusters: Vec<u32> = (0..n).map(|i| (i % 2) as u32).collect();
    let d = random_design(&mut rng, n, &clusters);
    let x = d.to_dense();
    let mut rows = Vec::new();
    let mut y = Vec::new();
    let mut cl = Vec::new();
    for _ in 0..2 {
        for i in 0..n {
            rows.push(x.row(i).iter().copied().collect::<Vec<_>>());
            y.push(d.y()[i]);
            cl.push(clusters[i]);
        }
    }
    let doubled = DesignMatrix::from_dense(d.columns().to_vec(), &rows, &y, &cl);
    let f1 = fit_logistic(&d).unwrap();
    let f2 = fit_logistic(&doubled).unwrap();
    let r1 = cluster_robust_covariance(&f1, &d).unwrap();
    let r2 = cluster_robust_covariance(&f2, &doubled).unwrap();
    // naive halves; score sums double and bread halves, so the sandwich is unchanged
    assert!((&f2.naive_covariance * 2.0 - &f1.naive_covariance).abs().max() < 1e-10);
    assert!((&r2 - &r1).abs().max() < 1e-10);
    let (_, direct) = dense_sandwich(&doubled, &f2.coefficients);
    assert!((r2 - direct * 2.0).abs().max() < 1e-10);
}

#[test]
fn identifiability_check() {
    // x2 = 2 * x1 exactly: collinear
    let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![1.0, i as f64, 2.0 * i as f64]).collect();
    let y: Vec<f64> = (0..20).map(|i| (i % 3 == 0) as u8 as f64).collect();
    let d = DesignMatrix::from_dense(cols(&["i", "x1", "t"]), &rows, &y, &[0; 20]);
    assert!(matches!(check_identifiable(&d, 2), Err(Error::NonIdentifiable(_))));
    let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![1.0, i as f64, 3.0]).collect();
    let d = DesignMatrix::from_dense(cols(&["i", "x1", "t"]), &rows, &y, &[0; 20]);
    let err = check_identifiable(&d, 2).unwrap_err();
    assert!(err.to_string().contains("constant treatment column"), "{err}");
    let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![1.0, i as f64, ((i * 7) % 5) as f64]).collect();
    let d = DesignMatrix::from_dense(cols(&["i", "x1", "t"]), &rows, &y, &[0; 20]);
    check_identifiable(&d, 2).unwrap();
}

fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    m.clone().symmetric_eigen().eigenvalues.min()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn fits_are_stationary_and_psd(seed in 0u64..10_000, n in 60usize..200, g in 2u32..12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let clusters: Vec<u32> = (0..n).map(|i| i as u32 % g).collect();
        let d = random_design(&mut rng, n, &clusters);
        let fit = match fit_logistic(&d) {
            Ok(f) => f,
            Err(Error::Separation(_)) => return Ok(()),
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        };
        prop_assert!(fit.max_score < 1e-6);
        prop_assert!(fit.iterations <= 25);
        let robust = cluster_robust_covariance(&fit, &d).unwrap();
        for m in [&fit.naive_covariance, &robust] {
            prop_assert!((m - m.transpose()).abs().max() < 1e-12);
            prop_assert!(min_eigenvalue(m) >= -1e-10);
        }
    }

    #[test]
    fn shifting_a_continuous_column_keeps_fitted_values(seed in 0u64..10_000, shift in -5.0f64..5.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let clusters: Vec<u32> = (0..150).map(|i| i % 5).collect();
        let d = random_design(&mut rng, 150, &clusters);
        let x = d.to_dense();
        let rows: Vec<Vec<f64>> = (0..150).map(|i| vec![1.0, x[(i, 1)] + shift, x[(i, 2)]]).collect();
        let shifted = DesignMatrix::from_dense(d.columns().to_vec(), &rows, d.y(), &clusters);
        let (a, b) = match (fit_logistic(&d), fit_logistic(&shifted)) {
            (Ok(a), Ok(b)) => (a, b),
            _ => return Ok(()),
        };
        for (p, q) in a.fitted.iter().zip(&b.fitted) {
            prop_assert!((p - q).abs() < 1e-8);
        }
        prop_assert!((a.coefficients[1] - b.coefficients[1]).abs() < 1e-6);
        prop_assert!((a.coefficients[2] - b.coefficients[2]).abs() < 1e-6);
        prop_assert!((b.coefficients[0] - (a.coefficients[0] - shift * a.coefficients[1])).abs() < 1e-6);
    }

    #[test]
    fn paired_t_is_antisymmetric(x in prop::collection::vec(-10.0f64..10.0, 3..30), noise in prop::collection::vec(-1.0f64..1.0, 30)) {
        let y: Vec<f64> = x.iter().zip(&noise).map(|(a, e)| a + e).collect();
        if let (Ok(a), Ok(b)) = (paired_t_test(&x, &y), paired_t_test(&y, &x)) {
            prop_assert_eq!(a.t, -b.t);
        }
    }
}
