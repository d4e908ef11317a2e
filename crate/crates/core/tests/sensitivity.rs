mod common;

use common::{small, Fixture};
use minedid::did::{fit_primary_dose_model, fit_secondary_binary_model};
use minedid::sensitivity::{confounder_sweep, theta_grid_report, ConfounderSpec, LatentExposureModel};
use minedid::synthgen::{GeneratorSpec, PlantedConfounder, TrueModel};
use minedid::Error;

fn latent_spec(seed: u64) -> GeneratorSpec {
    GeneratorSpec { true_model: TrueModel::Latent { theta: 5.0, tau: 2f64.ln() }, ..small(seed) }
}

#[test]
fn fully_observed_latent_equals_binary_model() {
    let fx = Fixture::new(&latent_spec(1));
    let constant = fx.doses.with_constant_dose(0.04);
    let inputs = fx.with_doses(&constant);
    let beta = fit_secondary_binary_model(&inputs).unwrap().treatment_estimate().unwrap();
    let fit = LatentExposureModel::new(&inputs).unwrap().fit(25.0).unwrap();
    assert!((fit.tau - beta).abs() < 1e-6, "tau {} beta {}", fit.tau, beta);
    assert!(fit.converged);
}

#[test]
fn em_monotone_over_theta_grid() {
    let fx = Fixture::new(&latent_spec(2));
    let model = LatentExposureModel::new(&fx.inputs()).unwrap();
    let max_theta = 1.0 / model.max_dose();
    let grid: Vec<f64> = (1..=10).map(|k| k as f64).filter(|&t| t <= max_theta).collect();
    let report = theta_grid_report(&model, &grid).unwrap();
    assert_eq!(report.len(), grid.len());
    for f in &report {
        assert!(f.is_monotone(1e-12), "theta {} trace {:?}", f.theta, f.log_likelihood_trace);
        assert!(f.converged);
        assert!(f.tau_se > 0.0);
        assert!((f.odds_ratio - f.tau.exp()).abs() < 1e-12);
    }
}

#[test]
fn theta_grid_dedups_and_sorts() {
    let fx = Fixture::new(&latent_spec(3));
    let model = LatentExposureModel::new(&fx.inputs()).unwrap();
    let report = theta_grid_report(&model, &[3.0, 1.0, 3.0, 2.0]).unwrap();
    let thetas: Vec<f64> = report.iter().map(|f| f.theta).collect();
    assert_eq!(thetas, vec![1.0, 2.0, 3.0]);
}

#[test]
fn invalid_theta_rejected() {
    let fx = Fixture::new(&latent_spec(4));
    let model = LatentExposureModel::new(&fx.inputs()).unwrap();
    let too_big = 1.5 / model.max_dose();
    assert!(matches!(model.fit(too_big), Err(Error::InvalidTheta { .. })));
    assert!(matches!(theta_grid_report(&model, &[1.0, too_big]), Err(Error::InvalidTheta { .. })));
}

#[test]
fn zero_dose_not_identified() {
    let fx = Fixture::new(&latent_spec(5));
    let zero = fx.doses.with_constant_dose(0.0);
    let err = LatentExposureModel::new(&fx.with_doses(&zero)).err().unwrap();
    assert!(matches!(err, Error::NonIdentifiable(_) | Error::Validation(_)), "{err:?}");
}

fn strong_dose_fixture(seed: u64) -> Fixture {
    Fixture::new(&GeneratorSpec {
        true_model: TrueModel::Dose { chi: 15.0 },
        births_per_cell: 120.0,
        ..small(seed)
    })
}

#[test]
fn null_confounders_are_identity() {
    let fx = strong_dose_fixture(6);
    let inputs = fx.inputs();
    let primary = fit_primary_dose_model(&inputs).unwrap();
    let grid = [
        ConfounderSpec { prevalence: 0.3, outcome_or: 1.0 },
        ConfounderSpec { prevalence: 0.0, outcome_or: 4.0 },
        ConfounderSpec { prevalence: 1.0, outcome_or: 1.0 },
    ];
    let report = confounder_sweep(&inputs, &primary, &grid, 0.05).unwrap();
    assert!(report.skipped.is_none());
    for r in &report.rows {
        assert!((r.estimate - report.original_estimate).abs() < 1e-10, "{r:?} vs {}", report.original_estimate);
        assert!((r.se - report.original_se).abs() < 1e-8 * report.original_se, "{r:?} vs {}", report.original_se);
    }
}

#[test]
fn sweep_rejects_protective_gamma() {
    let fx = strong_dose_fixture(7);
    let inputs = fx.inputs();
    let primary = fit_primary_dose_model(&inputs).unwrap();
    let bad = [ConfounderSpec { prevalence: 0.5, outcome_or: 0.5 }];
    assert!(matches!(confounder_sweep(&inputs, &primary, &bad, 0.05), Err(Error::Validation(_))));
}

#[test]
fn sweep_skipped_when_not_significant() {
    let fx = Fixture::new(&GeneratorSpec { true_model: TrueModel::Dose { chi: 0.0 }, ..small(8) });
    let inputs = fx.inputs();
    let primary = fit_primary_dose_model(&inputs).unwrap();
    let s = primary.treatment_summary(0.05).unwrap();
    let report = confounder_sweep(&inputs, &primary, &ConfounderSpec::grid(&[0.5], &[2.0]), 0.05).unwrap();
    if s.significant(0.05) {
        assert!(report.skipped.is_none());
    } else {
        assert_eq!(report.skipped.as_deref(), Some("primary not significant"));
        assert!(report.rows.is_empty());
    }
}

#[test]
fn planted_confounder_is_neutralized() {
    let planted = PlantedConfounder { prevalence: 0.5, odds_ratio: 3.0 };
    let fx = Fixture::new(&GeneratorSpec {
        true_model: TrueModel::Dose { chi: 0.0 },
        planted_confounder: Some(planted),
        births_per_cell: 150.0,
        ..small(9)
    });
    let inputs = fx.inputs();
    let primary = fit_primary_dose_model(&inputs).unwrap();
    let naive = primary.treatment_summary(0.05).unwrap();
    assert!(naive.significant(0.05), "planted confounder should bias the naive fit: {naive:?}");
    let grid = [ConfounderSpec { prevalence: planted.prevalence, outcome_or: planted.odds_ratio }];
    let report = confounder_sweep(&inputs, &primary, &grid, 0.05).unwrap();
    let row = &report.rows[0];
    assert!(row.estimate.abs() < 3.0 * row.se, "{row:?}");
    assert_eq!(report.frontier.len(), 1);
}

#[test]
fn frontier_picks_smallest_gamma() {
    let fx = strong_dose_fixture(10);
    let inputs = fx.inputs();
    let primary = fit_primary_dose_model(&inputs).unwrap();
    let grid = ConfounderSpec::grid(&[0.25, 1.0], &[1.0, 1.5, 3.0, 10.0]);
    let report = confounder_sweep(&inputs, &primary, &grid, 0.05).unwrap();
    for &(p, gamma) in &report.frontier {
        let rows: Vec<_> = report.rows.iter().filter(|r| r.prevalence == p).collect();
        let expected = rows.iter().filter(|r| !r.significant).map(|r| r.outcome_or).fold(None, |m: Option<f64>, g| Some(m.map_or(g, |m| m.min(g))));
        assert_eq!(gamma, expected);
    }
    // a stronger confounder moves the estimate further toward zero
    let full: Vec<f64> = report.rows.iter().filter(|r| r.prevalence == 1.0).map(|r| r.estimate).collect();
    assert!(full.windows(2).all(|w| w[1] <= w[0] + 1e-9), "{full:?}");
}
