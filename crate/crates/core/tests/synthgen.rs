use minedid::data::{AgeBand, BirthRecord, Plurality, Race, Sex};
use minedid::synthgen::{generate_panel, CovariateEffects, GeneratorSpec, SyntheticTruth, TrueModel};

fn inv_logit(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// True linear predictor of a birth, excluding the treatment term.
fn base_eta(b: &BirthRecord, truth: &SyntheticTruth, spec: &GeneratorSpec) -> f64 {
    let g = CovariateEffects::default();
    let race = match b.mother_race.unwrap() {
        Race::White => g.race_white,
        Race::Other => g.race_other,
        Race::Black => 0.0,
    };
    let age = match b.mother_age_band.unwrap() {
        AgeBand::Under20 => g.age_under20,
        AgeBand::A20To24 => 0.0,
        AgeBand::A25To29 => g.age_25_29,
        AgeBand::A30To34 => g.age_30_34,
        AgeBand::A35To39 => g.age_35_39,
        AgeBand::A40Plus => g.age_40_plus,
    };
    let sex = if b.infant_sex == Some(Sex::Male) { g.male } else { 0.0 };
    let plural = if b.plurality == Some(Plurality::Single) { g.single } else { 0.0 };
    spec.intercept + truth.county_effects[&b.county_id] + truth.year_effects[&b.year] + race + age + sex + plural
}

fn lbw(b: &BirthRecord) -> bool {
    b.birth_weight_g.unwrap() < 2500.0
}

#[test]
fn null_effect_gives_unit_odds_ratio() {
    let spec = GeneratorSpec {
        true_model: TrueModel::Dose { chi: 0.0 },
        county_effect_sd: 0.0,
        births_per_cell: 1700.0,
        rng_seed: 21,
        ..Default::default()
    };
    let s = generate_panel(&spec).unwrap();
    let mut counts = [[0u64; 2]; 2];
    for b in s.births.iter().filter(|b| spec.post_period.contains(b.year)) {
        let t = usize::from(s.truth.treated.contains(&b.county_id));
        counts[t][usize::from(lbw(b))] += 1;
    }
    let n: u64 = counts.iter().flatten().sum();
    assert!(n > 1_000_000, "{n}");
    let log_or = ((counts[1][1] as f64 * counts[0][0] as f64) / (counts[1][0] as f64 * counts[0][1] as f64)).ln();
    assert!(log_or.abs() < 0.05, "{log_or}");
}

#[test]
fn constant_dose_shift_matches_closed_form() {
    let chi = 1.25f64.ln();
    let spec = GeneratorSpec {
        true_model: TrueModel::Dose { chi },
        dose_range: (0.04, 0.04),
        births_per_cell: 400.0,
        rng_seed: 22,
        ..Default::default()
    };
    let s = generate_panel(&spec).unwrap();
    assert!(s.truth.doses.values().all(|&d| d == 0.04));
    let (mut observed, mut with, mut without, mut var) = (0.0, 0.0, 0.0, 0.0);
    for b in &s.births {
        let treated_post = s.truth.treated.contains(&b.county_id) && spec.post_period.contains(b.year);
        if !treated_post {
            continue;
        }
        let eta = base_eta(b, &s.truth, &spec);
        let p1 = inv_logit(eta + 0.04 * chi);
        with += p1;
        without += inv_logit(eta);
        var += p1 * (1.0 - p1);
        observed += f64::from(u8::from(lbw(b)));
    }
    assert!(with > without);
    assert!((observed - with).abs() < 4.0 * var.sqrt(), "observed {observed}, expected {with}, sd {}", var.sqrt());
}

#[test]
fn every_cell_matches_its_probability() {
    let spec = GeneratorSpec { births_per_cell: 300.0, rng_seed: 23, ..Default::default() };
    let s = generate_panel(&spec).unwrap();
    let chi = match spec.true_model {
        TrueModel::Dose { chi } => chi,
        _ => unreachable!(),
    };
    let (mut observed, mut expected, mut var) = (0.0, 0.0, 0.0);
    for b in &s.births {
        let d = s.truth.doses.get(&(b.county_id.clone(), b.year)).copied().unwrap_or(0.0);
        let p = inv_logit(base_eta(b, &s.truth, &spec) + chi * d);
        expected += p;
        var += p * (1.0 - p);
        observed += f64::from(u8::from(lbw(b)));
    }
    assert!((observed - expected).abs() < 4.0 * var.sqrt());
}

#[test]
fn all_models_are_deterministic() {
    for model in [
        TrueModel::Dose { chi: 0.5 },
        TrueModel::Binary { beta: 0.2 },
        TrueModel::Latent { theta: 5.0, tau: 2f64.ln() },
    ] {
        let spec = GeneratorSpec { n_treated: 4, n_control: 5, births_per_cell: 30.0, true_model: model, ..Default::default() };
        assert_eq!(generate_panel(&spec).unwrap(), generate_panel(&spec).unwrap());
    }
}
