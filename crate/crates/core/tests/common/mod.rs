#![allow(dead_code)]

use minedid::did::{compute_doses, DidInputs, DoseAssignment};
use minedid::synthgen::{generate_panel, GeneratorSpec, SyntheticStudy};
use minedid::StudyConfig;

/// A synthetic study with doses for its true treated and control counties.
pub struct Fixture {
    pub study: SyntheticStudy,
    pub doses: DoseAssignment,
    pub cfg: StudyConfig,
}

impl Fixture {
    pub fn new(spec: &GeneratorSpec) -> Self {
        let study = generate_panel(spec).expect("valid spec");
        let cfg = StudyConfig::default();
        let doses = compute_doses(&study.panels, &study.truth.treated, &study.truth.controls, &cfg).unwrap();
        Self { study, doses, cfg }
    }

    pub fn inputs(&self) -> DidInputs<'_> {
        DidInputs { births: &self.study.births, doses: &self.doses, cfg: &self.cfg, sga_table: None }
    }

    pub fn with_doses<'a>(&'a self, doses: &'a DoseAssignment) -> DidInputs<'a> {
        DidInputs { doses, ..self.inputs() }
    }
}

pub fn small(seed: u64) -> GeneratorSpec {
    GeneratorSpec { n_treated: 8, n_control: 8, births_per_cell: 80.0, rng_seed: seed, ..Default::default() }
}
