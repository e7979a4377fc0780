//! Full re-estimation of the kinetic schemes from the literature start.
//! Each objective evaluation integrates a few hundred kinetic runs, so these
//! take hours on one core (about 500 s per 300 simplex iterations for the
//! cyclic scheme). Run with `cargo test --release -- --ignored`.

use ndnb::estimation::{estimate, EstimationConfig, ExperimentalTargets};
use ndnb::{ModelKind, ParameterSet};

fn check(model: ModelKind) {
    let targets = ExperimentalTargets::reference();
    let r = estimate(model, &targets, &EstimationConfig::default(), None).unwrap();
    assert!(r.objective.term1 < 0.5, "term1 = {}", r.objective.term1);
    let set = r.x_best.unpack(&ParameterSet::preset("table1").unwrap()).unwrap();
    let mu = |d: &str| set.drug(d).unwrap().selectivity();
    assert!(mu("rocuronium") < mu("vecuronium") && mu("rocuronium") < mu("cisatracurium"));
}

#[test]
#[ignore = "hours of CPU time"]
fn reciprocal_reestimation() {
    check(ModelKind::Reciprocal);
}

#[test]
#[ignore = "hours of CPU time"]
fn cyclic_reestimation() {
    check(ModelKind::Cyclic);
}
