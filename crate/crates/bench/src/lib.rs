//! Shared fixtures for the criterion benches.

use anosov_core::contact::{assemble, Assembly, ContactTolerances};
use anosov_core::expansion::{cat_norm, NormForm};
use anosov_core::fields::{Profile, Shape};
use anosov_core::sampling::sample_points;
use anosov_core::sync::{SyncParams, Synchronizer};
use anosov_core::{FlowSpec, Model, ModelPoint, Role};

pub use anosov_core::Jet;

pub fn points(n: usize) -> Vec<ModelPoint> {
    sample_points(Model::Cat, n, 7)
}

pub fn perturbed_unstable(delta: f64) -> NormForm {
    cat_norm(Role::Unstable, Profile::single(delta, Shape::Sin))
}

pub fn cat_assembly(delta: f64, sample: &[ModelPoint]) -> Assembly {
    let spec = FlowSpec::new(Model::Cat);
    let s = cat_norm(Role::Stable, Profile::zero());
    assemble("bench", perturbed_unstable(delta), s, spec, sample, &ContactTolerances::default()).expect("valid assembly")
}

pub fn synchronizer(t: f64, sample: &[ModelPoint]) -> Synchronizer {
    let params = SyncParams { t, ..SyncParams::default() };
    Synchronizer::new(perturbed_unstable(0.05), FlowSpec::new(Model::Cat), params, sample).expect("valid synchronizer")
}
