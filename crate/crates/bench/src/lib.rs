//! Fixtures shared by the benchmarks.

use std::sync::Arc;

use csgeim::analytic::AnalyticManifoldSpec;
use csgeim::csgeim::BvlsProblem;
use csgeim::experiments::StudyData;
use csgeim::geim::GeimModel;
use csgeim::{NormKind, SensorRegion};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Normalized analytic sets on a `nodes x nodes` grid with `per_axis^2`
/// training parameters.
pub fn analytic_data(nodes: usize, per_axis: usize) -> StudyData {
    let spec = AnalyticManifoldSpec {
        nodes,
        mu_per_axis: per_axis,
        ..Default::default()
    };
    StudyData::new(
        Arc::new(spec.domain().unwrap()),
        spec.generate().unwrap(),
        spec.generate_test().unwrap(),
        0.0,
    )
    .unwrap()
}

pub fn analytic_model(data: &StudyData, n: usize, m: usize) -> GeimModel {
    data.train(SensorRegion::All, NormKind::L2, n, m).unwrap()
}

/// Random dense problem with a symmetric box.
pub fn random_bvls(seed: u64, m: usize, n: usize) -> BvlsProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0));
    let b = DVector::from_fn(m, |_, _| rng.random_range(-2.0..2.0));
    let bounds: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
    BvlsProblem::symmetric(a, b, &bounds).unwrap()
}
