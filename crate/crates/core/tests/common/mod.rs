#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rkn_core::rkn::{RknArch, RknModel};
use rkn_core::ssm::{generate_dataset, make_cv_model, Dataset, InitialLaw, ScenarioId, Split};

/// Model with the output heads filled with small random weights, so every
/// parameter reaches the loss.
pub fn lively_model(seed: u64, scale: f64) -> RknModel {
    let mut model = RknModel::new(RknArch::cv(), seed);
    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0xA5A5);
    let heads: Vec<_> = model
        .params
        .infos()
        .iter()
        .filter(|i| i.name.contains(".out."))
        .map(|i| (i.offset, i.len()))
        .collect();
    let flat = model.params.flat_mut();
    for (off, len) in heads {
        for v in &mut flat[off..off + len] {
            *v = rng.random_range(-scale..scale);
        }
    }
    model
}

pub fn cv_dataset(scenario: ScenarioId, count: usize, len: usize, seed: u64, split: Split) -> Dataset {
    let model = make_cv_model(1.0, 0.01).unwrap();
    generate_dataset(&model, &[(scenario, count)], &InitialLaw::cv_default(), len, seed, split).unwrap()
}

pub fn rel_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}
