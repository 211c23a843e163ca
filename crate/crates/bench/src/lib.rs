//! Fixtures shared by the benchmarks in `benches/`.

use psmtr_core::regression::TrainingSet;
use psmtr_core::synth::{plant_regression_instance, SynthConfig, SynthKind};
use psmtr_core::CpFactors;

/// A noisy rank-2 planted problem with `persons` inputs of shape `shape`.
pub fn planted(persons: usize, images: usize, shape: (usize, usize)) -> (TrainingSet, CpFactors) {
    let cfg = SynthConfig {
        seed: 7,
        kind: SynthKind::Planted,
        persons,
        images,
        shape,
        noise: 0.01,
        planted_rank: 2,
        ..SynthConfig::default()
    };
    plant_regression_instance(&cfg).expect("valid planted config")
}
