//! Small corpora and configs for end-to-end runs.

use std::path::Path;

use camrank::data::{synthesize, DatasetManifest, DifficultySpec};
use camrank::model::ModelConfig;
use camrank::pipeline::TrainConfig;

/// Toy architecture on 32 px scenes; a few iterations take well under a second.
pub fn tiny_config(iterations: usize) -> TrainConfig {
    TrainConfig {
        input_size: 32,
        batch_size: 2,
        iterations,
        learning_rate: 1e-3,
        seed: 5,
        anchor_scales: vec![4.0, 8.0],
        aspect_ratios: vec![1.0, 2.0],
        checkpoint_every: 2,
        model: ModelConfig::toy(),
        ..TrainConfig::default()
    }
}

pub fn corpus(dir: &Path, n: usize, size: usize) -> DatasetManifest {
    synthesize(13, n, size, &DifficultySpec::default(), dir).expect("synthetic corpus")
}
