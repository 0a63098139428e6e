//! Shared fixtures for the benchmarks.

use linkprobe::dataset::{GenerationConfig, SyntheticGraphConfig, SyntheticTask};
use linkprobe::encoder::{EncoderConfig, ModelParams};
use linkprobe::Tensor;

/// A small synthetic task and a randomly initialized default-shape model.
pub fn fixture(dev_size: usize) -> (SyntheticTask, ModelParams) {
    let task = SyntheticTask::generate(
        &SyntheticGraphConfig::default(),
        &GenerationConfig {
            train_size: 10,
            dev_size,
            ..Default::default()
        },
    )
    .expect("default graph supports the request");
    let params = ModelParams::init(EncoderConfig {
        vocab_size: task.vocab.len(),
        ..Default::default()
    })
    .expect("default config is valid");
    (task, params)
}

/// Deterministic dense matrix with entries in [-1, 1).
pub fn matrix(rows: usize, cols: usize, salt: u64) -> Tensor {
    let mut state = salt.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    Tensor::from_fn(&[rows, cols], |_| {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (state >> 11) as f64 / (1u64 << 52) as f64 - 1.0
    })
}
