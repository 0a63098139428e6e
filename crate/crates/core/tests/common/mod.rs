#![allow(dead_code)]

use linkprobe::dataset::{GenerationConfig, SyntheticGraphConfig, SyntheticTask};
use linkprobe::encoder::{EncoderConfig, ModelParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use linkprobe::Tensor;

pub fn tiny_config(layers: usize, vocab: usize) -> EncoderConfig {
    EncoderConfig {
        num_layers: layers,
        num_heads: 2,
        model_width: 8,
        key_width: 4,
        ff_width: 16,
        vocab_size: vocab,
        max_seq_len: 24,
        seed: 17,
    }
}

pub fn tiny_model(layers: usize, vocab: usize) -> ModelParams {
    ModelParams::init(tiny_config(layers, vocab)).unwrap()
}

pub fn small_task(train: usize, dev: usize) -> SyntheticTask {
    SyntheticTask::generate(
        &SyntheticGraphConfig::default(),
        &GenerationConfig {
            train_size: train,
            dev_size: dev,
            ..Default::default()
        },
    )
    .unwrap()
}

pub fn random_tensor(shape: &[usize], seed: u64, scale: f64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(shape, |_| scale * (rng.random::<f64>() * 2.0 - 1.0))
}
