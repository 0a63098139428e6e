use super::*;
use crate::dataset::{GenerationConfig, SyntheticGraphConfig, SyntheticTask};
use crate::encoder::EncoderConfig;

fn task(train: usize, dev: usize) -> SyntheticTask {
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

fn small_model(vocab: usize) -> ModelParams {
    ModelParams::init(EncoderConfig {
        num_layers: 2,
        num_heads: 2,
        model_width: 16,
        key_width: 8,
        ff_width: 32,
        vocab_size: vocab,
        max_seq_len: 24,
        seed: 3,
    })
    .unwrap()
}

#[test]
fn output_only_and_probe_leave_the_encoder_untouched() {
    let t = task(24, 4);
    let p = small_model(t.vocab.len());
    let before = p.encoder_checksum();
    for mode in [TrainMode::OutputOnly, TrainMode::ProbeAtLayer(0)] {
        let cfg = TrainConfig {
            mode,
            epochs: 2,
            ..Default::default()
        };
        let out = train(&p, &t.train, &cfg).unwrap();
        assert_eq!(out.params.encoder_checksum(), before, "{mode}");
        assert_ne!(out.params.checksum(), p.checksum(), "{mode}");
    }
    let probed = train(
        &p,
        &t.train,
        &TrainConfig {
            mode: TrainMode::ProbeAtLayer(0),
            epochs: 1,
            ..Default::default()
        },
    )
    .unwrap();
    assert_eq!(probed.params.readout_layer, 0);
}

#[test]
fn full_training_is_deterministic_and_changes_the_encoder() {
    let t = task(16, 4);
    let p = small_model(t.vocab.len());
    let cfg = TrainConfig {
        epochs: 1,
        seed: 9,
        ..Default::default()
    };
    let a = train(&p, &t.train, &cfg).unwrap();
    let b = train(&p, &t.train, &cfg).unwrap();
    assert_eq!(a.params, b.params);
    assert_eq!(a.losses, b.losses);
    assert_ne!(a.params.encoder_checksum(), p.encoder_checksum());
    // 16 instances / batch 8 / accumulation 2 = one optimizer step per epoch.
    assert_eq!(a.losses.len(), 1);
}

#[test]
fn overfits_a_single_batch() {
    let t = task(8, 1);
    let p = ModelParams::init(EncoderConfig {
        model_width: 32,
        key_width: 16,
        ff_width: 64,
        ..*small_model(t.vocab.len()).config()
    })
    .unwrap();
    let cfg = TrainConfig {
        epochs: 300,
        batch_size: 8,
        gradient_accumulation_steps: 1,
        learning_rate: 3e-3,
        warmup_fraction: 0.0,
        ..Default::default()
    };
    let out = train(&p, &t.train, &cfg).unwrap();
    let last = out.losses.last().unwrap().loss;
    assert!(last < 0.05, "final loss {last}");
}

#[test]
fn f32_training_runs() {
    let t = task(16, 4);
    let p = small_model(t.vocab.len());
    let cfg = TrainConfig {
        epochs: 1,
        precision: Precision::F32,
        ..Default::default()
    };
    let out = train(&p, &t.train, &cfg).unwrap();
    assert!(out.params.all_finite());
}

#[test]
fn invalid_configs_are_rejected() {
    let t = task(8, 1);
    let p = small_model(t.vocab.len());
    for cfg in [
        TrainConfig {
            epochs: 0,
            ..Default::default()
        },
        TrainConfig {
            learning_rate: -1.0,
            ..Default::default()
        },
        TrainConfig {
            mode: TrainMode::ProbeAtLayer(2),
            ..Default::default()
        },
    ] {
        assert!(train(&p, &t.train, &cfg).is_err());
    }
    assert!(train(&p, &[], &TrainConfig::default()).is_err());
}

#[test]
fn huge_learning_rate_reports_divergence_or_finishes_finite() {
    let t = task(8, 1);
    let p = small_model(t.vocab.len());
    let cfg = TrainConfig {
        learning_rate: 1e300,
        epochs: 5,
        ..Default::default()
    };
    match train(&p, &t.train, &cfg) {
        Err(Error::Divergence { .. }) => {}
        Ok(out) => assert!(out.params.all_finite()),
        Err(e) => panic!("unexpected {e}"),
    }
}

#[test]
fn evaluation_counts_hits() {
    let golds = vec![1, 2, 3, 4, 5, 1, 2, 3, 4, 5];
    let oracle: Vec<Vec<f64>> = golds
        .iter()
        .map(|&g| (1..=5).map(|k| if k == g { 1.0 } else { 0.0 }).collect())
        .collect();
    let e = Evaluation::from_logits(oracle, golds.clone()).unwrap();
    assert_eq!(e.accuracy, 1.0);
    // Always predicts candidate 1 (ties), gold is 1 twice.
    let flat = vec![vec![0.0; 5]; 10];
    let e = Evaluation::from_logits(flat, golds.clone()).unwrap();
    assert_eq!(e.predictions, vec![1; 10]);
    assert!((e.accuracy - 0.2).abs() < 1e-12);
    // Hand-counted fixture: hits at rows 0, 3, 4, 9.
    let preds = [1, 5, 5, 4, 5, 2, 1, 1, 1, 5];
    let logits: Vec<Vec<f64>> = preds
        .iter()
        .map(|&p| (1..=5).map(|k| if k == p { 2.0 } else { -1.0 }).collect())
        .collect();
    let e = Evaluation::from_logits(logits, golds).unwrap();
    assert!((e.accuracy - 0.4).abs() < 1e-12);
    assert!(Evaluation::from_logits(vec![], vec![]).is_err());
}

#[test]
fn evaluate_matches_per_instance_scoring() {
    let t = task(8, 6);
    let p = small_model(t.vocab.len());
    let e = evaluate_accuracy(&p, &t.dev).unwrap();
    for (i, inst) in t.dev.iter().enumerate() {
        let s = crate::encoder::score_instance(inst, &p).unwrap();
        for k in 0..5 {
            assert!((s.logits[k] - e.logits[i][k]).abs() < 1e-12);
        }
        assert_eq!(s.prediction(), e.predictions[i]);
    }
}

#[test]
fn mode_parses() {
    assert_eq!("full".parse::<TrainMode>().unwrap(), TrainMode::Full);
    assert_eq!(
        "probe_at_layer(3)".parse::<TrainMode>().unwrap(),
        TrainMode::ProbeAtLayer(3)
    );
    assert_eq!("probe:2".parse::<TrainMode>().unwrap(), TrainMode::ProbeAtLayer(2));
    assert!("probe".parse::<TrainMode>().is_err());
    assert_eq!(default_grid().len(), 45);
}
