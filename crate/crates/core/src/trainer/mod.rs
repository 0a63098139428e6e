//! Fine-tuning, frozen-encoder probing, evaluation, and checkpoints.

mod checkpoint;
mod optim;

pub use checkpoint::{
    checkpoint_from_bytes, checkpoint_to_bytes, load_checkpoint, save_checkpoint, Checkpoint,
    TrainMeta, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use optim::{Adam, LinearSchedule, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{TokenizedInstance, NUM_CHOICES};
use crate::encoder::{
    build_graph, check_layout, classify, cls_features, load_params, predict, GraphSpec,
    ModelParams, ParamSet, Scorer,
};
use crate::error::{Error, Result};
use crate::numkernel::{Element, Precision, Tape, Tensor};

/// Which parameters a run updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    /// Every parameter.
    Full,
    /// Only the score head, on the current readout layer.
    OutputOnly,
    /// A fresh score head on layer `k`, encoder frozen.
    ProbeAtLayer(usize),
}

impl std::fmt::Display for TrainMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TrainMode::Full => write!(f, "full"),
            TrainMode::OutputOnly => write!(f, "output_only"),
            TrainMode::ProbeAtLayer(k) => write!(f, "probe_at_layer({k})"),
        }
    }
}

impl std::str::FromStr for TrainMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(TrainMode::Full),
            "output_only" | "output-only" => Ok(TrainMode::OutputOnly),
            _ => s
                .strip_prefix("probe_at_layer(")
                .and_then(|r| r.strip_suffix(')'))
                .or_else(|| s.strip_prefix("probe:"))
                .and_then(|k| k.parse().ok())
                .map(TrainMode::ProbeAtLayer)
                .ok_or_else(|| Error::Config(format!("unknown training mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub mode: TrainMode,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub gradient_accumulation_steps: usize,
    pub seed: u64,
    pub precision: Precision,
    pub warmup_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            mode: TrainMode::Full,
            epochs: 3,
            learning_rate: 5e-4,
            batch_size: 8,
            gradient_accumulation_steps: 2,
            seed: 0,
            precision: Precision::F64,
            warmup_fraction: 0.1,
        }
    }
}

impl TrainConfig {
    /// Recipe for training the default encoder from random init on the
    /// synthetic task; the grid defaults assume a pretrained start.
    pub fn from_scratch() -> Self {
        Self {
            epochs: 12,
            learning_rate: 1e-3,
            batch_size: 16,
            gradient_accumulation_steps: 1,
            ..Self::default()
        }
    }

    pub fn validate(&self, num_layers: usize) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.gradient_accumulation_steps == 0 {
            return Err(Error::Config(
                "epochs, batch_size and gradient_accumulation_steps must be positive".into(),
            ));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Config(format!(
                "learning rate {} must be positive",
                self.learning_rate
            )));
        }
        if !(0.0..=1.0).contains(&self.warmup_fraction) {
            return Err(Error::Config(format!(
                "warmup fraction {} outside [0, 1]",
                self.warmup_fraction
            )));
        }
        if let TrainMode::ProbeAtLayer(k) = self.mode {
            if k >= num_layers {
                return Err(Error::Config(format!(
                    "probe layer {k} outside [0, {num_layers})"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossPoint {
    pub step: usize,
    pub epoch: usize,
    pub loss: f64,
    pub learning_rate: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub losses: Vec<LossPoint>,
}

fn check_data(data: &[TokenizedInstance]) -> Result<()> {
    if data.is_empty() {
        return Err(Error::Validation("empty training set".into()));
    }
    for inst in data {
        if inst.sentences.len() != NUM_CHOICES || !(1..=NUM_CHOICES).contains(&inst.gold_index) {
            return Err(Error::Validation(format!(
                "instance {} needs {NUM_CHOICES} sentences and a gold index in [1, {NUM_CHOICES}]",
                inst.id
            )));
        }
    }
    Ok(())
}

/// Trains a copy of `params` according to `cfg`.
pub fn train(params: &ModelParams, data: &[TokenizedInstance], cfg: &TrainConfig) -> Result<TrainOutcome> {
    params.validate()?;
    cfg.validate(params.config.num_layers)?;
    check_data(data)?;
    match cfg.precision {
        Precision::F64 => train_in(params.clone(), data, cfg),
        Precision::F32 => train_in(params.cast::<f32>(), data, cfg),
    }
}

fn train_in<E: Element>(
    mut params: ModelParams<E>,
    data: &[TokenizedInstance],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    let features = match cfg.mode {
        TrainMode::Full => None,
        TrainMode::OutputOnly => Some(layer_features(&params, data, params.readout_layer)?),
        TrainMode::ProbeAtLayer(k) => {
            params.attach_classifier(k, cfg.seed)?;
            Some(layer_features(&params, data, k)?)
        }
    };
    let micro_per_epoch = data.len().div_ceil(cfg.batch_size);
    let steps_per_epoch = micro_per_epoch.div_ceil(cfg.gradient_accumulation_steps);
    let schedule = LinearSchedule::new(
        cfg.learning_rate,
        steps_per_epoch * cfg.epochs,
        cfg.warmup_fraction,
    );
    let mut opt = match &features {
        None => Adam::new(&params.tensors.values()),
        Some(_) => Adam::new(&[&params.tensors.classifier.weight, &params.tensors.classifier.bias]),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut losses = Vec::with_capacity(steps_per_epoch * cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let batches: Vec<&[usize]> = order.chunks(cfg.batch_size).collect();
        for group in batches.chunks(cfg.gradient_accumulation_steps) {
            let step = losses.len();
            let mut total: Option<Vec<Vec<f64>>> = None;
            let mut loss = 0.0;
            for batch in group {
                let (l, g) = match &features {
                    None => full_gradients(&params, data, batch)?,
                    Some(f) => head_gradients(&params, f, data, batch)?,
                };
                if !l.is_finite() {
                    return Err(Error::Divergence { step, loss: l });
                }
                loss += l;
                match &mut total {
                    None => total = Some(g),
                    Some(t) => {
                        for (a, b) in t.iter_mut().zip(g) {
                            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                        }
                    }
                }
            }
            let n = group.len() as f64;
            let mut grads = total.expect("nonempty group");
            grads.iter_mut().flatten().for_each(|g| *g /= n);
            let lr = schedule.rate(step);
            match &features {
                None => {
                    let mut slots: Vec<&mut Tensor<E>> =
                        params.tensors.named_mut().into_iter().map(|(_, t)| t).collect();
                    opt.step(&mut slots, &grads, lr);
                }
                Some(_) => {
                    let c = &mut params.tensors.classifier;
                    opt.step(&mut [&mut c.weight, &mut c.bias], &grads, lr);
                }
            }
            losses.push(LossPoint {
                step,
                epoch,
                loss: loss / n,
                learning_rate: lr,
            });
        }
    }
    if !params.all_finite() {
        return Err(Error::Divergence {
            step: losses.len(),
            loss: f64::NAN,
        });
    }
    Ok(TrainOutcome {
        params: params.cast(),
        losses,
    })
}

/// Mean cross-entropy over `data` and its gradient for every parameter.
pub fn loss_gradients(params: &ModelParams, data: &[TokenizedInstance]) -> Result<(f64, ParamSet<Tensor>)> {
    check_data(data)?;
    let batch: Vec<usize> = (0..data.len()).collect();
    let (loss, grads) = full_gradients(params, data, &batch)?;
    if !loss.is_finite() {
        return Err(Error::NonFinite(format!("loss {loss}")));
    }
    let mut flat = grads.into_iter();
    let out = params.tensors.try_map(|_, t| {
        Tensor::new(t.shape(), flat.next().expect("one gradient per slot"))
    })?;
    Ok((loss, out))
}

fn targets(data: &[TokenizedInstance], batch: &[usize]) -> Vec<usize> {
    batch.iter().map(|&i| data[i].gold_index - 1).collect()
}

fn full_gradients<E: Element>(
    params: &ModelParams<E>,
    data: &[TokenizedInstance],
    batch: &[usize],
) -> Result<(f64, Vec<Vec<f64>>)> {
    let sentences: Vec<&[u32]> = batch
        .iter()
        .flat_map(|&i| data[i].sentences.iter().map(Vec::as_slice))
        .collect();
    let layouts = sentences
        .iter()
        .map(|s| check_layout(s, &params.config))
        .collect::<Result<Vec<_>>>()?;
    let mut tape = Tape::new();
    let vars = load_params(&mut tape, &params.tensors, true);
    let g = build_graph(
        &mut tape,
        &vars,
        &params.config,
        params.readout_layer,
        &GraphSpec {
            sentences: &sentences,
            layouts: &layouts,
            depth: params.readout_layer + 1,
            mask: None,
            overrides: None,
            capture: false,
        },
    )?;
    let logits = tape.reshape(g.logits, &[batch.len(), NUM_CHOICES])?;
    let loss = tape.cross_entropy(logits, targets(data, batch))?;
    let value = tape.value(loss).item().as_f64();
    if !value.is_finite() {
        return Ok((value, Vec::new()));
    }
    let grads = tape.backward(loss)?;
    let out = vars
        .values()
        .into_iter()
        .map(|&v| grads.get(v).values().iter().map(|x| x.as_f64()).collect())
        .collect();
    Ok((value, out))
}

/// `[CLS]` state of `layer` for each instance, `5×d`.
fn layer_features<E: Element>(
    params: &ModelParams<E>,
    data: &[TokenizedInstance],
    layer: usize,
) -> Result<Vec<Tensor<E>>> {
    data.par_iter()
        .map(|inst| {
            let sentences: Vec<&[u32]> = inst.sentences.iter().map(Vec::as_slice).collect();
            let per_sentence = cls_features(&sentences, params)?;
            let rows: Vec<Vec<E>> = per_sentence.iter().map(|t| t.row(layer).to_vec()).collect();
            Tensor::from_rows(&rows)
        })
        .collect()
}

fn stack<E: Element>(features: &[Tensor<E>], batch: &[usize]) -> Tensor<E> {
    let cols = features[0].cols();
    let mut values = Vec::with_capacity(batch.len() * NUM_CHOICES * cols);
    for &i in batch {
        values.extend_from_slice(features[i].values());
    }
    Tensor::from_parts(vec![batch.len() * NUM_CHOICES, cols], values)
}

fn head_gradients<E: Element>(
    params: &ModelParams<E>,
    features: &[Tensor<E>],
    data: &[TokenizedInstance],
    batch: &[usize],
) -> Result<(f64, Vec<Vec<f64>>)> {
    let mut tape = Tape::new();
    let x = tape.constant(stack(features, batch));
    let head = params.tensors.classifier.map(|_, t| tape.leaf(t.clone()));
    let logits = classify(&mut tape, x, &head)?;
    let logits = tape.reshape(logits, &[batch.len(), NUM_CHOICES])?;
    let loss = tape.cross_entropy(logits, targets(data, batch))?;
    let value = tape.value(loss).item().as_f64();
    if !value.is_finite() {
        return Ok((value, Vec::new()));
    }
    let grads = tape.backward(loss)?;
    let out = [head.weight, head.bias]
        .iter()
        .map(|&v| grads.get(v).values().iter().map(|x| x.as_f64()).collect())
        .collect();
    Ok((value, out))
}

/// Accuracy plus everything downstream metrics need.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: f64,
    /// 1-based.
    pub predictions: Vec<usize>,
    /// 1-based.
    pub golds: Vec<usize>,
    pub logits: Vec<Vec<f64>>,
}

impl Evaluation {
    pub fn from_logits(logits: Vec<Vec<f64>>, golds: Vec<usize>) -> Result<Self> {
        if logits.len() != golds.len() || logits.is_empty() {
            return Err(Error::Validation(format!(
                "{} logit rows for {} gold labels",
                logits.len(),
                golds.len()
            )));
        }
        let predictions: Vec<usize> = logits.iter().map(|l| predict(l)).collect();
        let hits = predictions.iter().zip(&golds).filter(|(p, g)| p == g).count();
        Ok(Self {
            accuracy: hits as f64 / golds.len() as f64,
            predictions,
            golds,
            logits,
        })
    }

    pub fn correct(&self) -> Vec<bool> {
        self.predictions
            .iter()
            .zip(&self.golds)
            .map(|(p, g)| p == g)
            .collect()
    }
}

const EVAL_CHUNK: usize = 16;

/// Scores every instance and compares the argmax (lowest index on ties) with gold.
pub fn evaluate_accuracy<S: Scorer + ?Sized>(
    scorer: &S,
    data: &[TokenizedInstance],
) -> Result<Evaluation> {
    check_data(data)?;
    let chunks: Vec<Vec<Vec<f64>>> = data
        .par_chunks(EVAL_CHUNK)
        .map(|chunk| {
            let sentences: Vec<&[u32]> = chunk
                .iter()
                .flat_map(|i| i.sentences.iter().map(Vec::as_slice))
                .collect();
            let flat = scorer.score_batch(&sentences)?;
            Ok(flat.chunks(NUM_CHOICES).map(<[f64]>::to_vec).collect())
        })
        .collect::<Result<_>>()?;
    let logits: Vec<Vec<f64>> = chunks.into_iter().flatten().collect();
    Evaluation::from_logits(logits, data.iter().map(|i| i.gold_index).collect())
}

/// One point of the learning-rate / batch / accumulation grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub gradient_accumulation_steps: usize,
}

pub const GRID_LEARNING_RATES: [f64; 5] = [5e-4, 1e-5, 3e-5, 5e-5, 5e-6];
pub const GRID_BATCH_SIZES: [usize; 3] = [8, 16, 32];
pub const GRID_ACCUMULATION: [usize; 3] = [2, 4, 8];

pub fn default_grid() -> Vec<GridPoint> {
    let mut out = Vec::new();
    for &learning_rate in &GRID_LEARNING_RATES {
        for &batch_size in &GRID_BATCH_SIZES {
            for &gradient_accumulation_steps in &GRID_ACCUMULATION {
                out.push(GridPoint {
                    learning_rate,
                    batch_size,
                    gradient_accumulation_steps,
                });
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub point: GridPoint,
    pub dev_accuracy: f64,
}

/// Trains once per grid point and reports dev accuracy; the best point is listed first.
pub fn grid_search(
    params: &ModelParams,
    train_set: &[TokenizedInstance],
    dev_set: &[TokenizedInstance],
    base: &TrainConfig,
    grid: &[GridPoint],
) -> Result<Vec<GridResult>> {
    let mut results = Vec::with_capacity(grid.len());
    for &point in grid {
        let cfg = TrainConfig {
            learning_rate: point.learning_rate,
            batch_size: point.batch_size,
            gradient_accumulation_steps: point.gradient_accumulation_steps,
            ..*base
        };
        let out = train(params, train_set, &cfg)?;
        let eval = evaluate_accuracy(&out.params, dev_set)?;
        results.push(GridResult {
            point,
            dev_accuracy: eval.accuracy,
        });
    }
    results.sort_by(|a, b| b.dev_accuracy.total_cmp(&a.dev_accuracy));
    Ok(results)
}

#[cfg(test)]
mod tests;
