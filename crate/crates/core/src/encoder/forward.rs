use std::sync::Arc;

use super::config::{EncoderConfig, HeadId};
use super::params::{ClassifierSet, EmbeddingSet, LayerSet, ModelParams, ParamSet};
use crate::dataset::vocab::{CLS, PAD, SEP};
use crate::dataset::TokenizedInstance;
use crate::error::{Error, Result};
use crate::numkernel::{argmax, softmax_rows, Element, Mask, Tape, Tensor, Var};

pub const LAYER_NORM_EPS: f64 = 1e-12;

/// Validated special-token layout of one sentence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    /// Length without trailing `[PAD]`.
    pub valid_len: usize,
    /// Length including trailing `[PAD]`.
    pub total_len: usize,
    pub first_sep: usize,
}

impl Layout {
    pub fn segment(&self, pos: usize) -> usize {
        usize::from(pos > self.first_sep)
    }
}

/// Checks `[CLS] … [SEP] … [SEP] [PAD]*` and the vocabulary/length bounds.
pub fn check_layout(tokens: &[u32], cfg: &EncoderConfig) -> Result<Layout> {
    if tokens.len() > cfg.max_seq_len {
        return Err(Error::Layout(format!(
            "{} tokens exceed max_seq_len {}",
            tokens.len(),
            cfg.max_seq_len
        )));
    }
    if let Some(&id) = tokens.iter().find(|&&t| t as usize >= cfg.vocab_size) {
        return Err(Error::OutOfVocabulary {
            id,
            vocab_size: cfg.vocab_size,
        });
    }
    let valid_len = tokens.iter().rposition(|&t| t != PAD).map_or(0, |p| p + 1);
    let body = &tokens[..valid_len];
    if body.first() != Some(&CLS) {
        return Err(Error::Layout("sequence must start with [CLS]".into()));
    }
    if body.iter().skip(1).any(|&t| t == CLS || t == PAD) {
        return Err(Error::Layout(
            "[CLS] or [PAD] inside the sequence body".into(),
        ));
    }
    let seps: Vec<usize> = body
        .iter()
        .enumerate()
        .filter(|(_, &t)| t == SEP)
        .map(|(i, _)| i)
        .collect();
    if seps.len() != 2 || seps[1] != valid_len - 1 || seps[0] + 1 >= seps[1] {
        return Err(Error::Layout(format!(
            "expected one internal [SEP] and a final [SEP], found [SEP] at {seps:?} in length {valid_len}"
        )));
    }
    Ok(Layout {
        valid_len,
        total_len: tokens.len(),
        first_sep: seps[0],
    })
}

/// One value per attention head, indexed by `(layer, head)`.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadGrid<T> {
    pub num_layers: usize,
    pub num_heads: usize,
    cells: Vec<T>,
}

impl<T> HeadGrid<T> {
    pub fn from_fn(num_layers: usize, num_heads: usize, mut f: impl FnMut(HeadId) -> T) -> Self {
        let cells = (0..num_layers)
            .flat_map(|l| (0..num_heads).map(move |h| HeadId::new(l, h)))
            .map(&mut f)
            .collect();
        Self {
            num_layers,
            num_heads,
            cells,
        }
    }

    pub fn from_vec(num_layers: usize, num_heads: usize, cells: Vec<T>) -> Result<Self> {
        if cells.len() != num_layers * num_heads {
            return Err(Error::Shape(format!(
                "{} cells for a {num_layers}x{num_heads} grid",
                cells.len()
            )));
        }
        Ok(Self {
            num_layers,
            num_heads,
            cells,
        })
    }

    pub fn get(&self, id: HeadId) -> &T {
        &self.cells[id.flat(self.num_heads)]
    }

    pub fn get_mut(&mut self, id: HeadId) -> &mut T {
        &mut self.cells[id.flat(self.num_heads)]
    }

    pub fn heads(&self) -> impl Iterator<Item = HeadId> + '_ {
        let t = self.num_heads;
        (0..self.cells.len()).map(move |i| HeadId::new(i / t, i % t))
    }

    pub fn iter(&self) -> impl Iterator<Item = (HeadId, &T)> {
        self.heads().zip(self.cells.iter())
    }

    pub fn cells(&self) -> &[T] {
        &self.cells
    }

    pub fn into_cells(self) -> Vec<T> {
        self.cells
    }

    pub fn map<U>(&self, mut f: impl FnMut(HeadId, &T) -> U) -> HeadGrid<U> {
        HeadGrid {
            num_layers: self.num_layers,
            num_heads: self.num_heads,
            cells: self.iter().map(|(id, c)| f(id, c)).collect(),
        }
    }
}

/// Per-head `S×S` attention matrices of one sentence.
pub type AttentionCapture<E = f64> = HeadGrid<Tensor<E>>;

/// Hidden states and attention of one encoded sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct SentenceEncoding<E: Element = f64> {
    /// Output of the embedding block, `S×d`.
    pub embedding: Tensor<E>,
    /// `hidden[m]` is the output of layer `m`, `S×d`.
    pub hidden: Vec<Tensor<E>>,
    pub cls_index: usize,
    pub sep_indices: Vec<usize>,
    pub attention: AttentionCapture<E>,
    /// Score-head output on the readout layer's `[CLS]` state.
    pub logit: E,
}

/// Which heads have their value-mixed output replaced by zeros.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeadMask {
    pub num_layers: usize,
    pub num_heads: usize,
    pruned: Vec<bool>,
}

impl HeadMask {
    pub fn none(cfg: &EncoderConfig) -> Self {
        Self {
            num_layers: cfg.num_layers,
            num_heads: cfg.num_heads,
            pruned: vec![false; cfg.total_heads()],
        }
    }

    pub fn new(cfg: &EncoderConfig, heads: &[HeadId]) -> Result<Self> {
        let mut m = Self::none(cfg);
        for &h in heads {
            if h.layer >= cfg.num_layers || h.head >= cfg.num_heads {
                return Err(Error::Validation(format!("head {h} out of range")));
            }
            if std::mem::replace(&mut m.pruned[h.flat(cfg.num_heads)], true) {
                return Err(Error::Validation(format!("head {h} listed twice")));
            }
        }
        Ok(m)
    }

    pub fn is_pruned(&self, id: HeadId) -> bool {
        self.pruned[id.flat(self.num_heads)]
    }

    pub fn count(&self) -> usize {
        self.pruned.iter().filter(|&&p| p).count()
    }

    fn check(&self, cfg: &EncoderConfig) -> Result<()> {
        if self.num_layers != cfg.num_layers || self.num_heads != cfg.num_heads {
            return Err(Error::Shape(format!(
                "head mask {}x{} for a {}x{} encoder",
                self.num_layers, self.num_heads, cfg.num_layers, cfg.num_heads
            )));
        }
        Ok(())
    }
}

pub(crate) fn load_params<E: Element>(
    tape: &mut Tape<E>,
    p: &ParamSet<Tensor<E>>,
    trainable: bool,
) -> ParamSet<Var> {
    p.map(|_, t| {
        if trainable {
            tape.leaf(t.clone())
        } else {
            tape.constant(t.clone())
        }
    })
}

/// Everything one batched forward needs besides parameters.
pub(crate) struct GraphSpec<'a, E: Element> {
    pub sentences: &'a [&'a [u32]],
    pub layouts: &'a [Layout],
    /// Layers to run; `readout_layer + 1` suffices for scoring.
    pub depth: usize,
    pub mask: Option<&'a HeadMask>,
    /// Per sentence: heads whose attention is replaced by a leaf with the given value.
    pub overrides: Option<&'a [Vec<(HeadId, Tensor<E>)>]>,
    /// Record attention variables for every head.
    pub capture: bool,
}

pub(crate) struct Graph {
    pub offsets: Vec<usize>,
    pub embedding: Var,
    pub hidden: Vec<Var>,
    /// `[sentence][flat head]`, filled when capturing.
    pub attention: Vec<Vec<Option<Var>>>,
    /// `[sentence]` in the order the overrides were given.
    pub override_leaves: Vec<Vec<Var>>,
    /// `[n_sentences, 1]`.
    pub logits: Var,
}

pub(crate) fn build_graph<E: Element>(
    tape: &mut Tape<E>,
    vars: &ParamSet<Var>,
    cfg: &EncoderConfig,
    readout_layer: usize,
    spec: &GraphSpec<'_, E>,
) -> Result<Graph> {
    let n_sent = spec.sentences.len();
    if n_sent == 0 {
        return Err(Error::Validation("empty sentence batch".into()));
    }
    if spec.depth == 0 || spec.depth > cfg.num_layers || readout_layer >= spec.depth {
        return Err(Error::Config(format!(
            "depth {} with readout layer {readout_layer}",
            spec.depth
        )));
    }
    if let Some(m) = spec.mask {
        m.check(cfg)?;
    }
    let mut offsets = Vec::with_capacity(n_sent);
    let mut ids = Vec::new();
    let mut positions = Vec::new();
    let mut segments = Vec::new();
    for (tokens, layout) in spec.sentences.iter().zip(spec.layouts) {
        offsets.push(ids.len());
        for (pos, &t) in tokens.iter().enumerate() {
            ids.push(t as usize);
            positions.push(pos);
            segments.push(layout.segment(pos));
        }
    }
    let total = ids.len();
    let emb: &EmbeddingSet<Var> = &vars.embeddings;
    let tok = tape.gather_rows(emb.token, ids)?;
    let pos = tape.gather_rows(emb.position, positions)?;
    let seg = tape.gather_rows(emb.segment, segments)?;
    let x = tape.add(tok, pos)?;
    let x = tape.add(x, seg)?;
    let eps = E::lit(LAYER_NORM_EPS);
    let embedding = tape.layer_norm(x, emb.norm_gain, emb.norm_bias, eps)?;

    let masks: Vec<Option<Mask>> = spec
        .layouts
        .iter()
        .map(|l| {
            (l.valid_len < l.total_len).then(|| {
                let valid: Vec<bool> = (0..l.total_len).map(|j| j < l.valid_len).collect();
                Mask::key_padding(l.total_len, &valid)
            })
        })
        .collect();
    let mut attention = vec![vec![None; cfg.total_heads()]; n_sent];
    let mut override_leaves: Vec<Vec<Var>> = vec![Vec::new(); n_sent];
    let dk = cfg.key_width;
    let d = cfg.model_width;
    let inv_sqrt = E::lit(1.0 / (dk as f64).sqrt());

    let mut hidden = Vec::with_capacity(spec.depth);
    let mut x = embedding;
    for (m, lp) in vars.layers.iter().take(spec.depth).enumerate() {
        let lp: &LayerSet<Var> = lp;
        let q = affine(tape, x, lp.query_weight, lp.query_bias)?;
        let k = affine(tape, x, lp.key_weight, lp.key_bias)?;
        let v = affine(tape, x, lp.value_weight, lp.value_bias)?;
        let mut parts = Vec::with_capacity(n_sent * cfg.num_heads);
        for s in 0..n_sent {
            let (o, n) = (offsets[s], spec.layouts[s].total_len);
            for h in 0..cfg.num_heads {
                let id = HeadId::new(m, h);
                let pruned = spec.mask.is_some_and(|mk| mk.is_pruned(id));
                let replacement = spec
                    .overrides
                    .and_then(|ov| ov[s].iter().find(|(hid, _)| *hid == id));
                if pruned && !spec.capture && replacement.is_none() {
                    continue;
                }
                let alpha = match replacement {
                    Some((_, value)) => {
                        if value.shape() != [n, n] {
                            return Err(Error::Shape(format!(
                                "override for head {id}: {:?}, expected [{n}, {n}]",
                                value.shape()
                            )));
                        }
                        let leaf = tape.leaf(value.clone());
                        override_leaves[s].push(leaf);
                        leaf
                    }
                    None => {
                        let qh = tape.slice_block(q, o, n, h * dk, dk)?;
                        let kh = tape.slice_block(k, o, n, h * dk, dk)?;
                        let scores = tape.matmul(qh, kh, true)?;
                        let scores = tape.scale(scores, inv_sqrt)?;
                        tape.softmax_rows(scores, masks[s].clone())?
                    }
                };
                if spec.capture {
                    attention[s][id.flat(cfg.num_heads)] = Some(alpha);
                }
                if pruned {
                    continue;
                }
                let vh = tape.slice_block(v, o, n, h * dk, dk)?;
                let mixed = tape.matmul(alpha, vh, false)?;
                parts.push((mixed, o, h * dk));
            }
        }
        let heads = tape.assemble(&parts, total, d)?;
        let attn = affine(tape, heads, lp.output_weight, lp.output_bias)?;
        let y = tape.add(x, attn)?;
        let y = tape.layer_norm(y, lp.attn_norm_gain, lp.attn_norm_bias, eps)?;
        let f = affine(tape, y, lp.ff_in_weight, lp.ff_in_bias)?;
        let f = tape.gelu(f)?;
        let f = affine(tape, f, lp.ff_out_weight, lp.ff_out_bias)?;
        let z = tape.add(y, f)?;
        x = tape.layer_norm(z, lp.ff_norm_gain, lp.ff_norm_bias, eps)?;
        hidden.push(x);
    }
    if let Some(ov) = spec.overrides {
        for (s, list) in ov.iter().enumerate() {
            if list.len() != override_leaves[s].len() {
                return Err(Error::Validation(format!(
                    "attention override for a layer beyond depth {} in sentence {s}",
                    spec.depth
                )));
            }
        }
    }
    let cls = tape.gather_rows(hidden[readout_layer], offsets.clone())?;
    let logits = classify(tape, cls, &vars.classifier)?;
    Ok(Graph {
        offsets,
        embedding,
        hidden,
        attention,
        override_leaves,
        logits,
    })
}

fn affine<E: Element>(tape: &mut Tape<E>, x: Var, w: Var, b: Var) -> Result<Var> {
    let y = tape.matmul(x, w, false)?;
    tape.add_row(y, b)
}

pub(crate) fn classify<E: Element>(
    tape: &mut Tape<E>,
    cls: Var,
    c: &ClassifierSet<Var>,
) -> Result<Var> {
    affine(tape, cls, c.weight, c.bias)
}

fn rows_of<E: Element>(t: &Tensor<E>, row0: usize, rows: usize) -> Tensor<E> {
    let c = t.cols();
    Tensor::from_parts(
        vec![rows, c],
        t.values()[row0 * c..(row0 + rows) * c].to_vec(),
    )
}

fn layouts<E: Element>(sentences: &[&[u32]], params: &ModelParams<E>) -> Result<Vec<Layout>> {
    sentences
        .iter()
        .map(|s| check_layout(s, &params.config))
        .collect()
}

/// Full forward over a batch with hidden states and attention for every layer.
pub fn encode_batch<E: Element>(
    sentences: &[&[u32]],
    params: &ModelParams<E>,
    mask: Option<&HeadMask>,
) -> Result<Vec<SentenceEncoding<E>>> {
    let layouts = layouts(sentences, params)?;
    let cfg = &params.config;
    let mut tape = Tape::new();
    let vars = load_params(&mut tape, &params.tensors, false);
    let g = build_graph(
        &mut tape,
        &vars,
        cfg,
        params.readout_layer,
        &GraphSpec {
            sentences,
            layouts: &layouts,
            depth: cfg.num_layers,
            mask,
            overrides: None,
            capture: true,
        },
    )?;
    let logits = tape.value(g.logits).clone();
    let emb = tape.value(g.embedding).clone();
    let hidden: Vec<Tensor<E>> = g.hidden.iter().map(|&h| tape.value(h).clone()).collect();
    let mut out = Vec::with_capacity(sentences.len());
    for (s, layout) in layouts.iter().enumerate() {
        let (o, n) = (g.offsets[s], layout.total_len);
        let attention = HeadGrid::from_vec(
            cfg.num_layers,
            cfg.num_heads,
            g.attention[s]
                .iter()
                .map(|a| tape.value(a.expect("captured")).clone())
                .collect(),
        )?;
        out.push(SentenceEncoding {
            embedding: rows_of(&emb, o, n),
            hidden: hidden.iter().map(|h| rows_of(h, o, n)).collect(),
            cls_index: 0,
            sep_indices: vec![layout.first_sep, layout.valid_len - 1],
            attention,
            logit: logits.values()[s],
        });
    }
    Ok(out)
}

/// Encodes one `[CLS] q [SEP] a [SEP]` sequence (trailing `[PAD]` allowed).
pub fn encode_pair<E: Element>(tokens: &[u32], params: &ModelParams<E>) -> Result<SentenceEncoding<E>> {
    Ok(encode_batch(&[tokens], params, None)?.remove(0))
}

/// Score-head outputs for a batch, computed only up to the readout layer.
pub fn score_sentences<E: Element>(
    sentences: &[&[u32]],
    params: &ModelParams<E>,
    mask: Option<&HeadMask>,
) -> Result<Vec<E>> {
    let layouts = layouts(sentences, params)?;
    let mut tape = Tape::new();
    let vars = load_params(&mut tape, &params.tensors, false);
    let g = build_graph(
        &mut tape,
        &vars,
        &params.config,
        params.readout_layer,
        &GraphSpec {
            sentences,
            layouts: &layouts,
            depth: params.readout_layer + 1,
            mask,
            overrides: None,
            capture: false,
        },
    )?;
    Ok(tape.value(g.logits).to_vec())
}

/// `[CLS]` hidden state of every layer for each sentence; rows are layers.
pub fn cls_features<E: Element>(
    sentences: &[&[u32]],
    params: &ModelParams<E>,
) -> Result<Vec<Tensor<E>>> {
    let layouts = layouts(sentences, params)?;
    let cfg = &params.config;
    let mut tape = Tape::new();
    let vars = load_params(&mut tape, &params.tensors, false);
    let g = build_graph(
        &mut tape,
        &vars,
        cfg,
        params.readout_layer,
        &GraphSpec {
            sentences,
            layouts: &layouts,
            depth: cfg.num_layers,
            mask: None,
            overrides: None,
            capture: false,
        },
    )?;
    Ok(g.offsets
        .iter()
        .map(|&o| {
            let rows: Vec<Vec<E>> = g
                .hidden
                .iter()
                .map(|&h| tape.value(h).row(o).to_vec())
                .collect();
            Tensor::from_rows(&rows).expect("equal widths")
        })
        .collect())
}

/// Five logits and encodings for one instance.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceScore<E: Element = f64> {
    pub logits: Vec<E>,
    pub encodings: Vec<SentenceEncoding<E>>,
}

impl<E: Element> InstanceScore<E> {
    /// 1-based argmax; lowest index on ties.
    pub fn prediction(&self) -> usize {
        predict(&self.logits)
    }

    pub fn probabilities(&self) -> Vec<f64> {
        probabilities(&self.logits)
    }
}

/// 1-based argmax of candidate logits, lowest index on ties.
pub fn predict<E: Element>(logits: &[E]) -> usize {
    argmax(logits).map_or(1, |i| i + 1)
}

pub fn probabilities<E: Element>(logits: &[E]) -> Vec<f64> {
    let t = Tensor::<f64>::from_parts(
        vec![1, logits.len()],
        logits.iter().map(|v| v.as_f64()).collect(),
    );
    softmax_rows(&t, None)
        .expect("unmasked softmax")
        .to_vec()
}

pub fn score_instance<E: Element>(
    inst: &TokenizedInstance,
    params: &ModelParams<E>,
) -> Result<InstanceScore<E>> {
    let sentences: Vec<&[u32]> = inst.sentences.iter().map(Vec::as_slice).collect();
    let encodings = encode_batch(&sentences, params, None)?;
    Ok(InstanceScore {
        logits: encodings.iter().map(|e| e.logit).collect(),
        encodings,
    })
}

fn check_heads(cfg: &EncoderConfig, heads: &[HeadId]) -> Result<()> {
    if heads.is_empty() {
        return Err(Error::Validation("no heads selected".into()));
    }
    HeadMask::new(cfg, heads).map(|_| ())
}

/// Output of one interpolated pass and the gradient at each selected head.
#[derive(Debug, Clone)]
pub struct ScaledPass<E: Element = f64> {
    pub scale: f64,
    pub output: E,
    /// Same order as the requested heads.
    pub gradients: Vec<Tensor<E>>,
}

/// Score-head output and `∂F/∂A` where the selected heads use `A = x·base`.
///
/// All `scales` run as independent copies of the sentence on one tape.
/// Heads not selected are computed from the (interpolated) hidden states.
pub fn scaled_attention_passes<E: Element>(
    tokens: &[u32],
    params: &ModelParams<E>,
    base: &AttentionCapture<E>,
    heads: &[HeadId],
    scales: &[f64],
    mask: Option<&HeadMask>,
) -> Result<Vec<ScaledPass<E>>> {
    let cfg = &params.config;
    check_heads(cfg, heads)?;
    if let Some(&x) = scales.iter().find(|x| !(0.0..=1.0).contains(*x)) {
        return Err(Error::Validation(format!("scale {x} outside [0, 1]")));
    }
    if scales.is_empty() {
        return Ok(Vec::new());
    }
    let layout = check_layout(tokens, cfg)?;
    let sentences: Vec<&[u32]> = vec![tokens; scales.len()];
    let layouts = vec![layout; scales.len()];
    let overrides: Vec<Vec<(HeadId, Tensor<E>)>> = scales
        .iter()
        .map(|&x| {
            let f = E::lit(x);
            heads
                .iter()
                .map(|&h| (h, base.get(h).scale(f)))
                .collect()
        })
        .collect();
    let depth = heads
        .iter()
        .map(|h| h.layer + 1)
        .max()
        .unwrap_or(1)
        .max(params.readout_layer + 1);
    let mut tape = Tape::new();
    let vars = load_params(&mut tape, &params.tensors, false);
    let g = build_graph(
        &mut tape,
        &vars,
        cfg,
        params.readout_layer,
        &GraphSpec {
            sentences: &sentences,
            layouts: &layouts,
            depth,
            mask,
            overrides: Some(&overrides),
            capture: false,
        },
    )?;
    let total = tape.sum(g.logits)?;
    let grads = tape.backward(total)?;
    let outputs = tape.value(g.logits).to_vec();
    Ok(scales
        .iter()
        .enumerate()
        .map(|(i, &scale)| ScaledPass {
            scale,
            output: outputs[i],
            gradients: g.override_leaves[i].iter().map(|&v| grads.get(v)).collect(),
        })
        .collect())
}

/// `F` with the selected heads' attention replaced by `x·α`, `α` from the ordinary pass.
pub fn forward_with_scaled_attention<E: Element>(
    tokens: &[u32],
    params: &ModelParams<E>,
    x: f64,
    heads: &[HeadId],
) -> Result<E> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Validation(format!("scale {x} outside [0, 1]")));
    }
    check_heads(&params.config, heads)?;
    let base = encode_pair(tokens, params)?.attention;
    let layout = check_layout(tokens, &params.config)?;
    let overrides = vec![heads
        .iter()
        .map(|&h| (h, base.get(h).scale(E::lit(x))))
        .collect::<Vec<_>>()];
    let depth = heads
        .iter()
        .map(|h| h.layer + 1)
        .max()
        .unwrap_or(1)
        .max(params.readout_layer + 1);
    let mut tape = Tape::new();
    let vars = load_params(&mut tape, &params.tensors, false);
    let g = build_graph(
        &mut tape,
        &vars,
        &params.config,
        params.readout_layer,
        &GraphSpec {
            sentences: &[tokens],
            layouts: &[layout],
            depth,
            mask: None,
            overrides: Some(&overrides),
            capture: false,
        },
    )?;
    Ok(tape.value(g.logits).values()[0])
}

/// Anything that maps token sequences to candidate scores.
pub trait Scorer: Sync {
    fn config(&self) -> &EncoderConfig;

    fn score_batch(&self, sentences: &[&[u32]]) -> Result<Vec<f64>>;
}

impl<E: Element> Scorer for ModelParams<E> {
    fn config(&self) -> &EncoderConfig {
        &self.config
    }

    fn score_batch(&self, sentences: &[&[u32]]) -> Result<Vec<f64>> {
        Ok(score_sentences(sentences, self, None)?
            .into_iter()
            .map(|v| v.as_f64())
            .collect())
    }
}

impl<S: Scorer + Send> Scorer for Arc<S> {
    fn config(&self) -> &EncoderConfig {
        (**self).config()
    }

    fn score_batch(&self, sentences: &[&[u32]]) -> Result<Vec<f64>> {
        (**self).score_batch(sentences)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn tiny(layers: usize) -> EncoderConfig {
        EncoderConfig {
            num_layers: layers,
            num_heads: 2,
            model_width: 8,
            key_width: 4,
            ff_width: 16,
            vocab_size: 20,
            max_seq_len: 16,
            seed: 5,
        }
    }

    const SENT: [u32; 8] = [CLS, 7, 8, 9, SEP, 10, 11, SEP];

    #[test]
    fn layout_errors() {
        let cfg = tiny(1);
        assert!(check_layout(&SENT, &cfg).is_ok());
        assert!(matches!(
            check_layout(&[CLS, 7, SEP, 25, SEP], &cfg),
            Err(Error::OutOfVocabulary { id: 25, .. })
        ));
        assert!(check_layout(&[7, SEP, 8, SEP], &cfg).is_err());
        assert!(check_layout(&[CLS, 7, 8, SEP], &cfg).is_err());
        assert!(check_layout(&[CLS, 7, PAD, SEP, 8, SEP], &cfg).is_err());
        assert!(check_layout(&[CLS, SEP, SEP], &cfg).is_err());
        let l = check_layout(&[CLS, 7, SEP, 8, SEP, PAD, PAD], &cfg).unwrap();
        assert_eq!((l.valid_len, l.total_len, l.first_sep), (5, 7, 2));
        assert!(check_layout(&[CLS; 17], &cfg).is_err());
    }

    #[test]
    fn capture_is_row_stochastic_and_deterministic() {
        let p = ModelParams::<f64>::init(tiny(2)).unwrap();
        let a = encode_pair(&SENT, &p).unwrap();
        let b = encode_pair(&SENT, &p).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.hidden.len(), 2);
        assert_eq!(a.sep_indices, vec![4, 7]);
        for (_, m) in a.attention.iter() {
            assert_eq!(m.shape(), &[8, 8]);
            for i in 0..8 {
                assert!((m.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn padding_is_invisible() {
        let p = ModelParams::<f64>::init(tiny(2)).unwrap();
        let plain = encode_pair(&SENT, &p).unwrap();
        let mut padded_tokens = SENT.to_vec();
        padded_tokens.extend([PAD, PAD, PAD]);
        let padded = encode_pair(&padded_tokens, &p).unwrap();
        for (_, m) in padded.attention.iter() {
            for i in 0..11 {
                assert!(m.row(i)[8..].iter().all(|&v| v == 0.0));
            }
        }
        let a = plain.hidden[1].row(0);
        let b = padded.hidden[1].row(0);
        let diff = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-12, "{diff}");
        assert!((plain.logit - padded.logit).abs() < 1e-12);
    }

    #[test]
    fn batch_equals_single() {
        let p = ModelParams::<f64>::init(tiny(2)).unwrap();
        let other: [u32; 6] = [CLS, 12, SEP, 13, 14, SEP];
        let batch = score_sentences(&[&SENT, &other], &p, None).unwrap();
        let one = score_sentences(&[&other], &p, None).unwrap();
        assert!((batch[1] - one[0]).abs() < 1e-12);
        let enc = encode_pair(&SENT, &p).unwrap();
        assert!((enc.logit - batch[0]).abs() < 1e-12);
    }

    #[test]
    fn scaled_attention_identity_and_range() {
        let p = ModelParams::<f64>::init(tiny(2)).unwrap();
        let heads: Vec<HeadId> = p.config.head_ids().collect();
        let f1 = forward_with_scaled_attention(&SENT, &p, 1.0, &heads).unwrap();
        let plain = score_sentences(&[&SENT], &p, None).unwrap()[0];
        assert_eq!(f1.to_bits(), plain.to_bits());
        assert!(forward_with_scaled_attention(&SENT, &p, 1.5, &heads).is_err());
        assert!(forward_with_scaled_attention(&SENT, &p, 0.5, &[]).is_err());
    }

    #[test]
    fn zero_scale_removes_value_mixing() {
        // x = 0 on every head equals pruning every head.
        let p = ModelParams::<f64>::init(tiny(2)).unwrap();
        let heads: Vec<HeadId> = p.config.head_ids().collect();
        let f0 = forward_with_scaled_attention(&SENT, &p, 0.0, &heads).unwrap();
        let mask = HeadMask::new(&p.config, &heads).unwrap();
        let pruned = score_sentences(&[&SENT], &p, Some(&mask)).unwrap()[0];
        assert!((f0 - pruned).abs() < 1e-12);
    }

    #[test]
    fn f32_tracks_f64() {
        let p = ModelParams::<f64>::init(tiny(2)).unwrap();
        let q: ModelParams<f32> = p.cast();
        let a = score_sentences(&[&SENT], &p, None).unwrap()[0];
        let b = score_sentences(&[&SENT], &q, None).unwrap()[0];
        assert!((a - b as f64).abs() < 1e-4);
    }

    #[test]
    fn head_mask_validation() {
        let cfg = tiny(2);
        assert!(HeadMask::new(&cfg, &[HeadId::new(2, 0)]).is_err());
        assert!(HeadMask::new(&cfg, &[HeadId::new(0, 1), HeadId::new(0, 1)]).is_err());
        assert_eq!(HeadMask::new(&cfg, &[HeadId::new(1, 1)]).unwrap().count(), 1);
    }
}
