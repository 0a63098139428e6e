use serde::{Deserialize, Serialize};

use crate::dataset::TokenizedInstance;
use crate::encoder::{score_sentences, EncoderConfig, HeadGrid, HeadId, HeadMask, ModelParams, Scorer};
use crate::error::Result;
use crate::trainer::evaluate_accuracy;

/// Ordered heads to prune.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PruneSpec {
    heads: Vec<HeadId>,
}

impl PruneSpec {
    /// Rejects duplicates and out-of-range heads.
    pub fn new(cfg: &EncoderConfig, heads: Vec<HeadId>) -> Result<Self> {
        HeadMask::new(cfg, &heads)?;
        Ok(Self { heads })
    }

    pub fn heads(&self) -> &[HeadId] {
        &self.heads
    }
}

/// Model whose pruned heads contribute a zero vector before the output projection.
#[derive(Debug, Clone)]
pub struct PrunedModel<'a> {
    pub params: &'a ModelParams,
    pub mask: HeadMask,
}

pub fn prune_heads<'a>(params: &'a ModelParams, spec: &PruneSpec) -> Result<PrunedModel<'a>> {
    Ok(PrunedModel {
        params,
        mask: HeadMask::new(&params.config, spec.heads())?,
    })
}

impl Scorer for PrunedModel<'_> {
    fn config(&self) -> &EncoderConfig {
        &self.params.config
    }

    fn score_batch(&self, sentences: &[&[u32]]) -> Result<Vec<f64>> {
        score_sentences(sentences, self.params, Some(&self.mask))
    }
}

/// Heads sorted by score; ties keep the lower flat index first.
pub fn head_order(scores: &HeadGrid<f64>, descending: bool) -> Vec<HeadId> {
    let mut items: Vec<(HeadId, f64)> = scores.iter().map(|(h, &s)| (h, s)).collect();
    items.sort_by(|a, b| {
        let o = a.1.total_cmp(&b.1);
        if descending {
            o.reverse()
        } else {
            o
        }
    });
    items.into_iter().map(|(h, _)| h).collect()
}

/// Heads ranked within each layer, then interleaved by rank: the first `k * L`
/// entries prune the `k` best (or worst) heads of every layer.
pub fn layerwise_head_order(scores: &HeadGrid<f64>, descending: bool) -> Vec<HeadId> {
    let per_layer: Vec<Vec<HeadId>> = (0..scores.num_layers)
        .map(|l| {
            let mut hs: Vec<(HeadId, f64)> = (0..scores.num_heads)
                .map(|h| HeadId::new(l, h))
                .map(|id| (id, *scores.get(id)))
                .collect();
            hs.sort_by(|a, b| {
                let o = a.1.total_cmp(&b.1);
                if descending {
                    o.reverse()
                } else {
                    o
                }
            });
            hs.into_iter().map(|(id, _)| id).collect()
        })
        .collect();
    (0..scores.num_heads)
        .flat_map(|r| per_layer.iter().map(move |layer| layer[r]))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub pruned: usize,
    pub accuracy: f64,
}

/// Dev accuracy after pruning the first `k` heads of `order`, for `k = 0..=len`.
pub fn pruning_curve(
    params: &ModelParams,
    data: &[TokenizedInstance],
    order: &[HeadId],
) -> Result<Vec<CurvePoint>> {
    PruneSpec::new(&params.config, order.to_vec())?;
    (0..=order.len())
        .map(|k| {
            let spec = PruneSpec::new(&params.config, order[..k].to_vec())?;
            let model = prune_heads(params, &spec)?;
            Ok(CurvePoint {
                pruned: k,
                accuracy: evaluate_accuracy(&model, data)?.accuracy,
            })
        })
        .collect()
}

/// Trapezoidal area under accuracy vs pruned count.
pub fn curve_area(curve: &[CurvePoint]) -> f64 {
    curve
        .windows(2)
        .map(|w| 0.5 * (w[0].accuracy + w[1].accuracy) * (w[1].pruned - w[0].pruned) as f64)
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::vocab::{CLS, SEP};
    use crate::encoder::{encode_pair, ParamSet};
    use crate::numkernel::{Tape, Tensor};

    fn tiny() -> ModelParams {
        ModelParams::init(EncoderConfig {
            num_layers: 2,
            num_heads: 2,
            model_width: 8,
            key_width: 4,
            ff_width: 16,
            vocab_size: 20,
            max_seq_len: 16,
            seed: 8,
        })
        .unwrap()
    }

    const SENT: [u32; 7] = [CLS, 5, 6, SEP, 7, 8, SEP];

    #[test]
    fn empty_spec_is_identity() {
        let p = tiny();
        let spec = PruneSpec::new(&p.config, vec![]).unwrap();
        let m = prune_heads(&p, &spec).unwrap();
        let a = m.score_batch(&[&SENT]).unwrap();
        let b = p.score_batch(&[&SENT]).unwrap();
        assert_eq!(a[0].to_bits(), b[0].to_bits());
    }

    #[test]
    fn spec_validation() {
        let p = tiny();
        assert!(PruneSpec::new(&p.config, vec![HeadId::new(0, 0), HeadId::new(0, 0)]).is_err());
        assert!(PruneSpec::new(&p.config, vec![HeadId::new(0, 2)]).is_err());
    }

    #[test]
    fn layerwise_order_interleaves_ranks() {
        let vals = [0.1, 0.9, 0.5, 0.5];
        let g = HeadGrid::from_fn(2, 2, |id| vals[id.flat(2)]);
        let h = HeadId::new;
        assert_eq!(layerwise_head_order(&g, true), vec![h(0, 1), h(1, 0), h(0, 0), h(1, 1)]);
        assert_eq!(layerwise_head_order(&g, false), vec![h(0, 0), h(1, 0), h(0, 1), h(1, 1)]);
    }

    /// With every head of the last layer pruned, that layer computes
    /// `LN2(Y + FFN(Y))` with `Y = LN1(X + b_o)`.
    #[test]
    fn fully_pruned_layer_keeps_only_the_residual_path() {
        let p = tiny();
        let spec = PruneSpec::new(&p.config, vec![HeadId::new(1, 0), HeadId::new(1, 1)]).unwrap();
        let m = prune_heads(&p, &spec).unwrap();
        let got = m.score_batch(&[&SENT]).unwrap()[0];

        let x = encode_pair(&SENT, &p).unwrap().hidden[0].clone();
        let l = &p.tensors.layers[1];
        let mut tape = Tape::new();
        let v: ParamSet<_> = p.tensors.map(|_, t| tape.constant(t.clone()));
        let lv = &v.layers[1];
        let xv = tape.constant(x);
        let y = tape.add_row(xv, lv.output_bias).unwrap();
        let eps = crate::encoder::LAYER_NORM_EPS;
        let y = tape.layer_norm(y, lv.attn_norm_gain, lv.attn_norm_bias, eps).unwrap();
        let f = tape.matmul(y, lv.ff_in_weight, false).unwrap();
        let f = tape.add_row(f, lv.ff_in_bias).unwrap();
        let f = tape.gelu(f).unwrap();
        let f = tape.matmul(f, lv.ff_out_weight, false).unwrap();
        let f = tape.add_row(f, lv.ff_out_bias).unwrap();
        let z = tape.add(y, f).unwrap();
        let z = tape.layer_norm(z, lv.ff_norm_gain, lv.ff_norm_bias, eps).unwrap();
        let h = tape.value(z).row(0).to_vec();
        let w = p.tensors.classifier.weight.values();
        let want: f64 = h.iter().zip(w).map(|(a, b)| a * b).sum::<f64>()
            + p.tensors.classifier.bias.values()[0];
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        let _ = l;
    }

    /// Perturbing a pruned head's attention weights cannot change the output.
    #[test]
    fn pruned_head_attention_has_no_influence() {
        let p = tiny();
        let mut q = p.clone();
        // Changing W_Q of head (0, 1) changes only that head's attention rows.
        let wq = &mut q.tensors.layers[0].query_weight;
        let mut vals = wq.to_vec();
        for r in 0..8 {
            for c in 4..8 {
                vals[r * 8 + c] += 0.5;
            }
        }
        *wq = Tensor::new(&[8, 8], vals).unwrap();
        let spec = PruneSpec::new(&p.config, vec![HeadId::new(0, 1)]).unwrap();
        let a = prune_heads(&p, &spec).unwrap().score_batch(&[&SENT]).unwrap()[0];
        let b = prune_heads(&q, &spec).unwrap().score_batch(&[&SENT]).unwrap()[0];
        assert_eq!(a.to_bits(), b.to_bits());
        let c = q.score_batch(&[&SENT]).unwrap()[0];
        assert_ne!(a.to_bits(), c.to_bits());
    }

    #[test]
    fn ordering_and_area() {
        let g = HeadGrid::from_vec(1, 3, vec![0.2, 0.9, 0.2]).unwrap();
        assert_eq!(
            head_order(&g, true),
            vec![HeadId::new(0, 1), HeadId::new(0, 0), HeadId::new(0, 2)]
        );
        assert_eq!(
            head_order(&g, false),
            vec![HeadId::new(0, 0), HeadId::new(0, 2), HeadId::new(0, 1)]
        );
        let curve = [
            CurvePoint { pruned: 0, accuracy: 1.0 },
            CurvePoint { pruned: 1, accuracy: 0.5 },
            CurvePoint { pruned: 2, accuracy: 0.5 },
        ];
        assert!((curve_area(&curve) - 1.25).abs() < 1e-12);
    }
}
