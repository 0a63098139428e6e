use serde::{Deserialize, Serialize};

use super::link::{a2q_link_weight, cls_link_weight};
use crate::dataset::{SpanAlignment, NUM_CHOICES};
use crate::encoder::{HeadGrid, HeadId};
use crate::error::{Error, Result};
use crate::numkernel::{argmax, Tensor};

/// MAC and MAS for one head of one instance (both 1-based).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacMas {
    pub mac: usize,
    pub mas: usize,
    pub a2q: Vec<f64>,
    pub cls: Vec<f64>,
}

fn check_five<T>(grids: &[T], spans: &[SpanAlignment]) -> Result<()> {
    if grids.len() != NUM_CHOICES || spans.len() != NUM_CHOICES {
        return Err(Error::Validation(format!(
            "need {NUM_CHOICES} candidate matrices and spans, got {} and {}",
            grids.len(),
            spans.len()
        )));
    }
    Ok(())
}

pub fn mac_mas_for_instance(
    grids: &[&HeadGrid<Tensor>],
    spans: &[SpanAlignment],
    head: HeadId,
) -> Result<MacMas> {
    check_five(grids, spans)?;
    let a2q = grids
        .iter()
        .zip(spans)
        .map(|(g, s)| a2q_link_weight(g.get(head), s))
        .collect::<Result<Vec<_>>>()?;
    let cls = grids
        .iter()
        .zip(spans)
        .map(|(g, s)| cls_link_weight(g.get(head), s))
        .collect::<Result<Vec<_>>>()?;
    Ok(MacMas {
        mac: argmax(&a2q).expect("five values") + 1,
        mas: argmax(&cls).expect("five values") + 1,
        a2q,
        cls,
    })
}

pub fn mac_mas_all_heads(
    grids: &[&HeadGrid<Tensor>],
    spans: &[SpanAlignment],
) -> Result<HeadGrid<MacMas>> {
    check_five(grids, spans)?;
    let g0 = grids[0];
    let cells = g0
        .heads()
        .map(|h| mac_mas_for_instance(grids, spans, h))
        .collect::<Result<Vec<_>>>()?;
    HeadGrid::from_vec(g0.num_layers, g0.num_heads, cells)
}

/// Per-head agreement rates, flat in `(layer, head)` order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacStats {
    pub num_layers: usize,
    pub num_heads: usize,
    pub instances: usize,
    /// Fraction of instances where the head's pick equals the model prediction.
    pub overlap: Vec<f64>,
    /// Fraction of instances where the head's pick equals gold.
    pub accuracy: Vec<f64>,
}

impl MacStats {
    pub fn overlap_grid(&self) -> HeadGrid<f64> {
        HeadGrid::from_vec(self.num_layers, self.num_heads, self.overlap.clone()).expect("consistent")
    }

    pub fn accuracy_grid(&self) -> HeadGrid<f64> {
        HeadGrid::from_vec(self.num_layers, self.num_heads, self.accuracy.clone()).expect("consistent")
    }

    /// Highest overlap among the heads of `layer`.
    pub fn max_overlap_in_layer(&self, layer: usize) -> f64 {
        self.overlap[layer * self.num_heads..(layer + 1) * self.num_heads]
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_accuracy_in_layer(&self, layer: usize) -> f64 {
        self.accuracy[layer * self.num_heads..(layer + 1) * self.num_heads]
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

fn check_lengths(picks: usize, predictions: usize, golds: usize) -> Result<()> {
    if picks != predictions || picks != golds || picks == 0 {
        return Err(Error::Validation(format!(
            "{picks} pick grids, {predictions} predictions, {golds} gold labels"
        )));
    }
    Ok(())
}

/// `overlap = mean 1(pick = prediction)`, `accuracy = mean 1(pick = gold)` per head.
pub fn mac_overlap_and_accuracy(
    picks: &[HeadGrid<usize>],
    predictions: &[usize],
    golds: &[usize],
) -> Result<MacStats> {
    check_lengths(picks.len(), predictions.len(), golds.len())?;
    let g0 = &picks[0];
    let n = picks.len() as f64;
    let heads = g0.cells().len();
    let rate = |want: &[usize]| -> Vec<f64> {
        (0..heads)
            .map(|k| {
                picks
                    .iter()
                    .zip(want)
                    .filter(|(p, w)| p.cells()[k] == **w)
                    .count() as f64
                    / n
            })
            .collect()
    };
    Ok(MacStats {
        num_layers: g0.num_layers,
        num_heads: g0.num_heads,
        instances: picks.len(),
        overlap: rate(predictions),
        accuracy: rate(golds),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadCountRow {
    /// Number of heads in the layer whose pick equals gold.
    pub heads_correct: usize,
    pub instances: usize,
    /// `None` for empty buckets.
    pub model_accuracy: Option<f64>,
}

/// Buckets instances by how many heads of `layer` pick the gold candidate
/// and reports model accuracy per bucket.
pub fn head_count_table(
    picks: &[HeadGrid<usize>],
    golds: &[usize],
    correct: &[bool],
    layer: usize,
) -> Result<Vec<HeadCountRow>> {
    check_lengths(picks.len(), correct.len(), golds.len())?;
    let t = picks[0].num_heads;
    if layer >= picks[0].num_layers {
        return Err(Error::Validation(format!("layer {layer} out of range")));
    }
    let mut count = vec![0usize; t + 1];
    let mut right = vec![0usize; t + 1];
    for ((p, &g), &c) in picks.iter().zip(golds).zip(correct) {
        let k = (0..t).filter(|&h| *p.get(HeadId::new(layer, h)) == g).count();
        count[k] += 1;
        right[k] += usize::from(c);
    }
    Ok((0..=t)
        .map(|k| HeadCountRow {
            heads_correct: k,
            instances: count[k],
            model_accuracy: (count[k] > 0).then(|| right[k] as f64 / count[k] as f64),
        })
        .collect())
}

/// Per-head pick accuracy on instances the model got right vs wrong.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitStats {
    pub num_layers: usize,
    pub num_heads: usize,
    pub correct_instances: usize,
    pub incorrect_instances: usize,
    pub on_correct: Vec<Option<f64>>,
    pub on_incorrect: Vec<Option<f64>>,
}

pub fn correct_split(
    picks: &[HeadGrid<usize>],
    golds: &[usize],
    correct: &[bool],
) -> Result<SplitStats> {
    check_lengths(picks.len(), correct.len(), golds.len())?;
    let g0 = &picks[0];
    let heads = g0.cells().len();
    let rate = |want: bool| -> Vec<Option<f64>> {
        let idx: Vec<usize> = (0..picks.len()).filter(|&i| correct[i] == want).collect();
        (0..heads)
            .map(|k| {
                (!idx.is_empty()).then(|| {
                    idx.iter().filter(|&&i| picks[i].cells()[k] == golds[i]).count() as f64
                        / idx.len() as f64
                })
            })
            .collect()
    };
    let n_correct = correct.iter().filter(|&&c| c).count();
    Ok(SplitStats {
        num_layers: g0.num_layers,
        num_heads: g0.num_heads,
        correct_instances: n_correct,
        incorrect_instances: correct.len() - n_correct,
        on_correct: rate(true),
        on_incorrect: rate(false),
    })
}
