//! Dataset-level link probing: per-head matrices from attention or
//! attribution, reduced to MAW and MAC/MAS tables.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ig::{attribute_instance, integrated_gradients, IgConfig};
use crate::dataset::TokenizedInstance;
use crate::encoder::{encode_batch, encode_pair, HeadGrid, ModelParams};
use crate::error::{Error, Result};
use crate::metrics::{
    correct_split, head_count_table, link_matrix, mac_mas_all_heads, mac_overlap_and_accuracy,
    maw_accuracies, per_layer_maw, relation_breakdown, HeadCountRow, LayerMawRow, LinkSource,
    MacStats, MawResult, RelationRow, SplitStats,
};
use crate::numkernel::Tensor;
use crate::trainer::Evaluation;

/// Per-head matrices of one sentence.
pub fn sentence_grid(
    tokens: &[u32],
    params: &ModelParams,
    source: LinkSource,
    ig: &IgConfig,
) -> Result<HeadGrid<Tensor>> {
    match source {
        LinkSource::Attention => Ok(encode_pair(tokens, params)?.attention),
        LinkSource::Attribution => Ok(integrated_gradients(tokens, params, ig)?.scores),
    }
}

/// Per-head matrices for all five sentences of an instance, plus their logits.
pub fn instance_grids(
    inst: &TokenizedInstance,
    params: &ModelParams,
    source: LinkSource,
    ig: &IgConfig,
) -> Result<(Vec<HeadGrid<Tensor>>, Vec<f64>)> {
    match source {
        LinkSource::Attention => {
            let sentences: Vec<&[u32]> = inst.sentences.iter().map(Vec::as_slice).collect();
            let enc = encode_batch(&sentences, params, None)?;
            let logits = enc.iter().map(|e| e.logit).collect();
            Ok((enc.into_iter().map(|e| e.attention).collect(), logits))
        }
        LinkSource::Attribution => {
            let atr = attribute_instance(inst, params, ig)?;
            let logits = atr.iter().map(|a| a.output).collect();
            Ok((atr.into_iter().map(|a| a.scores).collect(), logits))
        }
    }
}

fn nonempty(data: &[TokenizedInstance]) -> Result<()> {
    if data.is_empty() {
        return Err(Error::Validation("no instances to probe".into()));
    }
    Ok(())
}

/// MAW over the gold sentence of every instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MawProbe {
    pub source: LinkSource,
    pub result: MawResult,
    pub layers: Vec<LayerMawRow>,
    pub relations: Vec<RelationRow>,
}

pub fn probe_maw(
    data: &[TokenizedInstance],
    params: &ModelParams,
    source: LinkSource,
    ig: &IgConfig,
    min_relation_count: usize,
) -> Result<MawProbe> {
    nonempty(data)?;
    let links = data
        .par_iter()
        .map(|inst| {
            let g = inst.gold_index - 1;
            let grid = sentence_grid(&inst.sentences[g], params, source, ig)?;
            link_matrix(&grid, &inst.spans[g], source)
        })
        .collect::<Result<Vec<_>>>()?;
    let spans: Vec<_> = data.iter().map(|i| i.spans[i.gold_index - 1]).collect();
    let relations: Vec<String> = data.iter().map(|i| i.relation.clone()).collect();
    let result = maw_accuracies(&links, &spans)?;
    Ok(MawProbe {
        source,
        layers: per_layer_maw(&result),
        relations: relation_breakdown(&relations, &links, &spans, min_relation_count)?,
        result,
    })
}

/// MAC and MAS agreement with the model and with gold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacProbe {
    pub source: LinkSource,
    pub model_accuracy: f64,
    pub mac: MacStats,
    pub mas: MacStats,
    /// Buckets over the heads of `head_count_layer`.
    pub head_count_layer: usize,
    pub head_count: Vec<HeadCountRow>,
    pub mac_split: SplitStats,
    /// Per-instance MAC picks, flat in `(layer, head)` order.
    pub mac_picks: Vec<Vec<usize>>,
}

impl MacProbe {
    pub fn picks(&self) -> Vec<HeadGrid<usize>> {
        self.mac_picks
            .iter()
            .map(|p| {
                HeadGrid::from_vec(self.mac.num_layers, self.mac.num_heads, p.clone())
                    .expect("picks match the grid shape")
            })
            .collect()
    }
}

/// MAC/MAS over all five sentences of every instance. The head-count table
/// uses the top layer.
pub fn probe_mac(
    data: &[TokenizedInstance],
    params: &ModelParams,
    source: LinkSource,
    ig: &IgConfig,
) -> Result<MacProbe> {
    nonempty(data)?;
    let per_instance = data
        .par_iter()
        .map(|inst| {
            let (grids, logits) = instance_grids(inst, params, source, ig)?;
            let refs: Vec<&HeadGrid<Tensor>> = grids.iter().collect();
            Ok((mac_mas_all_heads(&refs, &inst.spans)?, logits))
        })
        .collect::<Result<Vec<_>>>()?;
    let golds: Vec<usize> = data.iter().map(|i| i.gold_index).collect();
    let (picks, logits): (Vec<_>, Vec<_>) = per_instance.into_iter().unzip();
    let eval = Evaluation::from_logits(logits, golds.clone())?;
    let correct = eval.correct();
    let mac_picks: Vec<HeadGrid<usize>> = picks.iter().map(|g| g.map(|_, m| m.mac)).collect();
    let mas_picks: Vec<HeadGrid<usize>> = picks.iter().map(|g| g.map(|_, m| m.mas)).collect();
    let top = params.config.num_layers - 1;
    Ok(MacProbe {
        source,
        model_accuracy: eval.accuracy,
        mac: mac_overlap_and_accuracy(&mac_picks, &eval.predictions, &golds)?,
        mas: mac_overlap_and_accuracy(&mas_picks, &eval.predictions, &golds)?,
        head_count_layer: top,
        head_count: head_count_table(&mac_picks, &golds, &correct, top)?,
        mac_split: correct_split(&mac_picks, &golds, &correct)?,
        mac_picks: mac_picks.into_iter().map(HeadGrid::into_cells).collect(),
    })
}
