//! Merges fragments into long-format tables whose cells carry
//! source, seed count, mean and standard deviation.

use std::collections::BTreeMap;

use linkprobe::metrics::{mean_std, MacStats};
use serde::{Deserialize, Serialize};

use super::fragment::{Fragment, FragmentBody};
use crate::error::{CliError, CliResult};

pub const REPORT_FORMAT: u32 = 1;

/// Columns appended to every table's key columns.
pub const CELL_COLUMNS: [&str; 4] = ["source", "seeds", "mean", "stddev"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub source: String,
    pub seeds: usize,
    pub mean: f64,
    pub stddev: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub keys: Vec<String>,
    #[serde(flatten)]
    pub cell: Cell,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub key_columns: Vec<String>,
    pub rows: Vec<Row>,
}

impl Table {
    pub fn header(&self) -> Vec<&str> {
        self.key_columns
            .iter()
            .map(String::as_str)
            .chain(CELL_COLUMNS)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunRef {
    pub seed: u64,
    pub checkpoint_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExperimentRef {
    pub kind: String,
    pub source: String,
    pub split: String,
    pub instances: usize,
    pub ig_steps: Option<usize>,
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub format: u32,
    pub dataset_id: String,
    pub num_layers: usize,
    pub num_heads: usize,
    pub runs: Vec<RunRef>,
    pub experiments: Vec<ExperimentRef>,
    pub tables: Vec<Table>,
}

/// Rows of one table under construction: key tuple -> per-seed values.
struct Builder {
    name: &'static str,
    key_columns: &'static [&'static str],
    cells: BTreeMap<(String, Vec<String>), Vec<f64>>,
    order: Vec<(String, Vec<String>)>,
}

impl Builder {
    fn new(name: &'static str, key_columns: &'static [&'static str]) -> Self {
        Self {
            name,
            key_columns,
            cells: BTreeMap::new(),
            order: Vec::new(),
        }
    }

    fn push(&mut self, source: &str, keys: Vec<String>, value: f64) {
        debug_assert_eq!(keys.len(), self.key_columns.len());
        let k = (source.to_string(), keys);
        if !self.cells.contains_key(&k) {
            self.order.push(k.clone());
        }
        self.cells.entry(k).or_default().push(value);
    }

    fn finish(self) -> Option<Table> {
        if self.order.is_empty() {
            return None;
        }
        let rows = self
            .order
            .into_iter()
            .map(|k| {
                let v = &self.cells[&k];
                let (mean, stddev) = mean_std(v);
                Row {
                    keys: k.1,
                    cell: Cell {
                        source: k.0,
                        seeds: v.len(),
                        mean,
                        stddev,
                    },
                }
            })
            .collect();
        Some(Table {
            name: self.name.to_string(),
            key_columns: self.key_columns.iter().map(|s| s.to_string()).collect(),
            rows,
        })
    }
}

fn s(x: impl ToString) -> String {
    x.to_string()
}

/// Validates provenance and merges fragments, grouping repeats over seeds.
pub fn merge_fragments(fragments: &[Fragment]) -> CliResult<MetricsReport> {
    let first = fragments
        .first()
        .ok_or_else(|| CliError::validation("no fragments to merge"))?;
    let p0 = &first.provenance;
    let mut runs: BTreeMap<u64, String> = BTreeMap::new();
    let mut groups: BTreeMap<String, Vec<&Fragment>> = BTreeMap::new();
    for f in fragments {
        let p = &f.provenance;
        if p.dataset_id != p0.dataset_id {
            return Err(CliError::validation(format!(
                "mixed provenance: dataset {} vs {}",
                p.dataset_id, p0.dataset_id
            )));
        }
        if (p.num_layers, p.num_heads) != (p0.num_layers, p0.num_heads) {
            return Err(CliError::validation(
                "mixed provenance: fragments come from models of different shape",
            ));
        }
        match runs.get(&p.seed) {
            Some(id) if *id != p.checkpoint_id => {
                return Err(CliError::validation(format!(
                    "mixed provenance: seed {} appears with checkpoints {id} and {}",
                    p.seed, p.checkpoint_id
                )));
            }
            _ => {
                runs.insert(p.seed, p.checkpoint_id.clone());
            }
        }
        groups.entry(f.body.group_key()).or_default().push(f);
    }
    let mut seen_ids: BTreeMap<&str, u64> = BTreeMap::new();
    for (seed, id) in &runs {
        if let Some(other) = seen_ids.insert(id, *seed) {
            return Err(CliError::validation(format!(
                "mixed provenance: checkpoint {id} claims seeds {other} and {seed}"
            )));
        }
    }
    let mut experiments = Vec::new();
    for (key, members) in &groups {
        let m0 = members[0];
        let mut seeds = Vec::new();
        for m in members {
            if m.split != m0.split
                || m.instances != m0.instances
                || m.body.ig_steps() != m0.body.ig_steps()
            {
                return Err(CliError::validation(format!(
                    "mixed provenance in {key}: split, instance count or IG steps differ"
                )));
            }
            if seeds.contains(&m.provenance.seed) {
                return Err(CliError::validation(format!(
                    "{key} has two fragments for seed {}",
                    m.provenance.seed
                )));
            }
            seeds.push(m.provenance.seed);
        }
        seeds.sort_unstable();
        experiments.push(ExperimentRef {
            kind: m0.body.kind().to_string(),
            source: m0.body.source(),
            split: format!("{:?}", m0.split).to_lowercase(),
            instances: m0.instances,
            ig_steps: m0.body.ig_steps(),
            seeds,
        });
    }

    let mut accuracy = Builder::new("accuracy", &["split"]);
    let mut maw_overall = Builder::new("maw_overall", &["metric"]);
    let mut maw_layer = Builder::new("maw_layer", &["layer", "metric"]);
    let mut maw_head = Builder::new("maw_head", &["layer", "head"]);
    let mut maw_relation = Builder::new("maw_relation", &["relation", "metric"]);
    let mut mac_head = Builder::new("mac_head", &["score", "metric", "layer", "head"]);
    let mut mac_layer = Builder::new("mac_layer", &["score", "metric", "layer"]);
    let mut head_count = Builder::new("head_count", &["heads_correct", "metric"]);
    let mut mac_split = Builder::new("mac_split", &["subset", "layer", "head"]);
    let mut pruning = Builder::new("pruning", &["order", "pruned"]);
    let mut pruning_area = Builder::new("pruning_area", &["order"]);
    let mut layers = Builder::new("layer_probe", &["layer"]);

    let (nl, nh) = (p0.num_layers, p0.num_heads);
    for members in groups.values() {
        for f in members {
            let src = f.body.source();
            let split = format!("{:?}", f.split).to_lowercase();
            match &f.body {
                FragmentBody::Eval { accuracy: a } => accuracy.push(&src, vec![split], *a),
                FragmentBody::Maw { probe, .. } => {
                    let r = &probe.result;
                    for (m, v) in [
                        ("acc_avg", r.acc_avg),
                        ("acc_max", r.acc_max),
                        ("acc_baseline", r.acc_baseline),
                    ] {
                        maw_overall.push(&src, vec![s(m)], v);
                    }
                    for row in &probe.layers {
                        maw_layer.push(&src, vec![s(row.layer), s("acc_avg")], row.acc_avg);
                        maw_layer.push(&src, vec![s(row.layer), s("acc_max")], row.acc_max);
                    }
                    for (h, v) in r.grid().iter() {
                        maw_head.push(&src, vec![s(h.layer), s(h.head)], *v);
                    }
                    for row in &probe.relations {
                        let k = |m: &str| vec![row.relation.clone(), s(m)];
                        maw_relation.push(&src, k("count"), row.count as f64);
                        maw_relation.push(&src, k("acc_avg"), row.acc_avg);
                        maw_relation.push(&src, k("acc_max"), row.acc_max);
                    }
                }
                FragmentBody::Mac { probe, .. } => {
                    for (score, stats) in [("mac", &probe.mac), ("mas", &probe.mas)] {
                        push_mac(&mut mac_head, &mut mac_layer, &src, score, stats);
                    }
                    for row in &probe.head_count {
                        let k = |m: &str| vec![s(row.heads_correct), s(m)];
                        head_count.push(&src, k("instances"), row.instances as f64);
                        if let Some(a) = row.model_accuracy {
                            head_count.push(&src, k("model_accuracy"), a);
                        }
                    }
                    let sp = &probe.mac_split;
                    for l in 0..nl {
                        for h in 0..nh {
                            let i = l * nh + h;
                            if let Some(v) = sp.on_correct[i] {
                                mac_split.push(&src, vec![s("correct"), s(l), s(h)], v);
                            }
                            if let Some(v) = sp.on_incorrect[i] {
                                mac_split.push(&src, vec![s("incorrect"), s(l), s(h)], v);
                            }
                        }
                    }
                }
                FragmentBody::Pruning {
                    order, curve, area, ..
                } => {
                    for p in curve {
                        pruning.push(&src, vec![s(order.as_str()), s(p.pruned)], p.accuracy);
                    }
                    pruning_area.push(&src, vec![s(order.as_str())], *area);
                }
                FragmentBody::Layers { accuracy: acc } => {
                    for (l, a) in acc.iter().enumerate() {
                        layers.push(&src, vec![s(l)], *a);
                    }
                }
            }
        }
    }
    let tables = [
        accuracy,
        maw_overall,
        maw_layer,
        maw_head,
        maw_relation,
        mac_head,
        mac_layer,
        head_count,
        mac_split,
        pruning,
        pruning_area,
        layers,
    ]
    .into_iter()
    .filter_map(Builder::finish)
    .collect();
    Ok(MetricsReport {
        format: REPORT_FORMAT,
        dataset_id: p0.dataset_id.clone(),
        num_layers: nl,
        num_heads: nh,
        runs: runs
            .into_iter()
            .map(|(seed, checkpoint_id)| RunRef {
                seed,
                checkpoint_id,
            })
            .collect(),
        experiments,
        tables,
    })
}

fn push_mac(head: &mut Builder, layer: &mut Builder, src: &str, score: &str, m: &MacStats) {
    for (metric, values) in [("overlap", &m.overlap), ("accuracy", &m.accuracy)] {
        for l in 0..m.num_layers {
            for h in 0..m.num_heads {
                head.push(
                    src,
                    vec![s(score), s(metric), s(l), s(h)],
                    values[l * m.num_heads + h],
                );
            }
        }
    }
    for l in 0..m.num_layers {
        layer.push(src, vec![s(score), s("max_overlap"), s(l)], m.max_overlap_in_layer(l));
        layer.push(src, vec![s(score), s("max_accuracy"), s(l)], m.max_accuracy_in_layer(l));
    }
}
