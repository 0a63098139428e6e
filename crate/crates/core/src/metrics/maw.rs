use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::link::LinkMatrix;
use crate::dataset::SpanAlignment;
use crate::encoder::{HeadGrid, HeadId};
use crate::error::{Error, Result};
use crate::numkernel::argmax;

pub const DEFAULT_MIN_RELATION_COUNT: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MawHit {
    /// 1-based question position.
    pub mu: usize,
    pub hit: bool,
}

/// Lowest-index argmax over question positions; a hit when it lands in the concept span.
pub fn maw_for_head(link: &[f64], span: &SpanAlignment) -> MawHit {
    let mu = argmax(link).map_or(1, |i| i + 1);
    MawHit {
        mu,
        hit: span.concept_range().contains(&mu),
    }
}

/// Per-head hit flags for one instance.
pub fn maw_hits(link: &LinkMatrix, span: &SpanAlignment) -> HeadGrid<bool> {
    link.links.map(|_, l| maw_for_head(l, span).hit)
}

/// Expected hit rate under uniformly random link weights: mean of span length over `|q|`.
pub fn maw_baseline(spans: &[SpanAlignment]) -> Result<f64> {
    if spans.is_empty() {
        return Err(Error::Validation("no instances".into()));
    }
    Ok(spans
        .iter()
        .map(|s| s.concept_len() as f64 / s.question_len as f64)
        .sum::<f64>()
        / spans.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MawResult {
    pub instances: usize,
    /// Hit rate per head, flat in `(layer, head)` order.
    pub head_accuracy: Vec<f64>,
    pub num_layers: usize,
    pub num_heads: usize,
    pub acc_avg: f64,
    pub acc_max: f64,
    pub acc_baseline: f64,
    pub best_head: HeadId,
}

impl MawResult {
    pub fn grid(&self) -> HeadGrid<f64> {
        HeadGrid::from_vec(self.num_layers, self.num_heads, self.head_accuracy.clone())
            .expect("consistent")
    }
}

fn summarize(hits: &[&HeadGrid<bool>], baseline: f64) -> MawResult {
    let first = hits[0];
    let n = hits.len() as f64;
    let rates: Vec<f64> = (0..first.cells().len())
        .map(|k| hits.iter().filter(|h| h.cells()[k]).count() as f64 / n)
        .collect();
    let best = argmax(&rates).expect("at least one head");
    let t = first.num_heads;
    MawResult {
        instances: hits.len(),
        acc_avg: rates.iter().sum::<f64>() / rates.len() as f64,
        acc_max: rates[best],
        head_accuracy: rates,
        num_layers: first.num_layers,
        num_heads: t,
        acc_baseline: baseline,
        best_head: HeadId::new(best / t, best % t),
    }
}

/// `acc^avg`, `acc^max` and `acc^baseline` over instances (one link matrix each).
pub fn maw_accuracies(links: &[LinkMatrix], spans: &[SpanAlignment]) -> Result<MawResult> {
    if links.len() != spans.len() {
        return Err(Error::Validation(format!(
            "{} link matrices for {} spans",
            links.len(),
            spans.len()
        )));
    }
    let baseline = maw_baseline(spans)?;
    let hits: Vec<HeadGrid<bool>> = links.iter().zip(spans).map(|(l, s)| maw_hits(l, s)).collect();
    Ok(summarize(&hits.iter().collect::<Vec<_>>(), baseline))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerMawRow {
    pub layer: usize,
    pub acc_avg: f64,
    pub acc_max: f64,
}

pub fn per_layer_maw(r: &MawResult) -> Vec<LayerMawRow> {
    r.head_accuracy
        .chunks(r.num_heads)
        .enumerate()
        .map(|(layer, row)| LayerMawRow {
            layer,
            acc_avg: row.iter().sum::<f64>() / row.len() as f64,
            acc_max: row.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationRow {
    pub relation: String,
    pub count: usize,
    pub acc_max: f64,
    pub acc_avg: f64,
    pub best_head: HeadId,
}

/// MAW table per relation; relations with fewer than `min_count` instances are left out.
pub fn relation_breakdown(
    relations: &[String],
    links: &[LinkMatrix],
    spans: &[SpanAlignment],
    min_count: usize,
) -> Result<Vec<RelationRow>> {
    if relations.len() != links.len() || links.len() != spans.len() {
        return Err(Error::Validation("relation, link and span lists differ in length".into()));
    }
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, r) in relations.iter().enumerate() {
        groups.entry(r.as_str()).or_default().push(i);
    }
    let mut rows = Vec::new();
    for (rel, idx) in groups {
        if idx.len() < min_count {
            continue;
        }
        let l: Vec<LinkMatrix> = idx.iter().map(|&i| links[i].clone()).collect();
        let s: Vec<SpanAlignment> = idx.iter().map(|&i| spans[i]).collect();
        let r = maw_accuracies(&l, &s)?;
        rows.push(RelationRow {
            relation: rel.to_owned(),
            count: idx.len(),
            acc_max: r.acc_max,
            acc_avg: r.acc_avg,
            best_head: r.best_head,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::super::link::LinkSource;
    use super::*;

    fn span(b: usize, e: usize, q: usize) -> SpanAlignment {
        SpanAlignment {
            question_len: q,
            concept_begin: b,
            concept_end: e,
            answer_begin: q + 2,
            answer_end: q + 2,
        }
    }

    fn lm(rows: Vec<Vec<f64>>, l: usize, t: usize) -> LinkMatrix {
        LinkMatrix {
            source: LinkSource::Attention,
            links: HeadGrid::from_vec(l, t, rows).unwrap(),
        }
    }

    #[test]
    fn argmax_hit_and_ties() {
        assert_eq!(maw_for_head(&[0.1, 0.7, 0.2], &span(2, 2, 3)), MawHit { mu: 2, hit: true });
        assert_eq!(maw_for_head(&[0.3, 0.4, 0.3], &span(1, 1, 3)), MawHit { mu: 2, hit: false });
        assert_eq!(maw_for_head(&[0.4, 0.4, 0.2], &span(2, 3, 3)), MawHit { mu: 1, hit: false });
    }

    #[test]
    fn baseline_formula() {
        let spans = vec![span(3, 3, 10); 7];
        assert!((maw_baseline(&spans).unwrap() - 0.10).abs() < 1e-15);
        assert!(maw_baseline(&[]).is_err());
        let mixed = [span(1, 2, 4), span(1, 1, 5)];
        assert!((maw_baseline(&mixed).unwrap() - (0.5 + 0.2) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn avg_max_and_best_head() {
        let spans = vec![span(1, 1, 2), span(2, 2, 2)];
        let links = vec![
            lm(vec![vec![0.9, 0.1], vec![0.1, 0.9]], 1, 2),
            lm(vec![vec![0.2, 0.8], vec![0.6, 0.4]], 1, 2),
        ];
        let r = maw_accuracies(&links, &spans).unwrap();
        assert_eq!(r.head_accuracy, vec![1.0, 0.0]);
        assert_eq!(r.acc_max, 1.0);
        assert_eq!(r.acc_avg, 0.5);
        assert_eq!(r.best_head, HeadId::new(0, 0));
        assert!(r.acc_avg <= r.acc_max);
        assert_eq!(per_layer_maw(&r)[0].acc_max, 1.0);
    }

    #[test]
    fn relation_threshold_and_degenerate_case() {
        let spans = vec![span(1, 1, 2); 9];
        let links = vec![lm(vec![vec![0.9, 0.1]], 1, 1); 9];
        let rels = vec!["AtLocation".to_string(); 9];
        let rows = relation_breakdown(&rels, &links, &spans, 9).unwrap();
        assert_eq!(rows.len(), 1);
        let overall = maw_accuracies(&links, &spans).unwrap();
        assert_eq!(rows[0].acc_max, overall.acc_max);
        assert_eq!(rows[0].acc_avg, overall.acc_avg);
        let rows = relation_breakdown(&rels[..8], &links[..8], &spans[..8], 9).unwrap();
        assert!(rows.is_empty());
    }
}
