use serde::{Deserialize, Serialize};

use crate::dataset::SpanAlignment;
use crate::encoder::HeadGrid;
use crate::error::{Error, Result};
use crate::numkernel::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinkSource {
    Attention,
    Attribution,
}

impl std::fmt::Display for LinkSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LinkSource::Attention => "attention",
            LinkSource::Attribution => "attribution",
        })
    }
}

impl std::str::FromStr for LinkSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "attention" => Ok(LinkSource::Attention),
            "attribution" => Ok(LinkSource::Attribution),
            _ => Err(Error::Config(format!("unknown link source {s:?}"))),
        }
    }
}

/// Per head: `link[i-1]` = mean over answer-concept rows `j` of entry `(j → i)`,
/// for question positions `i = 1..=|q|`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkMatrix {
    pub source: LinkSource,
    pub links: HeadGrid<Vec<f64>>,
}

fn check_span(m: &Tensor, span: &SpanAlignment) -> Result<()> {
    span.check()?;
    let (r, c) = m.dims2();
    if span.answer_end >= r || span.question_len >= c {
        return Err(Error::Shape(format!(
            "span {span:?} outside a {r}x{c} matrix"
        )));
    }
    Ok(())
}

pub fn link_matrix(
    grid: &HeadGrid<Tensor>,
    span: &SpanAlignment,
    source: LinkSource,
) -> Result<LinkMatrix> {
    let mut out = Vec::with_capacity(grid.cells().len());
    for m in grid.cells() {
        check_span(m, span)?;
        let n = span.answer_len() as f64;
        let row: Vec<f64> = (1..=span.question_len)
            .map(|i| span.answer_range().map(|j| m.at(j, i)).sum::<f64>() / n)
            .collect();
        out.push(row);
    }
    Ok(LinkMatrix {
        source,
        links: HeadGrid::from_vec(grid.num_layers, grid.num_heads, out)?,
    })
}

/// Mean of `entry(j → i)` over answer-concept rows `j` and question-concept columns `i`.
pub fn a2q_link_weight(m: &Tensor, span: &SpanAlignment) -> Result<f64> {
    check_span(m, span)?;
    let mut total = 0.0;
    for i in span.concept_range() {
        for j in span.answer_range() {
            total += m.at(j, i);
        }
    }
    Ok(total / (span.concept_len() * span.answer_len()) as f64)
}

/// Mean of `entry(j → 0)` over answer-concept rows `j`.
pub fn cls_link_weight(m: &Tensor, span: &SpanAlignment) -> Result<f64> {
    check_span(m, span)?;
    Ok(span.answer_range().map(|j| m.at(j, 0)).sum::<f64>() / span.answer_len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn span(b_s: usize, e_s: usize, b_t: usize, e_t: usize, q: usize) -> SpanAlignment {
        SpanAlignment {
            question_len: q,
            concept_begin: b_s,
            concept_end: e_s,
            answer_begin: b_t,
            answer_end: e_t,
        }
    }

    #[test]
    fn single_entry_and_two_by_two() {
        let mut v = vec![0.0; 36];
        v[4 * 6 + 2] = 0.37;
        let m = Tensor::new(&[6, 6], v).unwrap();
        assert_eq!(a2q_link_weight(&m, &span(2, 2, 4, 4, 2)).unwrap(), 0.37);

        let mut v = vec![0.0; 49];
        // rows 5,6 (answer) x cols 1,2 (concept)
        v[5 * 7 + 1] = 0.1;
        v[5 * 7 + 2] = 0.2;
        v[6 * 7 + 1] = 0.3;
        v[6 * 7 + 2] = 0.4;
        let m = Tensor::new(&[7, 7], v).unwrap();
        let w = a2q_link_weight(&m, &span(1, 2, 5, 6, 3)).unwrap();
        assert!((w - 0.25).abs() < 1e-15);
    }

    #[test]
    fn link_rows_average_answer_tokens() {
        // answer rows [0.1,0.6,0.3] and [0.5,0.2,0.3] over question positions 1..3
        let mut v = vec![0.0; 64];
        for (k, x) in [0.1, 0.6, 0.3].iter().enumerate() {
            v[5 * 8 + 1 + k] = *x;
        }
        for (k, x) in [0.5, 0.2, 0.3].iter().enumerate() {
            v[6 * 8 + 1 + k] = *x;
        }
        let m = Tensor::new(&[8, 8], v).unwrap();
        let g = HeadGrid::from_vec(1, 1, vec![m]).unwrap();
        let l = link_matrix(&g, &span(1, 1, 5, 6, 3), LinkSource::Attention).unwrap();
        let row = &l.links.cells()[0];
        for (a, b) in row.iter().zip([0.3, 0.4, 0.3]) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn out_of_range_span_errors() {
        let m = Tensor::<f64>::zeros(&[4, 4]);
        assert!(a2q_link_weight(&m, &span(1, 1, 5, 5, 2)).is_err());
        assert!(cls_link_weight(&m, &span(1, 1, 3, 3, 1)).is_ok());
    }
}
