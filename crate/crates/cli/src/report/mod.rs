//! Metric fragments and the merged report bundle.

mod fragment;
mod merge;
pub mod svg;

pub use fragment::{Fragment, FragmentBody, FRAGMENT_FORMAT};
pub use merge::{
    merge_fragments, Cell, ExperimentRef, MetricsReport, Row, RunRef, Table, CELL_COLUMNS,
    REPORT_FORMAT,
};

use crate::error::CliResult;
use crate::run::{csv_bytes, num, to_json};
use svg::Series;

/// JSON Schema for `report.json`.
pub const REPORT_SCHEMA: &str = include_str!("schema.json");
pub const REPORT_FILE: &str = "report.json";
pub const SCHEMA_FILE: &str = "report.schema.json";

/// Every file of a report, in write order.
#[derive(Debug, Clone)]
pub struct ReportBundle {
    pub report: MetricsReport,
    pub files: Vec<(String, Vec<u8>)>,
}

impl ReportBundle {
    pub fn build(report: MetricsReport, with_svg: bool) -> CliResult<Self> {
        let mut files = vec![
            (REPORT_FILE.to_string(), to_json(&report)?.into_bytes()),
            (SCHEMA_FILE.to_string(), REPORT_SCHEMA.as_bytes().to_vec()),
        ];
        for t in &report.tables {
            files.push((format!("{}.csv", t.name), table_csv(t)?));
        }
        if with_svg {
            files.extend(plots(&report).into_iter().map(|(n, s)| (n, s.into_bytes())));
        }
        Ok(Self { report, files })
    }

    pub fn names(&self) -> Vec<&str> {
        self.files.iter().map(|(n, _)| n.as_str()).collect()
    }
}

pub fn table_csv(t: &Table) -> CliResult<Vec<u8>> {
    let rows: Vec<Vec<String>> = t
        .rows
        .iter()
        .map(|r| {
            let mut v = r.keys.clone();
            v.extend([
                r.cell.source.clone(),
                r.cell.seeds.to_string(),
                num(r.cell.mean),
                num(r.cell.stddev),
            ]);
            v
        })
        .collect();
    csv_bytes(&t.header(), &rows)
}

fn table<'a>(r: &'a MetricsReport, name: &str) -> Option<&'a Table> {
    r.tables.iter().find(|t| t.name == name)
}

fn sources(t: &Table) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for r in &t.rows {
        if !out.contains(&r.cell.source) {
            out.push(r.cell.source.clone());
        }
    }
    out
}

/// Layer × head grid of means from rows whose trailing keys are `layer, head`.
fn grid(r: &MetricsReport, t: &Table, source: &str, prefix: &[&str]) -> Vec<Vec<Option<f64>>> {
    let mut g = vec![vec![None; r.num_heads]; r.num_layers];
    for row in &t.rows {
        let n = row.keys.len();
        if row.cell.source != source || n < 2 || row.keys[..n - 2] != *prefix {
            continue;
        }
        if let (Ok(l), Ok(h)) = (row.keys[n - 2].parse::<usize>(), row.keys[n - 1].parse::<usize>()) {
            if l < r.num_layers && h < r.num_heads {
                g[l][h] = Some(row.cell.mean);
            }
        }
    }
    g
}

fn series(t: &Table, label: String, keep: impl Fn(&Row) -> Option<f64>) -> Series {
    Series {
        label,
        points: t
            .rows
            .iter()
            .filter_map(|r| keep(r).map(|x| (x, r.cell.mean)))
            .collect(),
    }
}

fn plots(r: &MetricsReport) -> Vec<(String, String)> {
    let mut out = Vec::new();
    if let Some(t) = table(r, "maw_head") {
        for src in sources(t) {
            let g = grid(r, t, &src, &[]);
            out.push((
                format!("maw_head_{src}.svg"),
                svg::heatmap(&format!("MAW accuracy per head ({src})"), &g),
            ));
        }
    }
    if let Some(t) = table(r, "mac_head") {
        for src in sources(t) {
            let g = grid(r, t, &src, &["mac", "overlap"]);
            out.push((
                format!("mac_overlap_{src}.svg"),
                svg::heatmap(&format!("MAC overlap with model prediction ({src})"), &g),
            ));
        }
    }
    if let Some(t) = table(r, "mac_split") {
        for src in sources(t) {
            for subset in ["correct", "incorrect"] {
                let g = grid(r, t, &src, &[subset]);
                out.push((
                    format!("mac_split_{subset}_{src}.svg"),
                    svg::heatmap(
                        &format!("MAC accuracy on {subset}ly answered instances ({src})"),
                        &g,
                    ),
                ));
            }
        }
    }
    if let Some(t) = table(r, "mac_layer") {
        for src in sources(t) {
            let lines: Vec<Series> = ["mac", "mas"]
                .iter()
                .map(|score| {
                    series(t, format!("{score} max overlap"), |row| {
                        (row.cell.source == src
                            && row.keys[0] == *score
                            && row.keys[1] == "max_overlap")
                            .then(|| row.keys[2].parse().ok())
                            .flatten()
                    })
                })
                .collect();
            out.push((
                format!("mac_layer_{src}.svg"),
                svg::line_chart(
                    &format!("Best-head overlap per layer ({src})"),
                    "layer",
                    "overlap",
                    &lines,
                ),
            ));
        }
    }
    if let Some(t) = table(r, "pruning") {
        let mut lines = Vec::new();
        for src in sources(t) {
            for order in ["descending-mac", "ascending-mac"] {
                let s = series(t, format!("{order} ({src})"), |row| {
                    (row.cell.source == src && row.keys[0] == order)
                        .then(|| row.keys[1].parse().ok())
                        .flatten()
                });
                if !s.points.is_empty() {
                    lines.push(s);
                }
            }
        }
        out.push((
            "pruning.svg".into(),
            svg::line_chart("Accuracy as heads are pruned", "heads pruned", "accuracy", &lines),
        ));
    }
    if let Some(t) = table(r, "layer_probe") {
        let s = series(t, "probe".into(), |row| row.keys[0].parse().ok());
        out.push((
            "layer_probe.svg".into(),
            svg::line_chart("Probe accuracy per layer", "layer", "accuracy", &[s]),
        ));
    }
    out
}
