use std::path::Path;

use linkprobe::analysis::{CurvePoint, MacProbe, MawProbe};
use linkprobe::encoder::HeadId;
use linkprobe::metrics::LinkSource;
use serde::{Deserialize, Serialize};

use crate::args::{PruneOrder, Split};
use crate::data::Provenance;
use crate::error::{CliError, CliResult};
use crate::run::read_bytes;

pub const FRAGMENT_FORMAT: u32 = 1;

/// One probe or sweep result, written by a single command run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fragment {
    pub format: u32,
    pub provenance: Provenance,
    pub split: Split,
    pub instances: usize,
    #[serde(flatten)]
    pub body: FragmentBody,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FragmentBody {
    Eval {
        accuracy: f64,
    },
    Maw {
        ig_steps: Option<usize>,
        probe: MawProbe,
    },
    Mac {
        ig_steps: Option<usize>,
        probe: MacProbe,
    },
    Pruning {
        source: LinkSource,
        ig_steps: Option<usize>,
        order: PruneOrder,
        head_order: Vec<HeadId>,
        curve: Vec<CurvePoint>,
        area: f64,
    },
    Layers {
        /// Dev accuracy of a classifier trained on each layer's [CLS] features.
        accuracy: Vec<f64>,
    },
}

impl FragmentBody {
    pub fn kind(&self) -> &'static str {
        match self {
            FragmentBody::Eval { .. } => "eval",
            FragmentBody::Maw { .. } => "maw",
            FragmentBody::Mac { .. } => "mac",
            FragmentBody::Pruning { .. } => "pruning",
            FragmentBody::Layers { .. } => "layers",
        }
    }

    /// Link source, or `model` for plain accuracy results.
    pub fn source(&self) -> String {
        match self {
            FragmentBody::Maw { probe, .. } => probe.source.to_string(),
            FragmentBody::Mac { probe, .. } => probe.source.to_string(),
            FragmentBody::Pruning { source, .. } => source.to_string(),
            FragmentBody::Eval { .. } | FragmentBody::Layers { .. } => "model".into(),
        }
    }

    pub fn ig_steps(&self) -> Option<usize> {
        match self {
            FragmentBody::Maw { ig_steps, .. }
            | FragmentBody::Mac { ig_steps, .. }
            | FragmentBody::Pruning { ig_steps, .. } => *ig_steps,
            _ => None,
        }
    }

    /// Fragments with equal keys are repeats of one experiment over seeds.
    pub fn group_key(&self) -> String {
        match self {
            FragmentBody::Pruning { order, .. } => {
                format!("pruning/{}/{}", self.source(), order.as_str())
            }
            _ => format!("{}/{}", self.kind(), self.source()),
        }
    }
}

impl Fragment {
    pub fn new(provenance: Provenance, split: Split, instances: usize, body: FragmentBody) -> Self {
        Self {
            format: FRAGMENT_FORMAT,
            provenance,
            split,
            instances,
            body,
        }
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let bytes = read_bytes(path)?;
        let f: Self = serde_json::from_slice(&bytes)
            .map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
        if f.format != FRAGMENT_FORMAT {
            return Err(CliError::validation(format!(
                "{}: fragment format {} (expected {FRAGMENT_FORMAT})",
                path.display(),
                f.format
            )));
        }
        Ok(f)
    }
}
