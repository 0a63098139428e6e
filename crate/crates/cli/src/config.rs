//! TOML config files. Every key is optional; flags override the file and
//! the file overrides built-in defaults.

use std::path::Path;

use linkprobe::analysis::DEFAULT_IG_STEPS;
use linkprobe::dataset::{GenerationConfig, SyntheticGraphConfig};
use linkprobe::encoder::EncoderConfig;
use linkprobe::metrics::{LinkSource, DEFAULT_MIN_RELATION_COUNT};
use linkprobe::trainer::{TrainConfig, TrainMode};
use serde::{Deserialize, Serialize};

use crate::args::{
    GenDataArgs, ModelFlags, OptimFlags, PrecisionArg, PruneOrder, SourceArg, Split,
};
use crate::error::{CliError, CliResult};

pub const DEFAULT_SEED: u64 = 7;

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub analysis: AnalysisSection,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub train_size: Option<usize>,
    pub dev_size: Option<usize>,
    pub sources: Option<usize>,
    pub relations_per_source: Option<usize>,
    pub targets_per_pair: Option<usize>,
    pub relations: Option<Vec<String>>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub num_layers: Option<usize>,
    pub num_heads: Option<usize>,
    pub model_width: Option<usize>,
    pub key_width: Option<usize>,
    pub ff_width: Option<usize>,
    pub max_seq_len: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub mode: Option<String>,
    pub epochs: Option<usize>,
    pub learning_rate: Option<f64>,
    pub batch_size: Option<usize>,
    pub gradient_accumulation_steps: Option<usize>,
    pub warmup_fraction: Option<f64>,
    pub precision: Option<PrecisionArg>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSection {
    pub source: Option<SourceArg>,
    pub ig_steps: Option<usize>,
    pub split: Option<Split>,
    pub limit: Option<usize>,
    pub min_relation_count: Option<usize>,
}

impl FileConfig {
    pub fn parse(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::validation(format!("config: {e}")))
    }

    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
                Self::parse(&text).map_err(|e| CliError::validation(format!("{}: {e}", p.display())))
            }
        }
    }

    pub fn seed(&self, flag: Option<u64>) -> u64 {
        flag.or(self.seed).unwrap_or(DEFAULT_SEED)
    }

    pub fn data(&self, a: &GenDataArgs, seed: u64) -> (SyntheticGraphConfig, GenerationConfig) {
        let d = &self.data;
        let g0 = SyntheticGraphConfig::default();
        let q0 = GenerationConfig::default();
        let graph = SyntheticGraphConfig {
            seed,
            sources: a.sources.or(d.sources).unwrap_or(g0.sources),
            relations_per_source: a
                .relations_per_source
                .or(d.relations_per_source)
                .unwrap_or(g0.relations_per_source),
            targets_per_pair: a
                .targets_per_pair
                .or(d.targets_per_pair)
                .unwrap_or(g0.targets_per_pair),
        };
        let generation = GenerationConfig {
            seed,
            train_size: a.train_size.or(d.train_size).unwrap_or(q0.train_size),
            dev_size: a.dev_size.or(d.dev_size).unwrap_or(q0.dev_size),
            relations: a.relations.clone().or_else(|| d.relations.clone()),
        };
        (graph, generation)
    }

    pub fn model(&self, f: &ModelFlags, vocab_size: usize, seed: u64) -> EncoderConfig {
        let m = &self.model;
        let d = EncoderConfig::default();
        EncoderConfig {
            num_layers: f.layers.or(m.num_layers).unwrap_or(d.num_layers),
            num_heads: f.heads.or(m.num_heads).unwrap_or(d.num_heads),
            model_width: f.model_width.or(m.model_width).unwrap_or(d.model_width),
            key_width: f.key_width.or(m.key_width).unwrap_or(d.key_width),
            ff_width: f.ff_width.or(m.ff_width).unwrap_or(d.ff_width),
            max_seq_len: f.max_seq_len.or(m.max_seq_len).unwrap_or(d.max_seq_len),
            vocab_size,
            seed,
        }
    }

    pub fn train(
        &self,
        f: &OptimFlags,
        mode: Option<TrainMode>,
        seed: u64,
    ) -> CliResult<TrainConfig> {
        let t = &self.train;
        let d = TrainConfig::from_scratch();
        let mode = match mode {
            Some(m) => m,
            None => match &t.mode {
                Some(s) => s.parse().map_err(CliError::from)?,
                None => d.mode,
            },
        };
        Ok(TrainConfig {
            mode,
            epochs: f.epochs.or(t.epochs).unwrap_or(d.epochs),
            learning_rate: f.learning_rate.or(t.learning_rate).unwrap_or(d.learning_rate),
            batch_size: f.batch_size.or(t.batch_size).unwrap_or(d.batch_size),
            gradient_accumulation_steps: f
                .grad_accum
                .or(t.gradient_accumulation_steps)
                .unwrap_or(d.gradient_accumulation_steps),
            seed,
            precision: f.precision.or(t.precision).map_or(d.precision, Into::into),
            warmup_fraction: f.warmup.or(t.warmup_fraction).unwrap_or(d.warmup_fraction),
        })
    }

    pub fn analysis(
        &self,
        source: Option<SourceArg>,
        default_source: SourceArg,
        ig_steps: Option<usize>,
        split: Option<Split>,
        limit: Option<usize>,
        min_relation_count: Option<usize>,
    ) -> AnalysisSettings {
        let a = &self.analysis;
        AnalysisSettings {
            source: source.or(a.source).unwrap_or(default_source).into(),
            ig_steps: ig_steps.or(a.ig_steps).unwrap_or(DEFAULT_IG_STEPS),
            split: split.or(a.split).unwrap_or(Split::Dev),
            limit: limit.or(a.limit),
            min_relation_count: min_relation_count
                .or(a.min_relation_count)
                .unwrap_or(DEFAULT_MIN_RELATION_COUNT),
        }
    }
}

/// Resolved analysis options, recorded in manifests and fragments.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalysisSettings {
    pub source: LinkSource,
    pub ig_steps: usize,
    pub split: Split,
    pub limit: Option<usize>,
    pub min_relation_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PruneSettings {
    #[serde(flatten)]
    pub analysis: AnalysisSettings,
    pub order: PruneOrder,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gen_args() -> GenDataArgs {
        GenDataArgs {
            common: crate::args::Common {
                out: "o".into(),
                config: None,
                seed: None,
            },
            train_size: None,
            dev_size: Some(11),
            sources: None,
            relations_per_source: None,
            targets_per_pair: None,
            relations: None,
        }
    }

    #[test]
    fn flags_beat_file_beat_defaults() {
        let f = FileConfig::parse("seed = 3\n[data]\ntrain_size = 40\ndev_size = 20\n").unwrap();
        assert_eq!(f.seed(None), 3);
        assert_eq!(f.seed(Some(9)), 9);
        assert_eq!(FileConfig::default().seed(None), DEFAULT_SEED);
        let (g, q) = f.data(&gen_args(), 3);
        assert_eq!(q.train_size, 40);
        assert_eq!(q.dev_size, 11);
        assert_eq!(g.sources, SyntheticGraphConfig::default().sources);
        assert_eq!((g.seed, q.seed), (3, 3));
    }

    #[test]
    fn train_section_resolves_mode_and_precision() {
        let f = FileConfig::parse(
            "[train]\nmode = \"probe:2\"\nprecision = \"f32\"\nlearning_rate = 0.01\n",
        )
        .unwrap();
        let flags = OptimFlags {
            learning_rate: Some(0.5),
            ..Default::default()
        };
        let t = f.train(&flags, None, 1).unwrap();
        assert_eq!(t.mode, TrainMode::ProbeAtLayer(2));
        assert_eq!(t.precision, linkprobe::Precision::F32);
        assert_eq!(t.learning_rate, 0.5);
        assert_eq!(t.epochs, TrainConfig::from_scratch().epochs);
        let t = f.train(&flags, Some(TrainMode::Full), 1).unwrap();
        assert_eq!(t.mode, TrainMode::Full);
    }

    #[test]
    fn unknown_keys_are_validation_errors() {
        let e = FileConfig::parse("[train]\nepoch = 3\n").unwrap_err();
        assert_eq!(e.exit_code(), 3);
        let e = FileConfig::parse("bogus = 1\n").unwrap_err();
        assert_eq!(e.exit_code(), 3);
        let e = FileConfig::parse("[train]\nmode = \"sideways\"\n")
            .unwrap()
            .train(&OptimFlags::default(), None, 0)
            .unwrap_err();
        assert_eq!(e.exit_code(), 3);
    }

    #[test]
    fn model_flags_override_file() {
        let f = FileConfig::parse("[model]\nnum_layers = 2\nnum_heads = 3\n").unwrap();
        let flags = ModelFlags {
            heads: Some(5),
            ..Default::default()
        };
        let m = f.model(&flags, 99, 4);
        assert_eq!((m.num_layers, m.num_heads, m.vocab_size, m.seed), (2, 5, 99, 4));
    }
}
