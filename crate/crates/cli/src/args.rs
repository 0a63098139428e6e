use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use linkprobe::trainer::TrainMode;
use linkprobe::Precision;
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(name = "linkprobe", version, about = "Probe attention links in a multiple-choice encoder")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic graph and train/dev question sets.
    GenData(GenDataArgs),
    /// Train a model (or only its classifier) and write a checkpoint.
    Train(TrainArgs),
    /// Score a split with a checkpoint.
    Eval(EvalArgs),
    /// Most-attended-word accuracy per head.
    ProbeMaw(ProbeArgs),
    /// Most-attended-candidate and most-attended-[CLS] agreement per head.
    ProbeMac(ProbeArgs),
    /// Integrated-gradients attribution summaries per head.
    Attribute(AttributeArgs),
    /// Accuracy as heads are pruned, ranked by MAC overlap within each layer.
    PruneSweep(PruneArgs),
    /// Train a classifier on every layer's [CLS] features.
    LayerSweep(LayerSweepArgs),
    /// Merge metric fragments into tables, JSON and plots.
    Report(ReportArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::GenData(_) => "gen-data",
            Command::Train(_) => "train",
            Command::Eval(_) => "eval",
            Command::ProbeMaw(_) => "probe-maw",
            Command::ProbeMac(_) => "probe-mac",
            Command::Attribute(_) => "attribute",
            Command::PruneSweep(_) => "prune-sweep",
            Command::LayerSweep(_) => "layer-sweep",
            Command::Report(_) => "report",
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// TOML config file; flags take precedence over it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct GenDataArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub train_size: Option<usize>,
    #[arg(long)]
    pub dev_size: Option<usize>,
    /// Number of source concepts in the graph.
    #[arg(long)]
    pub sources: Option<usize>,
    #[arg(long)]
    pub relations_per_source: Option<usize>,
    #[arg(long)]
    pub targets_per_pair: Option<usize>,
    /// Comma-separated relation filter.
    #[arg(long, value_delimiter = ',')]
    pub relations: Option<Vec<String>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PrecisionArg {
    F32,
    F64,
}

impl From<PrecisionArg> for Precision {
    fn from(p: PrecisionArg) -> Self {
        match p {
            PrecisionArg::F32 => Precision::F32,
            PrecisionArg::F64 => Precision::F64,
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct ModelFlags {
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub heads: Option<usize>,
    #[arg(long)]
    pub model_width: Option<usize>,
    #[arg(long)]
    pub key_width: Option<usize>,
    #[arg(long)]
    pub ff_width: Option<usize>,
    #[arg(long)]
    pub max_seq_len: Option<usize>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct OptimFlags {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long = "lr")]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub grad_accum: Option<usize>,
    #[arg(long)]
    pub warmup: Option<f64>,
    #[arg(long, value_enum)]
    pub precision: Option<PrecisionArg>,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    /// Directory written by gen-data.
    #[arg(long)]
    pub data: PathBuf,
    /// Start from this checkpoint instead of random init.
    #[arg(long)]
    pub init: Option<PathBuf>,
    /// full, output_only, or probe:K.
    #[arg(long, value_parser = parse_mode)]
    pub mode: Option<TrainMode>,
    #[command(flatten)]
    pub optim: OptimFlags,
    #[command(flatten)]
    pub model: ModelFlags,
    /// Write the initialized model without training.
    #[arg(long)]
    pub init_only: bool,
}

fn parse_mode(s: &str) -> Result<TrainMode, String> {
    s.parse().map_err(|e: linkprobe::Error| e.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
}

#[derive(Debug, Clone, Args)]
pub struct DataFlags {
    /// Directory written by gen-data.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, value_enum)]
    pub split: Option<Split>,
    /// Use only the first N instances of the split.
    #[arg(long)]
    pub limit: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub data: DataFlags,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceArg {
    Attention,
    Attribution,
}

impl From<SourceArg> for linkprobe::metrics::LinkSource {
    fn from(s: SourceArg) -> Self {
        match s {
            SourceArg::Attention => Self::Attention,
            SourceArg::Attribution => Self::Attribution,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct ProbeArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub data: DataFlags,
    #[arg(long, value_enum)]
    pub source: Option<SourceArg>,
    /// Riemann steps for attribution.
    #[arg(long)]
    pub ig_steps: Option<usize>,
    /// Relations with fewer instances are left out of the relation table.
    #[arg(long)]
    pub min_relation_count: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct AttributeArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub data: DataFlags,
    #[arg(long)]
    pub ig_steps: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PruneOrder {
    DescendingMac,
    AscendingMac,
}

impl PruneOrder {
    pub fn as_str(self) -> &'static str {
        match self {
            PruneOrder::DescendingMac => "descending-mac",
            PruneOrder::AscendingMac => "ascending-mac",
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct PruneArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub data: DataFlags,
    #[arg(long, value_enum)]
    pub order: PruneOrder,
    /// Scores used to rank heads.
    #[arg(long, value_enum)]
    pub source: Option<SourceArg>,
    #[arg(long)]
    pub ig_steps: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct LayerSweepArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub data: DataFlags,
    #[command(flatten)]
    pub optim: OptimFlags,
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    #[command(flatten)]
    pub common: Common,
    /// Fragment JSON files written by the probe and sweep commands.
    pub fragments: Vec<PathBuf>,
    /// Skip SVG plots.
    #[arg(long)]
    pub no_svg: bool,
}
