//! Dataset directories written by `gen-data`, and checkpoint loading.

use std::path::{Path, PathBuf};

use linkprobe::dataset::{load_jsonl, tokenize_all, QAInstance, TokenizedInstance, Vocabulary};
use linkprobe::trainer::{checkpoint_from_bytes, Checkpoint};
use serde::{Deserialize, Serialize};

use crate::args::Split;
use crate::error::{CliError, CliResult};
use crate::run::{read_bytes, sha256_hex};

pub const GRAPH_FILE: &str = "graph.tsv";
pub const TRAIN_FILE: &str = "train.jsonl";
pub const DEV_FILE: &str = "dev.jsonl";
pub const VOCAB_FILE: &str = "vocab.txt";
pub const DROPS_FILE: &str = "drops.json";

#[derive(Debug, Clone)]
pub struct Dataset {
    pub dir: PathBuf,
    /// Digest over the train, dev and vocabulary files.
    pub id: String,
    pub vocab: Vocabulary,
    pub train_raw: Vec<QAInstance>,
    pub dev_raw: Vec<QAInstance>,
    pub train: Vec<TokenizedInstance>,
    pub dev: Vec<TokenizedInstance>,
}

impl Dataset {
    pub fn files(dir: &Path) -> [PathBuf; 3] {
        [dir.join(TRAIN_FILE), dir.join(DEV_FILE), dir.join(VOCAB_FILE)]
    }

    pub fn load(dir: &Path) -> CliResult<Self> {
        let mut digests = String::new();
        for f in Self::files(dir) {
            digests.push_str(&sha256_hex(&read_bytes(&f)?));
        }
        let vocab = Vocabulary::load(&dir.join(VOCAB_FILE))?;
        let train_raw = load_jsonl(&dir.join(TRAIN_FILE))?;
        let dev_raw = load_jsonl(&dir.join(DEV_FILE))?;
        let train = tokenize_all(&train_raw, &vocab)?;
        let dev = tokenize_all(&dev_raw, &vocab)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            id: sha256_hex(digests.as_bytes()),
            vocab,
            train_raw,
            dev_raw,
            train,
            dev,
        })
    }

    /// The split, cut to the first `limit` instances.
    pub fn split(&self, split: Split, limit: Option<usize>) -> CliResult<&[TokenizedInstance]> {
        let all = match split {
            Split::Train => &self.train,
            Split::Dev => &self.dev,
        };
        let n = limit.unwrap_or(all.len()).min(all.len());
        if n == 0 {
            return Err(CliError::validation(format!("{split:?} split has no instances")));
        }
        Ok(&all[..n])
    }
}

#[derive(Debug, Clone)]
pub struct LoadedCheckpoint {
    pub path: PathBuf,
    /// SHA-256 of the checkpoint file.
    pub id: String,
    pub checkpoint: Checkpoint,
}

impl LoadedCheckpoint {
    pub fn load(path: &Path, dataset: &Dataset) -> CliResult<Self> {
        let bytes = read_bytes(path)?;
        let checkpoint = checkpoint_from_bytes(&bytes)?;
        let v = checkpoint.params.config.vocab_size;
        if v != dataset.vocab.len() {
            return Err(CliError::validation(format!(
                "checkpoint vocabulary size {v} does not match the dataset's {}",
                dataset.vocab.len()
            )));
        }
        Ok(Self {
            path: path.to_path_buf(),
            id: sha256_hex(&bytes),
            checkpoint,
        })
    }
}

/// Where a result came from; fragments must agree on it to be merged.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub dataset_id: String,
    pub checkpoint_id: String,
    /// Training seed of the checkpoint.
    pub seed: u64,
    pub num_layers: usize,
    pub num_heads: usize,
}

impl Provenance {
    pub fn new(dataset: &Dataset, ckpt: &LoadedCheckpoint) -> Self {
        let cfg = &ckpt.checkpoint.params.config;
        Self {
            dataset_id: dataset.id.clone(),
            checkpoint_id: ckpt.id.clone(),
            seed: ckpt.checkpoint.meta.seed,
            num_layers: cfg.num_layers,
            num_heads: cfg.num_heads,
        }
    }
}
