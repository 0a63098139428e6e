use super::align::TokenizedInstance;
use super::generate::{generate_synthetic, synthetic_graph, GenerationConfig, SyntheticGraphConfig};
use super::instance::QAInstance;
use super::triple::TripleStore;
use super::vocab::{VocabOptions, Vocabulary};
use super::{build_vocabulary, tokenize_all};
use crate::error::Result;

/// A generated graph with its tokenized train/dev questions.
#[derive(Debug, Clone)]
pub struct SyntheticTask {
    pub graph: TripleStore,
    pub vocab: Vocabulary,
    pub train_raw: Vec<QAInstance>,
    pub dev_raw: Vec<QAInstance>,
    pub train: Vec<TokenizedInstance>,
    pub dev: Vec<TokenizedInstance>,
}

impl SyntheticTask {
    pub fn generate(graph: &SyntheticGraphConfig, generation: &GenerationConfig) -> Result<Self> {
        let kg = synthetic_graph(graph)?;
        let split = generate_synthetic(&kg, generation)?;
        Self::from_instances(kg, split.train, split.dev)
    }

    /// Builds the vocabulary over both splits and tokenizes them.
    pub fn from_instances(
        graph: TripleStore,
        train_raw: Vec<QAInstance>,
        dev_raw: Vec<QAInstance>,
    ) -> Result<Self> {
        let vocab = build_vocabulary([&train_raw[..], &dev_raw[..]], &VocabOptions::default());
        let train = tokenize_all(&train_raw, &vocab)?;
        let dev = tokenize_all(&dev_raw, &vocab)?;
        Ok(Self {
            graph,
            vocab,
            train_raw,
            dev_raw,
            train,
            dev,
        })
    }

    /// Longest sentence over both splits.
    pub fn max_len(&self) -> usize {
        self.train
            .iter()
            .chain(&self.dev)
            .flat_map(|i| i.sentences.iter().map(Vec::len))
            .max()
            .unwrap_or(0)
    }
}
