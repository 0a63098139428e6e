//! Triple store, synthetic question generation, tokenization, and
//! concept-span alignment.

mod align;
mod generate;
mod instance;
mod task;
mod triple;
pub mod vocab;

pub use align::{
    filter_instances, find_subsequence, tokenize_and_align, DropReport, DroppedInstance,
    SpanAlignment, TokenizedInstance,
};
pub use generate::{
    generate_synthetic, synthetic_graph, templates, GenerationConfig, SyntheticGraphConfig,
    SyntheticSplit,
};
pub use instance::{
    load_jsonl, read_commonsenseqa, read_jsonl, save_jsonl, to_jsonl_string, write_jsonl,
    Candidate, QAInstance, CSQA_DEFAULT_RELATION, NUM_CHOICES,
};
pub use task::SyntheticTask;
pub use triple::{RelationSet, Triple, TripleStore, DEFAULT_RELATIONS};
pub use vocab::{basic_split, VocabOptions, Vocabulary};

use crate::error::Result;

/// Vocabulary over every question and candidate text of the given sets.
pub fn build_vocabulary<'a>(
    sets: impl IntoIterator<Item = &'a [QAInstance]>,
    opts: &VocabOptions,
) -> Vocabulary {
    let texts: Vec<&str> = sets
        .into_iter()
        .flat_map(|s| s.iter())
        .flat_map(|i| {
            std::iter::once(i.question.as_str()).chain(i.candidates.iter().map(|c| c.text.as_str()))
        })
        .collect();
    Vocabulary::build(texts, opts)
}

/// Tokenizes and aligns every instance, failing on the first misalignment.
pub fn tokenize_all(data: &[QAInstance], vocab: &Vocabulary) -> Result<Vec<TokenizedInstance>> {
    data.iter().map(|i| tokenize_and_align(i, vocab)).collect()
}
