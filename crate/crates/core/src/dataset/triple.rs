use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relations reported in the per-relation MAW table.
pub const DEFAULT_RELATIONS: [&str; 13] = [
    "AtLocation",
    "Causes",
    "CapableOf",
    "Antonym",
    "HasPrerequisite",
    "HasSubevent",
    "Desires",
    "CausesDesire",
    "PartOf",
    "HasProperty",
    "MotivatedByGoal",
    "HasA",
    "RelatedTo",
];

/// The declared relation vocabulary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationSet(BTreeSet<String>);

impl Default for RelationSet {
    fn default() -> Self {
        Self(DEFAULT_RELATIONS.iter().map(|s| s.to_string()).collect())
    }
}

impl RelationSet {
    pub fn new<I: IntoIterator<Item = S>, S: Into<String>>(labels: I) -> Self {
        Self(labels.into_iter().map(Into::into).collect())
    }

    pub fn contains(&self, relation: &str) -> bool {
        self.0.contains(relation)
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(String::as_str)
    }
}

/// A `⟨source, relation, target⟩` knowledge-graph edge.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Triple {
    pub source: String,
    pub relation: String,
    pub target: String,
}

impl Triple {
    pub fn new(source: &str, relation: &str, target: &str) -> Self {
        Self {
            source: source.into(),
            relation: relation.into(),
            target: target.into(),
        }
    }

    fn validate(&self, relations: &RelationSet) -> Result<()> {
        if self.source.is_empty() || self.relation.is_empty() || self.target.is_empty() {
            return Err(Error::Validation(format!("empty field in {self:?}")));
        }
        if !relations.contains(&self.relation) {
            return Err(Error::Validation(format!(
                "relation {:?} is not declared",
                self.relation
            )));
        }
        Ok(())
    }
}

/// Immutable, indexed set of triples.
#[derive(Debug, Clone, Default)]
pub struct TripleStore {
    triples: BTreeSet<Triple>,
    by_pair: BTreeMap<(String, String), BTreeSet<String>>,
}

impl TripleStore {
    pub fn new(triples: impl IntoIterator<Item = Triple>, relations: &RelationSet) -> Result<Self> {
        let mut store = Self::default();
        for t in triples {
            t.validate(relations)?;
            store
                .by_pair
                .entry((t.source.clone(), t.relation.clone()))
                .or_default()
                .insert(t.target.clone());
            store.triples.insert(t);
        }
        Ok(store)
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn contains(&self, source: &str, relation: &str, target: &str) -> bool {
        self.by_pair
            .get(&(source.to_owned(), relation.to_owned()))
            .is_some_and(|t| t.contains(target))
    }

    /// Targets of `(source, relation)` in lexicographic order.
    pub fn targets(&self, source: &str, relation: &str) -> Vec<&str> {
        self.by_pair
            .get(&(source.to_owned(), relation.to_owned()))
            .map(|t| t.iter().map(String::as_str).collect())
            .unwrap_or_default()
    }

    /// All `(source, relation)` pairs in lexicographic order.
    pub fn pairs(&self) -> impl Iterator<Item = (&str, &str)> {
        self.by_pair.keys().map(|(s, r)| (s.as_str(), r.as_str()))
    }

    /// Every target reachable by `relation` from any source.
    pub fn relation_targets(&self, relation: &str) -> BTreeSet<&str> {
        self.triples
            .iter()
            .filter(|t| t.relation == relation)
            .map(|t| t.target.as_str())
            .collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Triple> {
        self.triples.iter()
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for t in &self.triples {
            out.push_str(&format!("{}\t{}\t{}\n", t.source, t.relation, t.target));
        }
        out
    }

    pub fn parse_tsv(text: &str, relations: &RelationSet) -> Result<Self> {
        let mut triples = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let [source, relation, target] = fields[..] else {
                return Err(Error::Validation(format!(
                    "triple line {}: expected 3 tab-separated fields, got {}",
                    i + 1,
                    fields.len()
                )));
            };
            triples.push(Triple::new(source, relation, target));
        }
        Self::new(triples, relations)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_tsv()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path, relations: &RelationSet) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_tsv(&text, relations)
    }
}
