//! Synthetic ConceptNet-style graphs and question sets built from them.
//!
//! Every question is built from one `(source, relation, target)` edge: the
//! source is written verbatim into a per-relation template, the target is the
//! gold answer, two distractors are targets of the same source under other
//! relations, and two are random targets of the same relation that the source
//! is not linked to. Telling the gold answer apart from the random distractors
//! therefore requires relating the answer concept to the question concept.

use std::collections::BTreeSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::instance::{Candidate, QAInstance, NUM_CHOICES};
use super::triple::{RelationSet, Triple, TripleStore, DEFAULT_RELATIONS};
use crate::error::{Error, Result};

const SOURCES: [&str; 30] = [
    "bird", "dog", "cat", "student", "farmer", "child", "doctor", "teacher", "musician", "chef",
    "soldier", "painter", "sailor", "baker", "athlete", "scientist", "gardener", "traveler",
    "mechanic", "librarian", "horse", "fisherman", "grandmother", "astronaut", "carpenter",
    "firefighter", "pilot", "nurse", "writer", "dancer",
];

fn target_pool(relation: &str) -> &'static [&'static str] {
    match relation {
        "AtLocation" => &[
            "cage", "windowsill", "countryside", "kitchen", "hospital", "library", "garage",
            "museum", "train station", "backyard",
        ],
        "Causes" => &[
            "happiness", "fatigue", "laughter", "noise", "injury", "celebration", "confusion",
            "excitement", "boredom", "applause",
        ],
        "CapableOf" => &[
            "sing", "swim", "climb", "paint", "cook", "repair engines", "read maps", "run fast",
            "build houses", "heal wounds",
        ],
        "Antonym" => &[
            "giant", "villain", "stranger", "beginner", "coward", "pauper", "enemy", "follower",
            "loser", "amateur",
        ],
        "HasPrerequisite" => &[
            "training", "patience", "permission", "equipment", "practice", "a license",
            "education", "courage", "money", "a uniform",
        ],
        "HasSubevent" => &[
            "sleeping", "eating", "traveling", "talking", "waiting", "shopping", "drawing",
            "exploring", "dreaming", "resting",
        ],
        "Desires" => &[
            "food", "shelter", "freedom", "attention", "friendship", "recognition", "comfort",
            "adventure", "knowledge", "respect",
        ],
        "CausesDesire" => &[
            "hunger", "curiosity", "ambition", "loneliness", "jealousy", "thirst", "nostalgia",
            "wanderlust", "admiration", "envy",
        ],
        "PartOf" => &[
            "family", "orchestra", "team", "crew", "village", "community", "household", "army",
            "school", "company",
        ],
        "HasProperty" => &[
            "brave", "gentle", "clever", "noisy", "patient", "friendly", "careful", "strong",
            "quick", "creative",
        ],
        "MotivatedByGoal" => &[
            "success", "survival", "fame", "justice", "wealth", "peace", "safety", "honor",
            "victory", "health",
        ],
        "HasA" => &[
            "feathers", "tail", "notebook", "hammer", "backpack", "whistle", "tools", "helmet",
            "instrument", "passport",
        ],
        "RelatedTo" => &[
            "nature", "science", "music", "art", "sport", "medicine", "history", "ocean",
            "weather", "culture",
        ],
        _ => &[],
    }
}

/// Question templates; `{}` is replaced by the question concept.
pub fn templates(relation: &str) -> &'static [&'static str] {
    match relation {
        "AtLocation" => &["where would you find the {} ?", "where is the {} usually located ?"],
        "Causes" => &["what does the {} often cause ?", "what can the {} lead to ?"],
        "CapableOf" => &["what is the {} capable of ?", "what can the {} do ?"],
        "Antonym" => &["what is the opposite of the {} ?", "the {} is the opposite of what ?"],
        "HasPrerequisite" => &[
            "what does the {} need first ?",
            "before the {} can start , what is needed ?",
        ],
        "HasSubevent" => &[
            "what happens while the {} is busy ?",
            "what does the {} do along the way ?",
        ],
        "Desires" => &["what does the {} want ?", "what would the {} wish for ?"],
        "CausesDesire" => &["what feeling makes the {} act ?", "the {} acts out of what feeling ?"],
        "PartOf" => &["what is the {} part of ?", "the {} belongs to what group ?"],
        "HasProperty" => &["what quality does the {} have ?", "how would you describe the {} ?"],
        "MotivatedByGoal" => &["what goal drives the {} ?", "why does the {} work so hard ?"],
        "HasA" => &["what does the {} carry ?", "what does the {} have with them ?"],
        "RelatedTo" => &[
            "what field is the {} related to ?",
            "the {} is connected to which topic ?",
        ],
        _ => &["which answer is linked to the {} ?"],
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticGraphConfig {
    pub seed: u64,
    pub sources: usize,
    pub relations_per_source: usize,
    pub targets_per_pair: usize,
}

impl Default for SyntheticGraphConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            sources: 24,
            relations_per_source: 3,
            targets_per_pair: 3,
        }
    }
}

/// Builds a graph over the built-in concept lists. Target pools are disjoint
/// across relations.
pub fn synthetic_graph(cfg: &SyntheticGraphConfig) -> Result<TripleStore> {
    if cfg.sources == 0 || cfg.sources > SOURCES.len() {
        return Err(Error::Config(format!(
            "sources must be in 1..={}, got {}",
            SOURCES.len(),
            cfg.sources
        )));
    }
    if cfg.relations_per_source == 0 || cfg.relations_per_source > DEFAULT_RELATIONS.len() {
        return Err(Error::Config(format!(
            "relations_per_source must be in 1..={}",
            DEFAULT_RELATIONS.len()
        )));
    }
    let pool_len = target_pool(DEFAULT_RELATIONS[0]).len();
    if cfg.targets_per_pair == 0 || cfg.targets_per_pair >= pool_len {
        return Err(Error::Config(format!(
            "targets_per_pair must be in 1..{pool_len}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut triples = Vec::new();
    for &source in &SOURCES[..cfg.sources] {
        let relations: Vec<&str> = DEFAULT_RELATIONS
            .choose_multiple(&mut rng, cfg.relations_per_source)
            .copied()
            .collect();
        for relation in relations {
            for &target in target_pool(relation).choose_multiple(&mut rng, cfg.targets_per_pair) {
                triples.push(Triple::new(source, relation, target));
            }
        }
    }
    TripleStore::new(triples, &RelationSet::default())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationConfig {
    pub seed: u64,
    pub train_size: usize,
    pub dev_size: usize,
    /// Relations to draw questions from; all graph relations when `None`.
    pub relations: Option<Vec<String>>,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            train_size: 1500,
            dev_size: 300,
            relations: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntheticSplit {
    pub train: Vec<QAInstance>,
    pub dev: Vec<QAInstance>,
}

struct Plan<'a> {
    edge: &'a Triple,
    related: Vec<&'a str>,
    random: Vec<&'a str>,
}

fn plan<'a>(kg: &'a TripleStore, edge: &'a Triple) -> Plan<'a> {
    let own: BTreeSet<&str> = kg.targets(&edge.source, &edge.relation).into_iter().collect();
    let mut related: BTreeSet<&str> = BTreeSet::new();
    for (s, r) in kg.pairs() {
        if s == edge.source && r != edge.relation {
            related.extend(kg.targets(s, r));
        }
    }
    let related: Vec<&str> = related.into_iter().filter(|t| !own.contains(t)).collect();
    let random: Vec<&str> = kg
        .relation_targets(&edge.relation)
        .into_iter()
        .filter(|t| !own.contains(t) && !related.contains(t))
        .collect();
    Plan {
        edge,
        related,
        random,
    }
}

fn build_instance(id: String, p: &Plan<'_>, rng: &mut ChaCha8Rng) -> QAInstance {
    let tpl = templates(&p.edge.relation)
        .choose(rng)
        .expect("every relation has a template");
    let question = tpl.replacen("{}", &p.edge.source, 1);
    let mut distractors: Vec<&str> = p.related.choose_multiple(rng, 2).copied().collect();
    distractors.extend(p.random.choose_multiple(rng, 2).copied());
    distractors.shuffle(rng);
    let gold_pos = rng.random_range(0..NUM_CHOICES);
    let mut names = distractors;
    names.insert(gold_pos, &p.edge.target);
    QAInstance {
        id,
        question,
        question_concept: p.edge.source.clone(),
        relation: p.edge.relation.clone(),
        candidates: names
            .into_iter()
            .map(|c| Candidate {
                text: c.to_owned(),
                concept: c.to_owned(),
            })
            .collect(),
        gold_index: gold_pos + 1,
    }
}

/// Generates train and dev questions from `kg`.
///
/// Train questions cycle through every usable edge in reshuffled passes, so
/// each dev question's gold edge is also covered in training once
/// `train_size` reaches the number of usable edges. Dev questions sample
/// edges uniformly with fresh templates and distractors.
pub fn generate_synthetic(kg: &TripleStore, cfg: &GenerationConfig) -> Result<SyntheticSplit> {
    let allowed = |r: &str| cfg.relations.as_ref().is_none_or(|rs| rs.iter().any(|x| x == r));
    let plans: Vec<Plan<'_>> = kg
        .iter()
        .filter(|t| allowed(&t.relation))
        .map(|t| plan(kg, t))
        .filter(|p| p.related.len() >= 2 && p.random.len() >= 2)
        .collect();
    if plans.is_empty() {
        return Err(Error::InsufficientGraph(
            "no edge has two other-relation targets of its source and two unlinked targets of its relation"
                .into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = Vec::new();
    let mut train = Vec::with_capacity(cfg.train_size);
    for i in 0..cfg.train_size {
        if order.is_empty() {
            order = (0..plans.len()).collect();
            order.shuffle(&mut rng);
        }
        let p = &plans[order.pop().expect("refilled above")];
        train.push(build_instance(format!("train-{:05}", i + 1), p, &mut rng));
    }
    let mut dev = Vec::with_capacity(cfg.dev_size);
    for i in 0..cfg.dev_size {
        let p = plans.choose(&mut rng).expect("non-empty");
        dev.push(build_instance(format!("dev-{:05}", i + 1), p, &mut rng));
    }
    Ok(SyntheticSplit { train, dev })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pools_are_disjoint_and_cover_default_relations() {
        let mut seen = BTreeSet::new();
        for r in DEFAULT_RELATIONS {
            let pool = target_pool(r);
            assert_eq!(pool.len(), 10, "{r}");
            for t in pool {
                assert!(seen.insert(*t), "{t} repeated");
                assert!(!SOURCES.contains(t));
            }
            for tpl in templates(r) {
                assert_eq!(tpl.matches("{}").count(), 1);
            }
        }
    }

    #[test]
    fn graph_shape_follows_config() {
        let cfg = SyntheticGraphConfig::default();
        let kg = synthetic_graph(&cfg).unwrap();
        assert_eq!(
            kg.len(),
            cfg.sources * cfg.relations_per_source * cfg.targets_per_pair
        );
    }

    #[test]
    fn gold_is_unique_and_distractors_are_distinct() {
        let kg = synthetic_graph(&SyntheticGraphConfig::default()).unwrap();
        let split = generate_synthetic(&kg, &GenerationConfig::default()).unwrap();
        for inst in split.train.iter().chain(&split.dev) {
            let names: BTreeSet<&str> = inst.candidates.iter().map(|c| c.concept.as_str()).collect();
            assert_eq!(names.len(), NUM_CHOICES);
            let linked = inst
                .candidates
                .iter()
                .filter(|c| kg.contains(&inst.question_concept, &inst.relation, &c.concept))
                .count();
            assert_eq!(linked, 1, "{}", inst.id);
            assert!(inst.question.contains(&inst.question_concept));
        }
    }

    #[test]
    fn disconnected_graph_is_rejected() {
        let kg = TripleStore::new(
            [Triple::new("bird", "AtLocation", "cage")],
            &RelationSet::default(),
        )
        .unwrap();
        assert!(matches!(
            generate_synthetic(&kg, &GenerationConfig::default()),
            Err(Error::InsufficientGraph(_))
        ));
    }
}
