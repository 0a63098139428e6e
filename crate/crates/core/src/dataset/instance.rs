use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::triple::TripleStore;
use crate::error::{Error, Result};

pub const NUM_CHOICES: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Candidate {
    pub text: String,
    pub concept: String,
}

/// One multiple-choice question. `gold_index` is 1-based.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QAInstance {
    pub id: String,
    pub question: String,
    pub question_concept: String,
    pub relation: String,
    pub candidates: Vec<Candidate>,
    pub gold_index: usize,
}

impl QAInstance {
    pub fn validate(&self) -> Result<()> {
        if self.candidates.len() != NUM_CHOICES {
            return Err(Error::Validation(format!(
                "instance {}: {} candidates, expected {NUM_CHOICES}",
                self.id,
                self.candidates.len()
            )));
        }
        if !(1..=NUM_CHOICES).contains(&self.gold_index) {
            return Err(Error::Validation(format!(
                "instance {}: gold_index {} outside [1, {NUM_CHOICES}]",
                self.id, self.gold_index
            )));
        }
        Ok(())
    }

    pub fn gold(&self) -> &Candidate {
        &self.candidates[self.gold_index - 1]
    }

    /// Whether the gold answer is a graph target of `(question_concept, relation)`.
    pub fn gold_in_graph(&self, kg: &TripleStore) -> bool {
        kg.contains(&self.question_concept, &self.relation, &self.gold().concept)
    }
}

pub fn write_jsonl(instances: &[QAInstance], mut out: impl Write) -> std::io::Result<()> {
    for inst in instances {
        serde_json::to_writer(&mut out, inst)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn to_jsonl_string(instances: &[QAInstance]) -> String {
    let mut buf = Vec::new();
    write_jsonl(instances, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("serde_json emits UTF-8")
}

pub fn read_jsonl(input: impl BufRead) -> Result<Vec<QAInstance>> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<jsonl>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let inst: QAInstance =
            serde_json::from_str(&line).map_err(|source| Error::Json { line: i + 1, source })?;
        inst.validate()?;
        out.push(inst);
    }
    Ok(out)
}

pub fn save_jsonl(instances: &[QAInstance], path: &Path) -> Result<()> {
    std::fs::write(path, to_jsonl_string(instances)).map_err(|e| Error::io(path, e))
}

pub fn load_jsonl(path: &Path) -> Result<Vec<QAInstance>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_jsonl(BufReader::new(f))
}

#[derive(Deserialize)]
struct CsqaRecord {
    id: String,
    #[serde(rename = "answerKey")]
    answer_key: Option<String>,
    question: CsqaQuestion,
    relation: Option<String>,
}

#[derive(Deserialize)]
struct CsqaQuestion {
    question_concept: String,
    choices: Vec<CsqaChoice>,
    stem: String,
}

#[derive(Deserialize)]
struct CsqaChoice {
    label: String,
    text: String,
}

/// Relation assumed for public CommonsenseQA records, which do not carry one.
pub const CSQA_DEFAULT_RELATION: &str = "RelatedTo";

/// Maps public CommonsenseQA JSONL records into [`QAInstance`]s.
///
/// Each choice's text doubles as its answer concept. Records without an
/// answer key or with a choice count other than five are skipped and
/// reported by id.
pub fn read_commonsenseqa(input: impl BufRead) -> Result<(Vec<QAInstance>, Vec<String>)> {
    let mut out = Vec::new();
    let mut skipped = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<commonsenseqa>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: CsqaRecord =
            serde_json::from_str(&line).map_err(|source| Error::Json { line: i + 1, source })?;
        let gold = rec.answer_key.as_deref().and_then(|key| {
            rec.question
                .choices
                .iter()
                .position(|c| c.label == key)
                .map(|p| p + 1)
        });
        let (Some(gold_index), NUM_CHOICES) = (gold, rec.question.choices.len()) else {
            skipped.push(rec.id);
            continue;
        };
        out.push(QAInstance {
            id: rec.id,
            question: rec.question.stem,
            question_concept: rec.question.question_concept,
            relation: rec
                .relation
                .unwrap_or_else(|| CSQA_DEFAULT_RELATION.to_owned()),
            candidates: rec
                .question
                .choices
                .into_iter()
                .map(|c| Candidate {
                    concept: c.text.clone(),
                    text: c.text,
                })
                .collect(),
            gold_index,
        });
    }
    Ok((out, skipped))
}
