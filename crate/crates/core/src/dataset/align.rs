use serde::{Deserialize, Serialize};

use super::instance::{QAInstance, NUM_CHOICES};
use super::vocab::{Vocabulary, CLS, SEP};
use crate::error::{Error, Result};

/// Inclusive token range inside a sentence `[CLS] q₁…q_|q| [SEP] a₁…a_k [SEP]`.
///
/// Question tokens sit at sentence positions `1..=|q|`, so question-side
/// ranges double as 1-based question word indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpanAlignment {
    pub question_len: usize,
    pub concept_begin: usize,
    pub concept_end: usize,
    pub answer_begin: usize,
    pub answer_end: usize,
}

impl SpanAlignment {
    pub fn concept_len(&self) -> usize {
        self.concept_end - self.concept_begin + 1
    }

    pub fn answer_len(&self) -> usize {
        self.answer_end - self.answer_begin + 1
    }

    pub fn concept_range(&self) -> std::ops::RangeInclusive<usize> {
        self.concept_begin..=self.concept_end
    }

    pub fn answer_range(&self) -> std::ops::RangeInclusive<usize> {
        self.answer_begin..=self.answer_end
    }

    /// Position of the `[SEP]` between question and answer.
    pub fn first_sep(&self) -> usize {
        self.question_len + 1
    }

    pub fn check(&self) -> Result<()> {
        let ok = 1 <= self.concept_begin
            && self.concept_begin <= self.concept_end
            && self.concept_end <= self.question_len
            && self.answer_begin > self.first_sep()
            && self.answer_begin <= self.answer_end;
        if ok {
            Ok(())
        } else {
            Err(Error::Validation(format!("inconsistent span {self:?}")))
        }
    }
}

/// An instance turned into five token sequences with their spans.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizedInstance {
    pub id: String,
    pub relation: String,
    pub sentences: Vec<Vec<u32>>,
    pub spans: Vec<SpanAlignment>,
    /// 1-based.
    pub gold_index: usize,
}

/// First start index at which `needle` occurs in `haystack`.
pub fn find_subsequence(haystack: &[u32], needle: &[u32]) -> Option<usize> {
    if needle.is_empty() || needle.len() > haystack.len() {
        return None;
    }
    haystack.windows(needle.len()).position(|w| w == needle)
}

fn misaligned(inst: &QAInstance, reason: String) -> Error {
    Error::Alignment {
        id: inst.id.clone(),
        reason,
    }
}

/// Tokenizes the five question+answer sentences and locates both concept spans.
///
/// Concepts are matched as subword-id sequences; the first occurrence wins.
pub fn tokenize_and_align(inst: &QAInstance, vocab: &Vocabulary) -> Result<TokenizedInstance> {
    inst.validate()?;
    let question = vocab.tokenize(&inst.question);
    let concept = vocab.tokenize(&inst.question_concept);
    let start = find_subsequence(&question, &concept).ok_or_else(|| {
        misaligned(
            inst,
            format!(
                "question concept {:?} not found in question",
                inst.question_concept
            ),
        )
    })?;
    let q = question.len();
    let mut sentences = Vec::with_capacity(NUM_CHOICES);
    let mut spans = Vec::with_capacity(NUM_CHOICES);
    for (k, cand) in inst.candidates.iter().enumerate() {
        let answer = vocab.tokenize(&cand.text);
        let answer_concept = vocab.tokenize(&cand.concept);
        let a_start = find_subsequence(&answer, &answer_concept).ok_or_else(|| {
            misaligned(
                inst,
                format!(
                    "answer concept {:?} not found in candidate {}",
                    cand.concept,
                    k + 1
                ),
            )
        })?;
        let mut s = Vec::with_capacity(q + answer.len() + 3);
        s.push(CLS);
        s.extend_from_slice(&question);
        s.push(SEP);
        s.extend_from_slice(&answer);
        s.push(SEP);
        sentences.push(s);
        let answer_offset = q + 2;
        spans.push(SpanAlignment {
            question_len: q,
            concept_begin: start + 1,
            concept_end: start + concept.len(),
            answer_begin: answer_offset + a_start,
            answer_end: answer_offset + a_start + answer_concept.len() - 1,
        });
    }
    Ok(TokenizedInstance {
        id: inst.id.clone(),
        relation: inst.relation.clone(),
        sentences,
        spans,
        gold_index: inst.gold_index,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DroppedInstance {
    pub id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DropReport {
    /// Granularity at which concept spans were matched.
    pub matching: String,
    pub kept: usize,
    pub dropped: Vec<DroppedInstance>,
}

/// Keeps exactly the instances whose five sentences all align.
pub fn filter_instances(data: &[QAInstance], vocab: &Vocabulary) -> (Vec<QAInstance>, DropReport) {
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for inst in data {
        match tokenize_and_align(inst, vocab) {
            Ok(_) => kept.push(inst.clone()),
            Err(e) => dropped.push(DroppedInstance {
                id: inst.id.clone(),
                reason: match e {
                    Error::Alignment { reason, .. } => format!("AlignmentFailure: {reason}"),
                    other => format!("Invalid: {other}"),
                },
            }),
        }
    }
    let report = DropReport {
        matching: "subword".into(),
        kept: kept.len(),
        dropped,
    };
    (kept, report)
}

#[cfg(test)]
mod tests {
    use super::super::instance::Candidate;
    use super::super::vocab::VocabOptions;
    use super::*;

    fn inst(question: &str, concept: &str, answers: [&str; 5]) -> QAInstance {
        QAInstance {
            id: "t".into(),
            question: question.into(),
            question_concept: concept.into(),
            relation: "AtLocation".into(),
            candidates: answers
                .iter()
                .map(|a| Candidate {
                    text: a.to_string(),
                    concept: a.to_string(),
                })
                .collect(),
            gold_index: 2,
        }
    }

    fn vocab_for(insts: &[QAInstance]) -> Vocabulary {
        let texts: Vec<&str> = insts
            .iter()
            .flat_map(|i| std::iter::once(i.question.as_str()).chain(i.candidates.iter().map(|c| c.text.as_str())))
            .collect();
        Vocabulary::build(texts.iter().copied().chain(texts.iter().copied()), &VocabOptions::default())
    }

    #[test]
    fn single_token_concept_at_position_three() {
        let i = inst("where is bird kept ?", "bird", ["cage", "nest", "sky", "tree", "roof"]);
        let v = vocab_for(&[i.clone()]);
        let t = tokenize_and_align(&i, &v).unwrap();
        assert_eq!((t.spans[0].concept_begin, t.spans[0].concept_end), (3, 3));
        assert_eq!(t.spans[0].question_len, 5);
        assert_eq!(t.spans[0].answer_range(), 7..=7);
        assert_eq!(t.sentences[0][0], CLS);
        assert_eq!(t.sentences[0][6], SEP);
        assert_eq!(*t.sentences[0].last().unwrap(), SEP);
    }

    #[test]
    fn multi_subword_concept_spans_every_piece() {
        let i = inst(
            "what is near the countryside today ?",
            "countryside",
            ["farm", "city", "barn", "road", "field"],
        );
        let v = vocab_for(&[i.clone()]);
        let pieces = v.tokenize_word("countryside").len();
        assert!(pieces > 1);
        let t = tokenize_and_align(&i, &v).unwrap();
        let s = t.spans[0];
        assert_eq!(s.concept_begin, 5);
        assert_eq!(s.concept_len(), pieces);
    }

    #[test]
    fn absent_concept_is_an_alignment_failure() {
        let i = inst("where would you find a sparrow ?", "bird", ["cage", "nest", "sky", "tree", "roof"]);
        let v = vocab_for(&[i.clone()]);
        assert!(matches!(tokenize_and_align(&i, &v), Err(Error::Alignment { .. })));
    }

    #[test]
    fn first_occurrence_wins() {
        let i = inst("a bird or a bird ?", "bird", ["cage", "nest", "sky", "tree", "roof"]);
        let v = vocab_for(&[i.clone()]);
        let t = tokenize_and_align(&i, &v).unwrap();
        assert_eq!(t.spans[0].concept_begin, 2);
    }

    #[test]
    fn filter_keeps_alignable_and_reports_the_rest() {
        let good = inst("where is bird kept ?", "bird", ["cage", "nest", "sky", "tree", "roof"]);
        let mut bad = inst("where is a sparrow kept ?", "bird", ["cage", "nest", "sky", "tree", "roof"]);
        bad.id = "para".into();
        let v = vocab_for(&[good.clone(), bad.clone()]);
        let (kept, report) = filter_instances(&[good.clone()], &v);
        assert_eq!(kept, vec![good.clone()]);
        assert!(report.dropped.is_empty());
        let (kept, report) = filter_instances(&[good.clone(), bad], &v);
        assert_eq!(kept, vec![good]);
        assert_eq!(report.dropped.len(), 1);
        assert_eq!(report.dropped[0].id, "para");
        assert!(report.dropped[0].reason.starts_with("AlignmentFailure"));
        assert_eq!(report.matching, "subword");
    }
}
