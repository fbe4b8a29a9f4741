//! Deterministic template oracle.
//!
//! Data QG emits two questions per triple, `What is the <p> of <s>?` (answer
//! `o`) and `Whose <p> is <o>?` (answer `s`), and one per table row,
//! `What is the <k>?` (answer `v`). Text QG recovers the same pairs from
//! template sentences (see [`template_verbalize`](crate::data_model::template_verbalize))
//! and from dataset facts whose entities both occur in the text. QA answers
//! by lookup in the parsed context, falling back to dataset facts whose
//! entities occur in a free-text context. Matching is case-insensitive.

use std::collections::HashMap;
use std::collections::HashSet;

use sha2::{Digest, Sha256};

use super::{dedup_pairs, AnswerPrediction, Backend, BackendSignature, QaPair};
use crate::data_model::{parse_linearization, LinearEntry, Modality, StructuredContent};
use crate::dataset_io::DtgExample;
use crate::error::BackendError;
use crate::scoring::{contains_normalized, normalize_answer};

/// Model id reported for every role of the oracle.
pub const ORACLE_ID: &str = "oracle-v1";

#[derive(Debug, Clone, PartialEq, Eq)]
enum Fact {
    Triple {
        subject: String,
        predicate: String,
        object: String,
    },
    Row {
        key: String,
        value: String,
    },
}

impl Fact {
    fn from_entry(entry: LinearEntry) -> Fact {
        match entry {
            LinearEntry::Triple {
                subject,
                predicate,
                object,
            } => Fact::Triple {
                subject,
                predicate,
                object,
            },
            LinearEntry::Row { key, value } => Fact::Row { key, value },
        }
    }

    fn pairs(&self) -> Vec<QaPair> {
        match self {
            Fact::Triple {
                subject,
                predicate,
                object,
            } => vec![
                QaPair {
                    question: what_question(&format!("{predicate} of {subject}")),
                    answer: object.clone(),
                },
                QaPair {
                    question: whose_question(predicate, object),
                    answer: subject.clone(),
                },
            ],
            Fact::Row { key, value } => vec![QaPair {
                question: what_question(key),
                answer: value.clone(),
            }],
        }
    }

    fn sentence(&self) -> String {
        match self {
            Fact::Triple {
                subject,
                predicate,
                object,
            } => format!("the {predicate} of {subject} is {object}"),
            Fact::Row { key, value } => format!("the {key} is {value}"),
        }
    }

    /// Normalized, space-padded entities that must all occur in a text for
    /// the fact to be considered mentioned there.
    fn grounding_keys(&self) -> Vec<String> {
        let entities = match self {
            Fact::Triple { subject, object, .. } => vec![subject, object],
            Fact::Row { value, .. } => vec![value],
        };
        entities
            .into_iter()
            .map(|e| normalize_answer(e))
            .filter(|e| !e.is_empty())
            .map(|e| format!(" {e} "))
            .collect()
    }
}

fn what_question(head: &str) -> String {
    format!("What is the {head}?")
}

fn whose_question(predicate: &str, object: &str) -> String {
    format!("Whose {predicate} is {object}?")
}

/// Lowercase with whitespace runs collapsed.
fn fold(s: &str) -> String {
    s.to_lowercase().split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Splits folded text into template sentences (terminated by ` .`).
fn sentences(folded: &str) -> Vec<&str> {
    let trimmed = folded.strip_suffix(" .").unwrap_or(folded);
    trimmed
        .split(" . ")
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .collect()
}

/// Syntactic parse of one folded sentence of the form `the <p> of <s> is <o>`
/// or `the <k> is <v>`. The predicate ends at the first ` of `, the object
/// starts after the last ` is `.
fn parse_sentence(sentence: &str) -> Option<Fact> {
    let body = sentence.strip_prefix("the ")?;
    let (head, tail) = body.rsplit_once(" is ")?;
    let tail = tail.trim();
    if head.is_empty() || tail.is_empty() {
        return None;
    }
    match head.split_once(" of ") {
        Some((p, s)) if !p.is_empty() && !s.is_empty() => Some(Fact::Triple {
            subject: s.to_string(),
            predicate: p.to_string(),
            object: tail.to_string(),
        }),
        _ => Some(Fact::Row {
            key: head.to_string(),
            value: tail.to_string(),
        }),
    }
}

/// Template-driven QG/QA test double.
#[derive(Debug, Clone)]
pub struct OracleBackend {
    signature: BackendSignature,
    facts: Vec<Fact>,
    /// Per fact, see [`Fact::grounding_keys`]; empty when ungroundable.
    grounding: Vec<Vec<String>>,
    /// Folded verbalization -> index into `facts`.
    by_sentence: HashMap<String, usize>,
    /// Folded question -> (fact index, answer).
    by_question: HashMap<String, Vec<(usize, String)>>,
    knowledge_digest: String,
}

impl OracleBackend {
    /// Builds an oracle whose free-text behavior is grounded in `dataset`.
    pub fn new(dataset: &[DtgExample]) -> Self {
        let mut facts = Vec::new();
        let mut seen = HashSet::new();
        for example in dataset {
            match example.input.content() {
                StructuredContent::TripleSet(triples) => {
                    for t in triples {
                        let n = t.normalized().expect("validated triple");
                        let fact = Fact::Triple {
                            subject: n.subject().to_string(),
                            predicate: n.predicate().to_string(),
                            object: n.object().to_string(),
                        };
                        if seen.insert(fact.sentence()) {
                            facts.push(fact);
                        }
                    }
                }
                StructuredContent::Table(rows) => {
                    for r in rows {
                        let fact = Fact::Row {
                            key: r.key().to_string(),
                            value: r.value().to_string(),
                        };
                        if seen.insert(fact.sentence()) {
                            facts.push(fact);
                        }
                    }
                }
            }
        }

        let mut hasher = Sha256::new();
        let mut by_sentence = HashMap::new();
        let mut by_question: HashMap<String, Vec<(usize, String)>> = HashMap::new();
        for (idx, fact) in facts.iter().enumerate() {
            let sentence = fact.sentence();
            hasher.update(sentence.as_bytes());
            hasher.update(b"\n");
            by_sentence.entry(fold(&sentence)).or_insert(idx);
            for pair in fact.pairs() {
                by_question
                    .entry(fold(&pair.question))
                    .or_default()
                    .push((idx, pair.answer));
            }
        }

        let grounding = facts
            .iter()
            .map(|f| {
                let keys = f.grounding_keys();
                let expected = match f {
                    Fact::Triple { .. } => 2,
                    Fact::Row { .. } => 1,
                };
                if keys.len() == expected {
                    keys
                } else {
                    Vec::new()
                }
            })
            .collect();

        OracleBackend {
            signature: BackendSignature {
                embed_id: "none".into(),
                ..BackendSignature::uniform(ORACLE_ID)
            },
            facts,
            grounding,
            by_sentence,
            by_question,
            knowledge_digest: hex::encode(&hasher.finalize()[..8]),
        }
    }

    fn grounded(&self, idx: usize, padded_context: &str) -> bool {
        let keys = &self.grounding[idx];
        !keys.is_empty() && keys.iter().all(|k| padded_context.contains(k.as_str()))
    }

    fn data_pairs(&self, context: &str) -> Result<Vec<QaPair>, BackendError> {
        let entries = parse_linearization(context).ok_or_else(|| {
            BackendError::InvalidContext(format!("not a linearized input: {context:?}"))
        })?;
        Ok(entries
            .into_iter()
            .flat_map(|e| Fact::from_entry(e).pairs())
            .collect())
    }

    fn text_pairs(&self, context: &str) -> Vec<QaPair> {
        let folded = fold(context);
        let mut pairs = Vec::new();
        for sentence in sentences(&folded) {
            if let Some(&idx) = self.by_sentence.get(sentence) {
                pairs.extend(self.facts[idx].pairs());
            } else if let Some(fact) = parse_sentence(sentence) {
                pairs.extend(fact.pairs());
            }
        }
        let padded = format!(" {} ", normalize_answer(context));
        for (idx, fact) in self.facts.iter().enumerate() {
            if self.grounded(idx, &padded) {
                pairs.extend(fact.pairs());
            }
        }
        // Case-insensitive dedup; the first spelling wins.
        let mut seen = HashSet::new();
        pairs
            .into_iter()
            .filter(|p| seen.insert((fold(&p.question), fold(&p.answer))))
            .collect()
    }

    fn answer_data(&self, question: &str, context: &str) -> Result<Option<String>, BackendError> {
        let entries = parse_linearization(context).ok_or_else(|| {
            BackendError::InvalidContext(format!("not a linearized input: {context:?}"))
        })?;
        let q = fold(question);
        Ok(entries
            .into_iter()
            .flat_map(|e| Fact::from_entry(e).pairs())
            .find(|p| fold(&p.question) == q)
            .map(|p| p.answer))
    }

    fn answer_text(&self, question: &str, context: &str) -> Option<String> {
        let q = fold(question);
        let folded = fold(context);
        let sents = sentences(&folded);

        if let Some(head) = q.strip_prefix("what is the ").and_then(|r| r.strip_suffix('?')) {
            let prefix = format!("the {} is ", head.trim());
            for s in &sents {
                if let Some(rest) = s.strip_prefix(&prefix) {
                    if !rest.trim().is_empty() {
                        return Some(rest.trim().to_string());
                    }
                }
            }
        }

        if let Some(body) = q.strip_prefix("whose ").and_then(|r| r.strip_suffix('?')) {
            let body = body.trim();
            for (split, _) in body.match_indices(" is ") {
                let predicate = &body[..split];
                let object = &body[split + 4..];
                let prefix = format!("the {predicate} of ");
                let suffix = format!(" is {object}");
                for s in &sents {
                    if let Some(rest) = s.strip_prefix(&prefix).and_then(|r| r.strip_suffix(&suffix)) {
                        if !rest.trim().is_empty() {
                            return Some(rest.trim().to_string());
                        }
                    }
                }
            }
        }

        let padded = format!(" {} ", normalize_answer(context));
        self.by_question.get(&q).and_then(|candidates| {
            candidates
                .iter()
                .find(|(idx, _)| self.grounded(*idx, &padded))
                .map(|(_, answer)| answer.clone())
        })
    }
}

impl Backend for OracleBackend {
    fn signature(&self) -> &BackendSignature {
        &self.signature
    }

    fn cache_namespace(&self) -> String {
        format!("{}|kb:{}", self.signature.render(), self.knowledge_digest)
    }

    fn generate_qa_pairs(
        &self,
        context: &str,
        modality: Modality,
        max_questions: usize,
    ) -> Result<Vec<QaPair>, BackendError> {
        if max_questions == 0 {
            return Err(BackendError::InvalidInput("max_questions must be positive".into()));
        }
        if context.trim().is_empty() {
            return Err(BackendError::InvalidContext("empty context".into()));
        }
        let pairs = match modality {
            Modality::Data => self.data_pairs(context)?,
            Modality::Text => self.text_pairs(context),
        };
        let mut pairs = dedup_pairs(pairs);
        pairs.truncate(max_questions);
        Ok(pairs)
    }

    fn answer(
        &self,
        question: &str,
        context: &str,
        modality: Modality,
    ) -> Result<AnswerPrediction, BackendError> {
        if question.trim().is_empty() {
            return Err(BackendError::InvalidInput("empty question".into()));
        }
        if context.trim().is_empty() {
            return Ok(AnswerPrediction::unanswerable(1.0));
        }
        let found = match modality {
            Modality::Data => self.answer_data(question, context)?,
            Modality::Text => self.answer_text(question, context),
        };
        Ok(match found {
            Some(answer) if contains_normalized(context, &answer) => {
                AnswerPrediction::answered(answer, 1.0)
            }
            _ => AnswerPrediction::unanswerable(1.0),
        })
    }
}
