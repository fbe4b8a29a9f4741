//! The metric: answer similarity, per-direction scores, and the final value.
//!
//! A score has two directions. Questions generated from the source (the
//! linearized input in data mode, the reference in text mode) are answered on
//! the hypothesis, and questions generated from the hypothesis are answered on
//! the source. Each direction averages its per-question similarities; the final
//! value averages the two directions.

mod normalize;

use serde::{Deserialize, Serialize};

use crate::backends::{AnswerPrediction, Backend, QaPair};
use crate::data_model::{linearize, Modality, StructuredInput};
use crate::error::{BackendError, ScoringError};

pub use normalize::{contains_normalized, normalize_answer, token_f1};

/// Upper bound of the automatic question budget.
pub const MAX_AUTO_QUESTIONS: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    SourceToHyp,
    HypToSource,
}

impl std::fmt::Display for Direction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Direction::SourceToHyp => "source_to_hyp",
            Direction::HypToSource => "hyp_to_source",
        })
    }
}

/// Whether the hypothesis is compared to the structured input or to a reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalMode {
    Data,
    Text,
}

impl EvalMode {
    pub fn as_str(self) -> &'static str {
        match self {
            EvalMode::Data => "data",
            EvalMode::Text => "text",
        }
    }
}

impl std::fmt::Display for EvalMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for EvalMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "data" => Ok(EvalMode::Data),
            "text" => Ok(EvalMode::Text),
            other => Err(format!("unknown mode `{other}` (expected data or text)")),
        }
    }
}

/// How a predicted answer is compared with the gold answer.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SimilarityStrategy {
    TokenF1,
    /// Greedy token matching over contextual vectors from the named embedder.
    Embedding { embed_id: String },
}

impl SimilarityStrategy {
    pub fn embedding(embedder: &dyn Backend) -> Result<Self, ScoringError> {
        let embed_id = embedder.signature().embed_id.clone();
        if embed_id.trim().is_empty() {
            return Err(ScoringError::InvalidStrategy("embedding strategy needs an embed id".into()));
        }
        Ok(SimilarityStrategy::Embedding { embed_id })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionResult {
    pub pair: QaPair,
    pub prediction: AnswerPrediction,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionScore {
    pub direction: Direction,
    pub per_question: Vec<QuestionResult>,
    pub mean: f64,
    /// No questions were generated; `mean` is 0 by convention.
    pub degenerate: bool,
}

impl DirectionScore {
    fn from_results(direction: Direction, per_question: Vec<QuestionResult>) -> Self {
        if per_question.is_empty() {
            return DirectionScore {
                direction,
                per_question,
                mean: 0.0,
                degenerate: true,
            };
        }
        let mean = per_question.iter().map(|q| q.similarity).sum::<f64>() / per_question.len() as f64;
        DirectionScore {
            direction,
            per_question,
            mean,
            degenerate: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub source_to_hyp: DirectionScore,
    pub hyp_to_source: DirectionScore,
    #[serde(rename = "final")]
    pub final_score: f64,
    pub mode: EvalMode,
    pub signature: String,
}

/// Unweighted mean of the two direction means.
pub fn combine(source_to_hyp: f64, hyp_to_source: f64) -> f64 {
    (source_to_hyp + hyp_to_source) / 2.0
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// BERTScore-style F-measure: every token is greedily matched to its most
/// similar counterpart; precision averages over `candidate`, recall over
/// `reference`. Clamped to `[0, 1]`, no baseline rescaling.
pub fn greedy_match_f1(candidate: &[Vec<f64>], reference: &[Vec<f64>]) -> f64 {
    if candidate.is_empty() || reference.is_empty() {
        return 0.0;
    }
    let best = |from: &[Vec<f64>], to: &[Vec<f64>]| {
        from.iter()
            .map(|u| to.iter().map(|v| cosine(u, v)).fold(f64::NEG_INFINITY, f64::max))
            .sum::<f64>()
            / from.len() as f64
    };
    let precision = best(candidate, reference);
    let recall = best(reference, candidate);
    if precision + recall <= 0.0 {
        return 0.0;
    }
    (2.0 * precision * recall / (precision + recall)).clamp(0.0, 1.0)
}

/// Similarity of a prediction to the gold answer, in `[0, 1]`.
/// Unanswerable predictions always score 0.
pub fn answer_similarity(
    prediction: &AnswerPrediction,
    gold: &str,
    strategy: &SimilarityStrategy,
    embedder: Option<&dyn Backend>,
) -> Result<f64, ScoringError> {
    if prediction.unanswerable {
        return Ok(0.0);
    }
    match strategy {
        SimilarityStrategy::TokenF1 => Ok(token_f1(&prediction.text, gold)),
        SimilarityStrategy::Embedding { embed_id } => {
            let embedder = embedder.ok_or_else(|| BackendError::NotSupported(embed_id.clone()))?;
            let pred_norm = normalize_answer(&prediction.text);
            let gold_norm = normalize_answer(gold);
            let pred_tokens: Vec<String> = pred_norm.split_whitespace().map(String::from).collect();
            let gold_tokens: Vec<String> = gold_norm.split_whitespace().map(String::from).collect();
            if pred_tokens.is_empty() || gold_tokens.is_empty() {
                return Ok(token_f1(&prediction.text, gold));
            }
            let mut texts = pred_tokens.clone();
            texts.extend(gold_tokens.iter().cloned());
            let vectors = embedder.embed(&texts)?;
            if vectors.len() != texts.len() {
                return Err(BackendError::Protocol {
                    field: "vectors".into(),
                    reason: format!("expected {} vectors, got {}", texts.len(), vectors.len()),
                }
                .into());
            }
            let (pred_vecs, gold_vecs) = vectors.split_at(pred_tokens.len());
            Ok(greedy_match_f1(pred_vecs, gold_vecs))
        }
    }
}

/// Number of questions requested from QG per pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionBudget {
    /// Two per triple or row, capped at [`MAX_AUTO_QUESTIONS`].
    Auto,
    Fixed(usize),
}

impl QuestionBudget {
    pub fn resolve(self, input_size: usize) -> usize {
        match self {
            QuestionBudget::Auto => (2 * input_size).clamp(1, MAX_AUTO_QUESTIONS),
            QuestionBudget::Fixed(n) => n.max(1),
        }
    }
}

/// The backends used for each role.
#[derive(Clone, Copy)]
pub struct BackendSet<'a> {
    pub text_qg: &'a dyn Backend,
    pub text_qa: &'a dyn Backend,
    pub data_qg: &'a dyn Backend,
    pub data_qa: &'a dyn Backend,
    pub embedder: Option<&'a dyn Backend>,
}

impl<'a> BackendSet<'a> {
    /// One backend in every role.
    pub fn uniform(backend: &'a dyn Backend) -> Self {
        BackendSet {
            text_qg: backend,
            text_qa: backend,
            data_qg: backend,
            data_qa: backend,
            embedder: Some(backend),
        }
    }

    fn qg(&self, modality: Modality) -> &'a dyn Backend {
        match modality {
            Modality::Text => self.text_qg,
            Modality::Data => self.data_qg,
        }
    }

    fn qa(&self, modality: Modality) -> &'a dyn Backend {
        match modality {
            Modality::Text => self.text_qa,
            Modality::Data => self.data_qa,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ScoringConfig {
    pub mode: EvalMode,
    pub strategy: SimilarityStrategy,
    pub budget: QuestionBudget,
}

impl Default for ScoringConfig {
    fn default() -> Self {
        ScoringConfig {
            mode: EvalMode::Data,
            strategy: SimilarityStrategy::TokenF1,
            budget: QuestionBudget::Auto,
        }
    }
}

/// A text together with the modality the backends should treat it as.
#[derive(Debug, Clone, Copy)]
pub struct Passage<'a> {
    pub text: &'a str,
    pub modality: Modality,
}

/// One QG -> QA pass.
#[allow(clippy::too_many_arguments)]
pub fn score_direction(
    direction: Direction,
    question_source: Passage<'_>,
    answer_context: Passage<'_>,
    qg: &dyn Backend,
    qa: &dyn Backend,
    max_questions: usize,
    strategy: &SimilarityStrategy,
    embedder: Option<&dyn Backend>,
) -> Result<DirectionScore, ScoringError> {
    let tag = |source: BackendError| ScoringError::Backend { direction, source };

    if question_source.text.trim().is_empty() {
        return Ok(DirectionScore::from_results(direction, Vec::new()));
    }
    let pairs = qg
        .generate_qa_pairs(question_source.text, question_source.modality, max_questions)
        .map_err(tag)?;

    let mut results = Vec::with_capacity(pairs.len());
    for pair in pairs {
        let prediction = if answer_context.text.trim().is_empty() {
            AnswerPrediction::unanswerable(1.0)
        } else {
            qa.answer(&pair.question, answer_context.text, answer_context.modality)
                .map_err(tag)?
        };
        let similarity = match answer_similarity(&prediction, &pair.answer, strategy, embedder) {
            Ok(s) => s,
            Err(ScoringError::Similarity(e)) => return Err(tag(e)),
            Err(e) => return Err(e),
        };
        results.push(QuestionResult {
            pair,
            prediction,
            similarity,
        });
    }
    Ok(DirectionScore::from_results(direction, results))
}

/// Scores one hypothesis against its structured input (data mode) or its
/// reference (text mode).
pub fn qa_score(
    input: &StructuredInput,
    hypothesis: &str,
    reference: Option<&str>,
    backends: &BackendSet<'_>,
    config: &ScoringConfig,
    signature: &str,
) -> Result<Score, ScoringError> {
    let max_questions = config.budget.resolve(input.size());
    let hyp = Passage {
        text: hypothesis,
        modality: Modality::Text,
    };
    let linearized;
    let source = match config.mode {
        EvalMode::Data => {
            linearized = linearize(input).text;
            Passage {
                text: &linearized,
                modality: Modality::Data,
            }
        }
        EvalMode::Text => Passage {
            text: reference
                .filter(|r| !r.trim().is_empty())
                .ok_or(ScoringError::MissingReference)?,
            modality: Modality::Text,
        },
    };

    let source_to_hyp = score_direction(
        Direction::SourceToHyp,
        source,
        hyp,
        backends.qg(source.modality),
        backends.qa(hyp.modality),
        max_questions,
        &config.strategy,
        backends.embedder,
    )?;
    let hyp_to_source = score_direction(
        Direction::HypToSource,
        hyp,
        source,
        backends.qg(hyp.modality),
        backends.qa(source.modality),
        max_questions,
        &config.strategy,
        backends.embedder,
    )?;
    Ok(Score {
        final_score: combine(source_to_hyp.mean, hyp_to_source.mean),
        source_to_hyp,
        hyp_to_source,
        mode: config.mode,
        signature: signature.to_string(),
    })
}
