//! The QG/QA/embedding capability the engine is written against.
//!
//! Two implementations ship with the crate: [`OracleBackend`], a pure
//! template-driven test double, and [`RemoteBackend`], a client for the
//! HTTP model service. [`RecordingBackend`] wraps either one and counts calls.

mod oracle;
mod remote;

use std::collections::HashSet;
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use crate::data_model::Modality;
use crate::error::BackendError;

pub use oracle::{OracleBackend, ORACLE_ID};
pub use remote::RemoteBackend;
pub(crate) use remote::canonical_body;

/// Wire protocol version spoken by [`RemoteBackend`].
pub const PROTOCOL_VERSION: &str = "1";

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct QaPair {
    pub question: String,
    pub answer: String,
}

impl QaPair {
    pub fn new(question: impl Into<String>, answer: impl Into<String>) -> Result<Self, BackendError> {
        let pair = QaPair {
            question: question.into(),
            answer: answer.into(),
        };
        pair.validate()?;
        Ok(pair)
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.question.trim().is_empty() || !self.question.trim_end().ends_with('?') {
            return Err(BackendError::InvalidInput(format!(
                "question must be non-empty and end with `?`: {:?}",
                self.question
            )));
        }
        if self.answer.trim().is_empty() {
            return Err(BackendError::InvalidInput(format!(
                "empty answer for question {:?}",
                self.question
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerPrediction {
    pub text: String,
    pub unanswerable: bool,
    pub confidence: f64,
}

impl AnswerPrediction {
    pub fn answered(text: impl Into<String>, confidence: f64) -> Self {
        AnswerPrediction {
            text: text.into(),
            unanswerable: false,
            confidence: confidence.clamp(0.0, 1.0),
        }
    }

    pub fn unanswerable(confidence: f64) -> Self {
        AnswerPrediction {
            text: String::new(),
            unanswerable: true,
            confidence: confidence.clamp(0.0, 1.0),
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.unanswerable && !self.text.is_empty() {
            return Err(BackendError::Protocol {
                field: "answer".into(),
                reason: "unanswerable prediction carries text".into(),
            });
        }
        if !self.unanswerable && self.text.trim().is_empty() {
            return Err(BackendError::Protocol {
                field: "answer".into(),
                reason: "answerable prediction has empty text".into(),
            });
        }
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(BackendError::Protocol {
                field: "confidence".into(),
                reason: format!("{} outside [0, 1]", self.confidence),
            });
        }
        Ok(())
    }
}

/// Model identities behind a backend.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BackendSignature {
    pub text_qg_id: String,
    pub text_qa_id: String,
    pub data_qg_id: String,
    pub data_qa_id: String,
    pub embed_id: String,
    pub protocol_version: String,
}

impl BackendSignature {
    /// Same id for every role.
    pub fn uniform(id: &str) -> Self {
        BackendSignature {
            text_qg_id: id.into(),
            text_qa_id: id.into(),
            data_qg_id: id.into(),
            data_qa_id: id.into(),
            embed_id: id.into(),
            protocol_version: PROTOCOL_VERSION.into(),
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        for (field, value) in [
            ("text_qg_id", &self.text_qg_id),
            ("text_qa_id", &self.text_qa_id),
            ("data_qg_id", &self.data_qg_id),
            ("data_qa_id", &self.data_qa_id),
            ("embed_id", &self.embed_id),
            ("protocol_version", &self.protocol_version),
        ] {
            if value.trim().is_empty() {
                return Err(BackendError::Protocol {
                    field: field.into(),
                    reason: "empty id".into(),
                });
            }
        }
        Ok(())
    }

    pub fn qg_id(&self, modality: Modality) -> &str {
        match modality {
            Modality::Text => &self.text_qg_id,
            Modality::Data => &self.data_qg_id,
        }
    }

    pub fn qa_id(&self, modality: Modality) -> &str {
        match modality {
            Modality::Text => &self.text_qa_id,
            Modality::Data => &self.data_qa_id,
        }
    }

    /// Deterministic one-line rendering of every id.
    pub fn render(&self) -> String {
        format!(
            "tqg:{}|tqa:{}|dqg:{}|dqa:{}|emb:{}|proto:{}",
            self.text_qg_id,
            self.text_qa_id,
            self.data_qg_id,
            self.data_qa_id,
            self.embed_id,
            self.protocol_version
        )
    }
}

/// A question generation / answering / embedding provider.
///
/// Implementations must be deterministic: equal inputs under an equal
/// [`Backend::cache_namespace`] yield equal outputs.
pub trait Backend: Send + Sync {
    fn signature(&self) -> &BackendSignature;

    /// Identity used to partition memoized results. Defaults to the rendered
    /// signature; backends whose behavior depends on more than their model
    /// ids must extend it.
    fn cache_namespace(&self) -> String {
        self.signature().render()
    }

    fn generate_qa_pairs(
        &self,
        context: &str,
        modality: Modality,
        max_questions: usize,
    ) -> Result<Vec<QaPair>, BackendError>;

    fn answer(
        &self,
        question: &str,
        context: &str,
        modality: Modality,
    ) -> Result<AnswerPrediction, BackendError>;

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, BackendError> {
        let _ = texts;
        Err(BackendError::NotSupported(self.signature().embed_id.clone()))
    }
}

impl<B: Backend + ?Sized> Backend for &B {
    fn signature(&self) -> &BackendSignature {
        (**self).signature()
    }
    fn cache_namespace(&self) -> String {
        (**self).cache_namespace()
    }
    fn generate_qa_pairs(&self, c: &str, m: Modality, k: usize) -> Result<Vec<QaPair>, BackendError> {
        (**self).generate_qa_pairs(c, m, k)
    }
    fn answer(&self, q: &str, c: &str, m: Modality) -> Result<AnswerPrediction, BackendError> {
        (**self).answer(q, c, m)
    }
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, BackendError> {
        (**self).embed(texts)
    }
}

impl<B: Backend + ?Sized> Backend for Box<B> {
    fn signature(&self) -> &BackendSignature {
        (**self).signature()
    }
    fn cache_namespace(&self) -> String {
        (**self).cache_namespace()
    }
    fn generate_qa_pairs(&self, c: &str, m: Modality, k: usize) -> Result<Vec<QaPair>, BackendError> {
        (**self).generate_qa_pairs(c, m, k)
    }
    fn answer(&self, q: &str, c: &str, m: Modality) -> Result<AnswerPrediction, BackendError> {
        (**self).answer(q, c, m)
    }
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, BackendError> {
        (**self).embed(texts)
    }
}

/// Drops repeated `(question, answer)` pairs, keeping first occurrences.
pub(crate) fn dedup_pairs(pairs: Vec<QaPair>) -> Vec<QaPair> {
    let mut seen = HashSet::new();
    pairs
        .into_iter()
        .filter(|p| seen.insert((p.question.clone(), p.answer.clone())))
        .collect()
}

/// Call counters kept by [`RecordingBackend`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CallCounts {
    pub qg: usize,
    pub qa: usize,
    pub embed: usize,
}

impl CallCounts {
    pub fn total(&self) -> usize {
        self.qg + self.qa + self.embed
    }
}

/// Forwards every call to an inner backend and counts it.
pub struct RecordingBackend<B> {
    inner: B,
    qg: AtomicUsize,
    qa: AtomicUsize,
    embed: AtomicUsize,
}

impl<B: Backend> RecordingBackend<B> {
    pub fn new(inner: B) -> Self {
        RecordingBackend {
            inner,
            qg: AtomicUsize::new(0),
            qa: AtomicUsize::new(0),
            embed: AtomicUsize::new(0),
        }
    }

    pub fn counts(&self) -> CallCounts {
        CallCounts {
            qg: self.qg.load(Ordering::SeqCst),
            qa: self.qa.load(Ordering::SeqCst),
            embed: self.embed.load(Ordering::SeqCst),
        }
    }

    pub fn inner(&self) -> &B {
        &self.inner
    }
}

impl<B: Backend> Backend for RecordingBackend<B> {
    fn signature(&self) -> &BackendSignature {
        self.inner.signature()
    }

    fn cache_namespace(&self) -> String {
        self.inner.cache_namespace()
    }

    fn generate_qa_pairs(
        &self,
        context: &str,
        modality: Modality,
        max_questions: usize,
    ) -> Result<Vec<QaPair>, BackendError> {
        self.qg.fetch_add(1, Ordering::SeqCst);
        self.inner.generate_qa_pairs(context, modality, max_questions)
    }

    fn answer(
        &self,
        question: &str,
        context: &str,
        modality: Modality,
    ) -> Result<AnswerPrediction, BackendError> {
        self.qa.fetch_add(1, Ordering::SeqCst);
        self.inner.answer(question, context, modality)
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, BackendError> {
        self.embed.fetch_add(1, Ordering::SeqCst);
        self.inner.embed(texts)
    }
}
