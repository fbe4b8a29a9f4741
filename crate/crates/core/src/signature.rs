//! Run configuration and the reproducibility signature.
//!
//! The signature is a short string identifying everything that affects a
//! score: mode, model ids, similarity, normalization, question budget, corpus
//! filter and engine version. Paths and worker counts are excluded.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::backends::{Backend, BackendSignature};
use crate::corpus_builder::FilterConfig;
use crate::data_model::Modality;
use crate::scoring::{EvalMode, QuestionBudget, ScoringConfig, SimilarityStrategy, MAX_AUTO_QUESTIONS};

pub const ENGINE_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const NORMALIZATION_VERSION: &str = "v1";
pub const ORACLE_BACKEND: &str = "oracle";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimilarityKind {
    #[default]
    TokenF1,
    Embedding,
}

impl std::str::FromStr for SimilarityKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "token_f1" | "f1" => Ok(SimilarityKind::TokenF1),
            "embedding" => Ok(SimilarityKind::Embedding),
            other => Err(format!("unknown similarity `{other}` (expected token_f1 or embedding)")),
        }
    }
}

fn default_mode() -> EvalMode {
    EvalMode::Data
}
fn default_backend() -> String {
    ORACLE_BACKEND.to_string()
}
fn default_true() -> bool {
    true
}
fn default_threshold() -> f64 {
    0.9
}
fn default_max_questions_per_pair() -> usize {
    MAX_AUTO_QUESTIONS
}
fn default_timeout_ms() -> u64 {
    30_000
}
fn default_retries() -> u32 {
    2
}
fn default_format() -> String {
    "canonical".to_string()
}

/// Every option of a run. Keys mirror the command-line flags with `-`
/// replaced by `_`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_mode")]
    pub mode: EvalMode,
    #[serde(default)]
    pub similarity: SimilarityKind,
    /// `oracle` or an `http://` endpoint.
    #[serde(default = "default_backend")]
    pub backend: String,
    /// Absent means two per triple or row, capped at 32.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_questions: Option<usize>,
    #[serde(default = "default_true")]
    pub roundtrip: bool,
    #[serde(default = "default_threshold")]
    pub roundtrip_threshold: f64,
    #[serde(default = "default_max_questions_per_pair")]
    pub max_questions_per_pair: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_retries")]
    pub retries: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<PathBuf>,
    #[serde(default = "default_format")]
    pub dataset_format: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hypotheses: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ratings: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            mode: default_mode(),
            similarity: SimilarityKind::default(),
            backend: default_backend(),
            max_questions: None,
            roundtrip: true,
            roundtrip_threshold: default_threshold(),
            max_questions_per_pair: default_max_questions_per_pair(),
            cache_dir: None,
            workers: None,
            timeout_ms: default_timeout_ms(),
            retries: default_retries(),
            dataset: None,
            dataset_format: default_format(),
            hypotheses: None,
            ratings: None,
            scores: None,
            output: None,
        }
    }
}

impl RunConfig {
    pub fn budget(&self) -> QuestionBudget {
        match self.max_questions {
            Some(n) => QuestionBudget::Fixed(n),
            None => QuestionBudget::Auto,
        }
    }

    pub fn filter(&self) -> FilterConfig {
        FilterConfig {
            roundtrip_enabled: self.roundtrip,
            roundtrip_threshold: self.roundtrip_threshold,
            max_questions_per_pair: self.max_questions_per_pair,
        }
    }

    pub fn scoring_config(&self, backend: &BackendSignature) -> ScoringConfig {
        ScoringConfig {
            mode: self.mode,
            strategy: match self.similarity {
                SimilarityKind::TokenF1 => SimilarityStrategy::TokenF1,
                SimilarityKind::Embedding => SimilarityStrategy::Embedding {
                    embed_id: backend.embed_id.clone(),
                },
            },
            budget: self.budget(),
        }
    }

    pub fn is_oracle(&self) -> bool {
        self.backend == ORACLE_BACKEND
    }
}

fn role_ids(mode: EvalMode, text: &str, data: &str) -> String {
    match mode {
        EvalMode::Text => text.to_string(),
        EvalMode::Data if text == data => data.to_string(),
        EvalMode::Data => format!("{data}+{text}"),
    }
}

/// `dqe|mode:<m>|qg:<id>|qa:<id>|sim:<s>|norm:v1|nq:<k>|filt:<f>|v:<semver>`.
///
/// In data mode both the data and text models run; differing ids are joined
/// as `<data>+<text>`.
pub fn signature(cfg: &RunConfig, backend: &BackendSignature) -> String {
    let qg = role_ids(cfg.mode, backend.qg_id(Modality::Text), backend.qg_id(Modality::Data));
    let qa = role_ids(cfg.mode, backend.qa_id(Modality::Text), backend.qa_id(Modality::Data));
    let sim = match cfg.similarity {
        SimilarityKind::TokenF1 => "f1".to_string(),
        SimilarityKind::Embedding => format!("emb-{}", backend.embed_id),
    };
    let nq = match cfg.max_questions {
        None => "2x".to_string(),
        Some(n) => n.to_string(),
    };
    format!(
        "dqe|mode:{}|qg:{qg}|qa:{qa}|sim:{sim}|norm:{NORMALIZATION_VERSION}|nq:{nq}|filt:{}|v:{ENGINE_VERSION}",
        cfg.mode,
        cfg.filter().tag()
    )
}

/// Signature of a corpus build: the textual QG, the round-trip QA and the
/// filter settings.
pub fn corpus_build_signature(text_qg: &dyn Backend, text_qa: &dyn Backend, filter: &FilterConfig) -> String {
    format!(
        "dqe-corpus|{}|norm:{NORMALIZATION_VERSION}|v:{ENGINE_VERSION}",
        crate::corpus_builder::corpus_signature(text_qg, text_qa, filter)
    )
}
