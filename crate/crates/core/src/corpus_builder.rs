//! Synthetic multimodal QA corpus construction.
//!
//! Questions are generated on each reference description with the textual
//! QG backend and attached to the linearized structured input the reference
//! describes. Optionally the textual QA backend must re-answer each question
//! on the reference for the pair to survive.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backends::Backend;
use crate::data_model::{linearize, Modality};
use crate::dataset_io::{atomic_write, DtgExample, SyntheticQaRecord};
use crate::error::{CorpusError, DataError};
use crate::scoring::{contains_normalized, token_f1};

/// Separator between the prompt and the linearized input in training views.
pub const CTX_TOKEN: &str = "[CTX]";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    pub roundtrip_enabled: bool,
    /// Minimum token F1 of the re-answered question, in `[0, 1]`.
    pub roundtrip_threshold: f64,
    pub max_questions_per_pair: usize,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            roundtrip_enabled: true,
            roundtrip_threshold: 0.9,
            max_questions_per_pair: 32,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<(), CorpusError> {
        if !(0.0..=1.0).contains(&self.roundtrip_threshold) {
            return Err(CorpusError::InvalidConfig(format!(
                "roundtrip_threshold {} is outside [0, 1]",
                self.roundtrip_threshold
            )));
        }
        if self.max_questions_per_pair == 0 {
            return Err(CorpusError::InvalidConfig("max_questions_per_pair must be positive".into()));
        }
        Ok(())
    }

    /// `rt<threshold>` or `none`.
    pub fn tag(&self) -> String {
        if self.roundtrip_enabled {
            format!("rt{}", self.roundtrip_threshold)
        } else {
            "none".to_string()
        }
    }
}

/// Identifies the backends and filter that produced a corpus.
pub fn corpus_signature(text_qg: &dyn Backend, text_qa: &dyn Backend, cfg: &FilterConfig) -> String {
    let qa = if cfg.roundtrip_enabled {
        text_qa.signature().qa_id(Modality::Text)
    } else {
        "none"
    };
    format!(
        "qg:{}|rtqa:{}|filt:{}|nq:{}",
        text_qg.signature().qg_id(Modality::Text),
        qa,
        cfg.tag(),
        cfg.max_questions_per_pair
    )
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CorpusWarning {
    /// No record survived.
    EmptyCorpus,
    /// The QG produced an answer absent from its own source text.
    NonExtractiveAnswer { example_id: String, question: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusBuild {
    pub records: Vec<SyntheticQaRecord>,
    pub signature: String,
    pub warnings: Vec<CorpusWarning>,
}

fn reject_reserved(field: &str, text: &str) -> Result<(), CorpusError> {
    if text.contains(CTX_TOKEN) || text.contains('\t') || text.contains('\n') {
        return Err(CorpusError::ReservedToken(format!("{field}: {text:?}")));
    }
    Ok(())
}

fn build_example(
    example: &DtgExample,
    text_qg: &dyn Backend,
    text_qa: &dyn Backend,
    cfg: &FilterConfig,
    signature: &str,
) -> Result<(Vec<SyntheticQaRecord>, Vec<CorpusWarning>), CorpusError> {
    if example.references.is_empty() {
        return Err(CorpusError::MissingReference {
            example_id: example.id.clone(),
        });
    }
    let tag = |source| CorpusError::Backend {
        example_id: example.id.clone(),
        source,
    };
    let linearized = linearize(&example.input).text;
    reject_reserved("linearized_input", &linearized)?;

    let mut records = Vec::new();
    let mut warnings = Vec::new();
    for reference in &example.references {
        if reference.trim().is_empty() {
            continue;
        }
        let pairs = text_qg
            .generate_qa_pairs(reference, Modality::Text, cfg.max_questions_per_pair)
            .map_err(tag)?;
        for pair in pairs {
            if !contains_normalized(reference, &pair.answer) {
                warnings.push(CorpusWarning::NonExtractiveAnswer {
                    example_id: example.id.clone(),
                    question: pair.question,
                });
                continue;
            }
            if cfg.roundtrip_enabled {
                let prediction = text_qa
                    .answer(&pair.question, reference, Modality::Text)
                    .map_err(tag)?;
                let f1 = if prediction.unanswerable {
                    0.0
                } else {
                    token_f1(&prediction.text, &pair.answer)
                };
                if f1 < cfg.roundtrip_threshold {
                    continue;
                }
            }
            reject_reserved("question", &pair.question)?;
            reject_reserved("answer", &pair.answer)?;
            records.push(SyntheticQaRecord {
                example_id: example.id.clone(),
                linearized_input: linearized.clone(),
                question: pair.question,
                answer: pair.answer,
                source_description: reference.clone(),
                qg_signature: signature.to_string(),
            });
        }
    }
    Ok((records, warnings))
}

/// Builds the corpus in example order, then reference order, then question
/// order. Examples are processed in parallel.
pub fn build_synthetic_corpus(
    train: &[DtgExample],
    text_qg: &dyn Backend,
    text_qa: &dyn Backend,
    cfg: &FilterConfig,
) -> Result<CorpusBuild, CorpusError> {
    cfg.validate()?;
    let signature = corpus_signature(text_qg, text_qa, cfg);
    let per_example: Vec<_> = train
        .par_iter()
        .map(|ex| build_example(ex, text_qg, text_qa, cfg, &signature))
        .collect::<Result<_, _>>()?;

    let mut records = Vec::new();
    let mut warnings = Vec::new();
    for (r, w) in per_example {
        records.extend(r);
        warnings.extend(w);
    }
    if records.is_empty() {
        log::warn!("synthetic corpus is empty ({} examples)", train.len());
        warnings.push(CorpusWarning::EmptyCorpus);
    }
    Ok(CorpusBuild {
        records,
        signature,
        warnings,
    })
}

/// `(input, target)` pairs for QA and QG training.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingViews {
    pub qa_view: Vec<(String, String)>,
    pub qg_view: Vec<(String, String)>,
}

pub fn make_training_views(records: &[SyntheticQaRecord]) -> TrainingViews {
    let ctx = |prompt: &str, lin: &str| format!("{prompt} {CTX_TOKEN} {lin}");
    TrainingViews {
        qa_view: records
            .iter()
            .map(|r| (ctx(&r.question, &r.linearized_input), r.answer.clone()))
            .collect(),
        qg_view: records
            .iter()
            .map(|r| (ctx(&r.answer, &r.linearized_input), r.question.clone()))
            .collect(),
    }
}

/// Tab-separated `input \t target` lines after a `# <header>` line.
pub fn render_training_view(view: &[(String, String)], header: &str) -> Result<String, CorpusError> {
    let mut out = format!("# {header}\n");
    for (input, target) in view {
        for (name, text) in [("input", input), ("target", target)] {
            if text.contains('\t') || text.contains('\n') {
                return Err(CorpusError::ReservedToken(format!("{name}: {text:?}")));
            }
        }
        if target.contains(CTX_TOKEN) {
            return Err(CorpusError::ReservedToken(format!("target: {target:?}")));
        }
        out.push_str(input);
        out.push('\t');
        out.push_str(target);
        out.push('\n');
    }
    Ok(out)
}

pub fn write_training_view(view: &[(String, String)], header: &str, path: &Path) -> Result<(), crate::Error> {
    let text = render_training_view(view, header)?;
    atomic_write(path, text.as_bytes()).map_err(|e| DataError::io(path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::{AnswerPrediction, BackendSignature, OracleBackend, QaPair};
    use crate::data_model::{template_verbalize, StructuredInput, Triple};
    use crate::dataset_io::Split;
    use crate::error::BackendError;

    fn example(id: &str, triples: &[(&str, &str, &str)], refs: Vec<String>) -> DtgExample {
        let triples = triples.iter().map(|(s, p, o)| Triple::new(s, p, o).unwrap()).collect();
        DtgExample {
            id: id.into(),
            input: StructuredInput::triples(id, triples).unwrap(),
            references: refs,
            split: Split::Train,
        }
    }

    fn verbalized(id: &str, triples: &[(&str, &str, &str)]) -> DtgExample {
        let mut ex = example(id, triples, vec![]);
        ex.references = vec![template_verbalize(&ex.input)];
        ex
    }

    /// Emits one fixed pair whatever the context, and always answers `xyzzy`.
    struct Fixed {
        sig: BackendSignature,
        pair: QaPair,
    }

    impl Backend for Fixed {
        fn signature(&self) -> &BackendSignature {
            &self.sig
        }
        fn generate_qa_pairs(&self, _: &str, _: Modality, _: usize) -> Result<Vec<QaPair>, BackendError> {
            Ok(vec![self.pair.clone()])
        }
        fn answer(&self, _: &str, _: &str, _: Modality) -> Result<AnswerPrediction, BackendError> {
            Ok(AnswerPrediction::answered("xyzzy", 1.0))
        }
    }

    fn fixed() -> Fixed {
        Fixed {
            sig: BackendSignature::uniform("fixed"),
            pair: QaPair::new("Who discovered 101 helena?", "james craig watson").unwrap(),
        }
    }

    fn helena() -> DtgExample {
        example(
            "t2",
            &[
                ("101 helena", "discoverer", "james craig watson"),
                ("james craig watson", "deathcause", "peritonitis"),
            ],
            vec!["101 helena was discovered by james craig watson , who died of peritonitis .".into()],
        )
    }

    #[test]
    fn fixed_qg_record_carries_linearization() {
        let qg = fixed();
        let no_filter = FilterConfig {
            roundtrip_enabled: false,
            ..FilterConfig::default()
        };
        let out = build_synthetic_corpus(&[helena()], &qg, &qg, &no_filter).unwrap();
        assert_eq!(out.records.len(), 1);
        let r = &out.records[0];
        assert_eq!(r.question, "Who discovered 101 helena?");
        assert_eq!(
            r.linearized_input,
            "101 helena | discoverer | james craig watson [SEP] james craig watson | deathcause | peritonitis"
        );
        let views = make_training_views(&out.records);
        assert_eq!(
            views.qa_view[0],
            (
                "Who discovered 101 helena? [CTX] 101 helena | discoverer | james craig watson [SEP] james craig watson | deathcause | peritonitis".to_string(),
                "james craig watson".to_string()
            )
        );
        assert_eq!(views.qg_view[0].1, "Who discovered 101 helena?");
    }

    #[test]
    fn saturated_filter_drops_everything() {
        let qg = fixed();
        let cfg = FilterConfig {
            roundtrip_threshold: 1.0,
            ..FilterConfig::default()
        };
        let out = build_synthetic_corpus(&[helena()], &qg, &qg, &cfg).unwrap();
        assert!(out.records.is_empty());
        assert_eq!(out.warnings, vec![CorpusWarning::EmptyCorpus]);
    }

    #[test]
    fn oracle_single_triple_gives_two_records() {
        let ex = verbalized("one", &[("alan bean", "birth place", "wheeler texas")]);
        let oracle = OracleBackend::new(&[]);
        let out = build_synthetic_corpus(&[ex], &oracle, &oracle, &FilterConfig::default()).unwrap();
        assert_eq!(out.records.len(), 2);
        for r in &out.records {
            r.validate().unwrap();
            assert!(!r.question.contains(&r.linearized_input));
        }
        assert!(out.warnings.is_empty());
    }

    #[test]
    fn every_reference_is_used() {
        let mut ex = verbalized("two", &[("alan bean", "birth place", "wheeler texas")]);
        ex.references.push(ex.references[0].clone());
        let oracle = OracleBackend::new(&[]);
        let out = build_synthetic_corpus(&[ex], &oracle, &oracle, &FilterConfig::default()).unwrap();
        assert_eq!(out.records.len(), 4);
    }

    #[test]
    fn determinism_and_order() {
        let examples: Vec<DtgExample> = (0..20)
            .map(|i| {
                let s = format!("entity{i}");
                let o = format!("value{i}");
                verbalized(&format!("e{i}"), &[(s.as_str(), "colour", o.as_str())])
            })
            .collect();
        let oracle = OracleBackend::new(&[]);
        let a = build_synthetic_corpus(&examples, &oracle, &oracle, &FilterConfig::default()).unwrap();
        let b = build_synthetic_corpus(&examples, &oracle, &oracle, &FilterConfig::default()).unwrap();
        assert_eq!(a, b);
        let ids: Vec<&str> = a.records.iter().map(|r| r.example_id.as_str()).collect();
        let expected: Vec<String> = (0..20).flat_map(|i| [format!("e{i}"), format!("e{i}")]).collect();
        assert_eq!(ids, expected.iter().map(String::as_str).collect::<Vec<_>>());
    }

    #[test]
    fn missing_reference_and_bad_config() {
        let ex = example("bare", &[("a", "b", "c")], vec![]);
        let oracle = OracleBackend::new(&[]);
        assert!(matches!(
            build_synthetic_corpus(&[ex], &oracle, &oracle, &FilterConfig::default()),
            Err(CorpusError::MissingReference { .. })
        ));
        let cfg = FilterConfig {
            roundtrip_threshold: 1.5,
            ..FilterConfig::default()
        };
        assert!(build_synthetic_corpus(&[], &oracle, &oracle, &cfg).is_err());
    }

    #[test]
    fn views_cardinality_and_rendering() {
        assert_eq!(make_training_views(&[]), TrainingViews::default());
        let record = SyntheticQaRecord {
            example_id: "x".into(),
            linearized_input: "a | b | c".into(),
            question: "What is the b of a?".into(),
            answer: "c".into(),
            source_description: "The b of a is c .".into(),
            qg_signature: "s".into(),
        };
        let views = make_training_views(&vec![record; 5]);
        assert_eq!(views.qa_view.len(), 5);
        assert_eq!(views.qg_view.len(), 5);
        let text = render_training_view(&views.qg_view, "sig").unwrap();
        assert!(text.starts_with("# sig\n"));
        assert_eq!(text.lines().nth(1), Some("c [CTX] a | b | c\tWhat is the b of a?"));
        let bad = vec![("x".to_string(), "a\tb".to_string())];
        assert!(matches!(render_training_view(&bad, "s"), Err(CorpusError::ReservedToken(_))));
    }

    #[test]
    fn reserved_token_in_generated_question_is_rejected() {
        let qg = Fixed {
            sig: BackendSignature::uniform("fixed"),
            pair: QaPair::new("What [CTX] helena?", "james craig watson").unwrap(),
        };
        let cfg = FilterConfig {
            roundtrip_enabled: false,
            ..FilterConfig::default()
        };
        assert!(matches!(
            build_synthetic_corpus(&[helena()], &qg, &qg, &cfg),
            Err(CorpusError::ReservedToken(_))
        ));
    }
}
