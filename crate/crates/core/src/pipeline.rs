//! End-to-end operations behind the command-line tool. Every file written
//! here starts with a line carrying the run signature and is replaced
//! atomically.

use std::collections::{BTreeSet, HashMap};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use rayon::prelude::*;
use serde::Serialize;

use crate::backends::{Backend, OracleBackend, RemoteBackend};
use crate::cache::{CacheStore, CachedBackend};
use crate::corpus_builder::{build_synthetic_corpus, make_training_views, render_training_view, CorpusBuild, CorpusWarning, FilterConfig};
use crate::data_model::linearize;
use crate::dataset_io::{atomic_write, render_synthetic_corpus, DtgExample, RatedOutput};
use crate::error::{DataError, Error};
use crate::explain::{explain_example, render, ExampleReport, RenderFormat, ReportContext};
use crate::meta_eval::{correlate, render_correlations, CorrelationResult, MetricScores, PermutationTest};
use crate::scoring::{qa_score, BackendSet, Score, ScoringConfig};
use crate::signature::RunConfig;

fn pipeline_err(context: impl Into<String>, message: impl ToString) -> Error {
    Error::Pipeline {
        context: context.into(),
        message: message.to_string(),
    }
}

/// Writes `text` to `path` through a temp file and rename.
pub fn write_output(path: &Path, text: &str) -> Result<(), Error> {
    atomic_write(path, text.as_bytes()).map_err(|e| DataError::io(path, e))?;
    Ok(())
}

/// The backend named by `cfg.backend`, wrapped in a cache when
/// `cfg.cache_dir` is set. The oracle learns its sentences from `knowledge`.
pub fn open_backend(cfg: &RunConfig, knowledge: &[DtgExample]) -> Result<Box<dyn Backend>, Error> {
    let backend: Box<dyn Backend> = if cfg.is_oracle() {
        Box::new(OracleBackend::new(knowledge))
    } else {
        Box::new(RemoteBackend::connect(
            &cfg.backend,
            Duration::from_millis(cfg.timeout_ms),
            cfg.retries,
        )?)
    };
    match &cfg.cache_dir {
        Some(dir) => {
            let store = Arc::new(CacheStore::open(dir)?);
            Ok(Box::new(CachedBackend::new(backend, store)))
        }
        None => Ok(backend),
    }
}

/// Runs `f` on a pool of `workers` threads, or on the global pool.
pub fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, Error> {
    match workers {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| pipeline_err("workers", e))?;
            Ok(pool.install(f))
        }
        None => Ok(f()),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredOutput {
    pub system_id: String,
    pub example_id: String,
    pub score: Score,
}

fn index_examples(examples: &[DtgExample]) -> HashMap<&str, &DtgExample> {
    examples.iter().map(|e| (e.id.as_str(), e)).collect()
}

fn score_one(
    output: &RatedOutput,
    by_id: &HashMap<&str, &DtgExample>,
    backends: &BackendSet<'_>,
    cfg: &ScoringConfig,
    signature: &str,
) -> Result<Score, Error> {
    let context = format!("{}/{}", output.system_id, output.example_id);
    let example = by_id
        .get(output.example_id.as_str())
        .ok_or_else(|| pipeline_err(&context, "unknown example id"))?;
    let reference = example.references.first().map(String::as_str);
    qa_score(&example.input, &output.hypothesis, reference, backends, cfg, signature)
        .map_err(|e| pipeline_err(context, e))
}

/// Scores every output, in input order.
pub fn score_outputs(
    examples: &[DtgExample],
    outputs: &[RatedOutput],
    backends: &BackendSet<'_>,
    cfg: &ScoringConfig,
    signature: &str,
) -> Result<Vec<ScoredOutput>, Error> {
    let by_id = index_examples(examples);
    outputs
        .par_iter()
        .map(|o| {
            Ok(ScoredOutput {
                system_id: o.system_id.clone(),
                example_id: o.example_id.clone(),
                score: score_one(o, &by_id, backends, cfg, signature)?,
            })
        })
        .collect()
}

/// `# <signature>` then `system_id,example_id,final,source_to_hyp,hyp_to_source`.
pub fn render_scores(rows: &[ScoredOutput], signature: &str) -> String {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer
        .write_record(["system_id", "example_id", "final", "source_to_hyp", "hyp_to_source"])
        .expect("in-memory write");
    for row in rows {
        writer
            .write_record([
                row.system_id.clone(),
                row.example_id.clone(),
                row.score.final_score.to_string(),
                row.score.source_to_hyp.mean.to_string(),
                row.score.hyp_to_source.mean.to_string(),
            ])
            .expect("in-memory write");
    }
    let body = String::from_utf8(writer.into_inner().expect("in-memory flush")).expect("UTF-8 input");
    format!("# {signature}\n{body}")
}

/// Reports for outputs whose example id is in `ids` (all when `None`).
pub fn explain_outputs(
    examples: &[DtgExample],
    outputs: &[RatedOutput],
    ids: Option<&[String]>,
    backends: &BackendSet<'_>,
    cfg: &ScoringConfig,
    signature: &str,
) -> Result<Vec<ExampleReport>, Error> {
    let by_id = index_examples(examples);
    if let Some(ids) = ids {
        let missing: Vec<&String> = ids.iter().filter(|id| !by_id.contains_key(id.as_str())).collect();
        if !missing.is_empty() {
            return Err(pipeline_err("explain", format!("unknown example ids: {missing:?}")));
        }
    }
    let selected: Vec<&RatedOutput> = outputs
        .iter()
        .filter(|o| ids.is_none_or(|ids| ids.contains(&o.example_id)))
        .collect();
    selected
        .par_iter()
        .map(|o| {
            let score = score_one(o, &by_id, backends, cfg, signature)?;
            let example = by_id[o.example_id.as_str()];
            let linearized = linearize(&example.input).text;
            Ok(explain_example(
                &score,
                ReportContext {
                    example_id: &o.example_id,
                    hypothesis: &o.hypothesis,
                    linearized_input: Some(&linearized),
                    reference: example.references.first().map(String::as_str),
                },
            ))
        })
        .collect()
}

#[derive(Serialize)]
struct Header<'a> {
    signature: &'a str,
}

/// Structured: JSON lines, the first holding `{"signature": ...}`.
/// Human: the text tables one after another.
pub fn render_reports(reports: &[ExampleReport], format: RenderFormat, signature: &str) -> String {
    match format {
        RenderFormat::Structured => {
            let mut out = serde_json::to_string(&Header { signature }).expect("header serializes");
            out.push('\n');
            for r in reports {
                out.push_str(&serde_json::to_string(r).expect("reports serialize"));
                out.push('\n');
            }
            out
        }
        RenderFormat::Human => {
            let mut out = format!("# {signature}\n");
            for r in reports {
                out.push('\n');
                out.push_str(&render(r, RenderFormat::Human));
            }
            out
        }
    }
}

/// Dimensions present in every rated output, sorted.
pub fn shared_dimensions(ratings: &[RatedOutput]) -> Vec<String> {
    let mut iter = ratings.iter();
    let Some(first) = iter.next() else {
        return Vec::new();
    };
    let mut dims: BTreeSet<String> = first.ratings.keys().cloned().collect();
    for r in iter {
        dims.retain(|d| r.ratings.contains_key(d));
    }
    dims.into_iter().collect()
}

pub struct MetaEvalRun {
    pub results: Vec<CorrelationResult>,
    pub rendered: String,
}

/// Correlates metric scores with ratings. The rendered table starts with the
/// scores' signature and records the significance tests used.
pub fn meta_evaluate(
    scores: &MetricScores,
    ratings: &[RatedOutput],
    dimensions: Option<&[String]>,
    permutation: Option<PermutationTest>,
) -> Result<MetaEvalRun, Error> {
    let dims = match dimensions {
        Some(d) => d.to_vec(),
        None => shared_dimensions(ratings),
    };
    let results = correlate(&scores.scores, ratings, &dims, permutation)?;
    let mut metadata = vec![scores.signature.clone().unwrap_or_else(|| "unsigned scores".to_string())];
    metadata.push("pearson, pooled over (system_id, example_id); p: two-sided t-test, n-2 df".to_string());
    if let Some(p) = permutation {
        metadata.push(format!("permutation test: {} permutations, seed {}", p.permutations, p.seed));
    }
    let rendered = render_correlations(&results, &metadata);
    Ok(MetaEvalRun { results, rendered })
}

/// Paths of the files a corpus build writes into its output directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusFiles {
    pub corpus: PathBuf,
    pub qa_view: PathBuf,
    pub qg_view: PathBuf,
    pub manifest: PathBuf,
}

impl CorpusFiles {
    pub fn in_dir(dir: &Path) -> Self {
        CorpusFiles {
            corpus: dir.join("corpus.jsonl"),
            qa_view: dir.join("qa_view.tsv"),
            qg_view: dir.join("qg_view.tsv"),
            manifest: dir.join("manifest.toml"),
        }
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    signature: &'a str,
    examples: usize,
    records: usize,
    empty: bool,
    non_extractive_dropped: usize,
    corpus: String,
    qa_view: String,
    qg_view: String,
}

/// Builds the corpus from the examples and writes corpus, views and manifest.
/// Nothing is written when the build fails.
pub fn build_corpus_files(
    train: &[DtgExample],
    text_qg: &dyn Backend,
    text_qa: &dyn Backend,
    filter: &FilterConfig,
    signature: &str,
    out_dir: &Path,
) -> Result<(CorpusBuild, CorpusFiles), Error> {
    let build = build_synthetic_corpus(train, text_qg, text_qa, filter)?;
    let views = make_training_views(&build.records);
    let files = CorpusFiles::in_dir(out_dir);

    let corpus = render_synthetic_corpus(&build.records, Some(signature))?;
    let qa = render_training_view(&views.qa_view, signature)?;
    let qg = render_training_view(&views.qg_view, signature)?;
    let name = |p: &Path| p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let manifest = Manifest {
        signature,
        examples: train.len(),
        records: build.records.len(),
        empty: build.warnings.contains(&CorpusWarning::EmptyCorpus),
        non_extractive_dropped: build
            .warnings
            .iter()
            .filter(|w| matches!(w, CorpusWarning::NonExtractiveAnswer { .. }))
            .count(),
        corpus: name(&files.corpus),
        qa_view: name(&files.qa_view),
        qg_view: name(&files.qg_view),
    };
    let manifest = format!(
        "# {signature}\n{}",
        toml::to_string(&manifest).map_err(|e| pipeline_err("manifest", e))?
    );

    write_output(&files.corpus, &corpus)?;
    write_output(&files.qa_view, &qa)?;
    write_output(&files.qg_view, &qg)?;
    write_output(&files.manifest, &manifest)?;
    Ok((build, files))
}
