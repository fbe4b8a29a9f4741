use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use dqe_core::backends::Backend;
use dqe_core::cache::CacheStore;
use dqe_core::dataset_io::{load_dtg_dataset, load_hypotheses, load_ratings, DatasetFormat, DtgExample, Split};
use dqe_core::explain::RenderFormat;
use dqe_core::meta_eval::{load_metric_scores, PermutationTest, DEFAULT_PERMUTATION_SEED};
use dqe_core::pipeline::{self, with_workers};
use dqe_core::scoring::{BackendSet, EvalMode};
use dqe_core::signature::{corpus_build_signature, signature, RunConfig, SimilarityKind};

const CACHE_ENV: &str = "DQE_CACHE_DIR";

#[derive(Debug, Parser)]
#[command(name = "dqe", version, about = "Question-based evaluation of data-to-text outputs")]
struct Cli {
    #[command(flatten)]
    opts: RunFlags,
    #[command(subcommand)]
    command: Command,
}

/// Options shared by all commands. Each overrides the same key in `--config`.
#[derive(Debug, Args, Default)]
struct RunFlags {
    /// Flat TOML file with run options.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_parser = parse_mode)]
    mode: Option<EvalMode>,
    /// token_f1 or embedding.
    #[arg(long, global = true)]
    similarity: Option<SimilarityKind>,
    /// `oracle` or the base URL of a model service.
    #[arg(long, global = true)]
    backend: Option<String>,
    /// Questions per pass; default is two per triple or row, capped at 32.
    #[arg(long, global = true)]
    max_questions: Option<usize>,
    #[arg(long, global = true)]
    roundtrip_threshold: Option<f64>,
    /// Disable the corpus round-trip filter.
    #[arg(long, global = true)]
    no_roundtrip: bool,
    /// Response cache directory; falls back to $DQE_CACHE_DIR.
    #[arg(long, global = true)]
    cache_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    #[arg(long, global = true)]
    dataset: Option<PathBuf>,
    /// canonical, webnlg-triples, wikibio-infobox or e2e-mr.
    #[arg(long, global = true)]
    dataset_format: Option<String>,
    #[arg(long, global = true)]
    timeout_ms: Option<u64>,
    #[arg(long, global = true)]
    retries: Option<u32>,
}

fn parse_mode(s: &str) -> Result<EvalMode, String> {
    s.parse()
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build the synthetic QA corpus and training views from the train split.
    BuildCorpus,
    /// Score system outputs.
    Score {
        /// CSV with system_id,example_id,hypothesis columns.
        #[arg(long)]
        hypotheses: Option<PathBuf>,
    },
    /// Per-question reports for selected examples.
    Explain {
        #[arg(long)]
        hypotheses: Option<PathBuf>,
        /// Comma-separated example ids; all when omitted.
        #[arg(long, value_delimiter = ',')]
        ids: Vec<String>,
        /// structured or human.
        #[arg(long, default_value = "human")]
        format: RenderFormat,
    },
    /// Correlate metric scores with human ratings.
    MetaEval {
        /// system_id,example_id,score (or a score command output).
        #[arg(long)]
        scores: Option<PathBuf>,
        /// system_id,example_id,hypothesis,<dimension>... ratings.
        #[arg(long)]
        ratings: Option<PathBuf>,
        /// Comma-separated dimensions; all shared ones when omitted.
        #[arg(long, value_delimiter = ',')]
        dimensions: Vec<String>,
        /// Also run a permutation test with this many permutations.
        #[arg(long, num_args = 0..=1, default_missing_value = "10000")]
        permutations: Option<usize>,
        #[arg(long, default_value_t = DEFAULT_PERMUTATION_SEED)]
        seed: u64,
    },
    /// Delete cached responses of the configured backend, or of a given namespace.
    CachePurge {
        #[arg(long, conflicts_with = "all")]
        namespace: Option<String>,
        #[arg(long)]
        all: bool,
    },
}

fn load_config(flags: &RunFlags, hypotheses: Option<&Path>) -> Result<RunConfig> {
    let mut cfg = match &flags.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?
        }
        None => RunConfig::default(),
    };
    if let Some(v) = flags.mode {
        cfg.mode = v;
    }
    if let Some(v) = flags.similarity {
        cfg.similarity = v;
    }
    if let Some(v) = &flags.backend {
        cfg.backend = v.clone();
    }
    if let Some(v) = flags.max_questions {
        cfg.max_questions = Some(v);
    }
    if let Some(v) = flags.roundtrip_threshold {
        cfg.roundtrip_threshold = v;
    }
    if flags.no_roundtrip {
        cfg.roundtrip = false;
    }
    if let Some(v) = &flags.cache_dir {
        cfg.cache_dir = Some(v.clone());
    }
    if let Some(v) = flags.workers {
        cfg.workers = Some(v);
    }
    if let Some(v) = &flags.output {
        cfg.output = Some(v.clone());
    }
    if let Some(v) = &flags.dataset {
        cfg.dataset = Some(v.clone());
    }
    if let Some(v) = &flags.dataset_format {
        cfg.dataset_format = v.clone();
    }
    if let Some(v) = flags.timeout_ms {
        cfg.timeout_ms = v;
    }
    if let Some(v) = flags.retries {
        cfg.retries = v;
    }
    if let Some(v) = hypotheses {
        cfg.hypotheses = Some(v.to_path_buf());
    }
    if cfg.cache_dir.is_none() {
        cfg.cache_dir = std::env::var_os(CACHE_ENV).filter(|v| !v.is_empty()).map(PathBuf::from);
    }
    if !(0.0..=1.0).contains(&cfg.roundtrip_threshold) {
        bail!("roundtrip_threshold must lie in [0, 1], got {}", cfg.roundtrip_threshold);
    }
    if cfg.max_questions == Some(0) {
        bail!("max_questions must be positive");
    }
    Ok(cfg)
}

fn required<'a>(value: &'a Option<PathBuf>, name: &str) -> Result<&'a Path> {
    value
        .as_deref()
        .with_context(|| format!("missing --{name} (or `{}` in the config file)", name.replace('-', "_")))
}

fn load_dataset(cfg: &RunConfig) -> Result<Vec<DtgExample>> {
    let path = required(&cfg.dataset, "dataset")?;
    let format: DatasetFormat = cfg.dataset_format.parse().map_err(anyhow::Error::msg)?;
    load_dtg_dataset(path, format).with_context(|| format!("loading dataset {}", path.display()))
}

fn emit(cfg: &RunConfig, text: &str) -> Result<()> {
    match &cfg.output {
        Some(path) => {
            pipeline::write_output(path, text).with_context(|| format!("writing {}", path.display()))?;
            log::info!("wrote {}", path.display());
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn run_score(cfg: &RunConfig) -> Result<()> {
    let examples = load_dataset(cfg)?;
    let hyp_path = required(&cfg.hypotheses, "hypotheses")?;
    let outputs = load_hypotheses(hyp_path).with_context(|| format!("loading {}", hyp_path.display()))?;
    let backend = pipeline::open_backend(cfg, &examples)?;
    let sig = signature(cfg, backend.signature());
    let scoring = cfg.scoring_config(backend.signature());
    let backends = BackendSet::uniform(&*backend);
    let rows = with_workers(cfg.workers, || {
        pipeline::score_outputs(&examples, &outputs, &backends, &scoring, &sig)
    })??;
    log::info!("scored {} outputs", rows.len());
    emit(cfg, &pipeline::render_scores(&rows, &sig))
}

fn run_explain(cfg: &RunConfig, ids: &[String], format: RenderFormat) -> Result<()> {
    let examples = load_dataset(cfg)?;
    let hyp_path = required(&cfg.hypotheses, "hypotheses")?;
    let outputs = load_hypotheses(hyp_path).with_context(|| format!("loading {}", hyp_path.display()))?;
    let backend = pipeline::open_backend(cfg, &examples)?;
    let sig = signature(cfg, backend.signature());
    let scoring = cfg.scoring_config(backend.signature());
    let backends = BackendSet::uniform(&*backend);
    let selection = (!ids.is_empty()).then_some(ids);
    let reports = with_workers(cfg.workers, || {
        pipeline::explain_outputs(&examples, &outputs, selection, &backends, &scoring, &sig)
    })??;
    emit(cfg, &pipeline::render_reports(&reports, format, &sig))
}

fn run_build_corpus(cfg: &RunConfig) -> Result<()> {
    let examples = load_dataset(cfg)?;
    let train: Vec<DtgExample> = examples.into_iter().filter(|e| e.split == Split::Train).collect();
    if train.is_empty() {
        bail!("dataset has no train-split examples");
    }
    let out_dir = required(&cfg.output, "output")?;
    let backend = pipeline::open_backend(cfg, &train)?;
    let filter = cfg.filter();
    let sig = corpus_build_signature(&*backend, &*backend, &filter);
    let (build, files) = with_workers(cfg.workers, || {
        pipeline::build_corpus_files(&train, &*backend, &*backend, &filter, &sig, out_dir)
    })??;
    if build.records.is_empty() {
        log::warn!("no record survived; wrote an empty corpus");
    }
    log::info!("{} records written to {}", build.records.len(), files.corpus.display());
    Ok(())
}

fn run_meta_eval(
    cfg: &RunConfig,
    scores: &Option<PathBuf>,
    ratings: &Option<PathBuf>,
    dimensions: &[String],
    permutations: Option<usize>,
    seed: u64,
) -> Result<()> {
    let scores_path = required(scores, "scores")?;
    let ratings_path = required(ratings, "ratings")?;
    let scores = load_metric_scores(scores_path).with_context(|| format!("loading {}", scores_path.display()))?;
    let ratings = load_ratings(ratings_path).with_context(|| format!("loading {}", ratings_path.display()))?;
    let permutation = permutations.map(|n| PermutationTest { permutations: n, seed });
    let dims = (!dimensions.is_empty()).then_some(dimensions);
    let run = pipeline::meta_evaluate(&scores, &ratings, dims, permutation)?;
    emit(cfg, &run.rendered)
}

fn run_cache_purge(cfg: &RunConfig, namespace: &Option<String>, all: bool) -> Result<()> {
    let dir = required(&cfg.cache_dir, "cache-dir")?;
    let store = CacheStore::open(dir)?;
    let targets = if all {
        store.namespaces()?
    } else if let Some(ns) = namespace {
        vec![ns.clone()]
    } else {
        let examples = match &cfg.dataset {
            Some(_) => load_dataset(cfg)?,
            None => Vec::new(),
        };
        let uncached = RunConfig {
            cache_dir: None,
            ..cfg.clone()
        };
        vec![pipeline::open_backend(&uncached, &examples)?.cache_namespace()]
    };
    for ns in targets {
        let removed = store.purge(&ns)?;
        println!("{removed}\t{ns}");
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let hypotheses = match &cli.command {
        Command::Score { hypotheses } | Command::Explain { hypotheses, .. } => hypotheses.as_deref(),
        _ => None,
    };
    let cfg = load_config(&cli.opts, hypotheses)?;
    log::debug!("run config: {cfg:?}");
    match &cli.command {
        Command::BuildCorpus => run_build_corpus(&cfg),
        Command::Score { .. } => run_score(&cfg),
        Command::Explain { ids, format, .. } => run_explain(&cfg, ids, *format),
        Command::MetaEval {
            scores,
            ratings,
            dimensions,
            permutations,
            seed,
        } => run_meta_eval(
            &cfg,
            &scores.clone().or_else(|| cfg.scores.clone()),
            &ratings.clone().or_else(|| cfg.ratings.clone()),
            dimensions,
            *permutations,
            *seed,
        ),
        Command::CachePurge { namespace, all } => run_cache_purge(&cfg, namespace, *all),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
