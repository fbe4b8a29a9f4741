//! Acceptance suite. Every criterion runs under its time budget and reports
//! one line; the test fails if any criterion fails. Criteria that need
//! external data report SKIP when the data is absent.
//!
//! Dataset statistics read converted corpora from `DQE_WEBNLG_PATH`,
//! `DQE_WIKIBIO_PATH` and `DQE_E2E_PATH` (formats `webnlg-triples`,
//! `wikibio-infobox`, `e2e-mr`; override with `DQE_<NAME>_FORMAT`).

use std::collections::{BTreeMap, HashSet};
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dqe_core::backends::{AnswerPrediction, Backend, BackendSignature, OracleBackend, QaPair, RecordingBackend};
use dqe_core::cache::{CacheStore, CachedBackend};
use dqe_core::corpus_builder::{build_synthetic_corpus, FilterConfig};
use dqe_core::data_model::{template_verbalize, Modality, StructuredInput, Triple};
use dqe_core::dataset_io::{
    dataset_stats, load_dtg_dataset, load_hypotheses, render_synthetic_corpus, DatasetFormat, DtgExample, RatedOutput, Split,
};
use dqe_core::error::BackendError;
use dqe_core::explain::RenderFormat;
use dqe_core::meta_eval::{load_metric_scores, p_value, pearson};
use dqe_core::pipeline::{self, build_corpus_files, explain_outputs, render_scores, score_outputs, write_output};
use dqe_core::scoring::{normalize_answer, qa_score, token_f1, BackendSet, EvalMode, ScoringConfig};
use dqe_core::signature::{corpus_build_signature, signature, RunConfig, SimilarityKind};

enum Verdict {
    Pass(String),
    Skip(String),
}

fn check(cond: bool, msg: impl FnOnce() -> String) {
    if !cond {
        panic!("{}", msg());
    }
}

// ---------------------------------------------------------------- fixtures

fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/helena")
}

const SYLLABLES: [&str; 16] = [
    "ba", "ko", "du", "fi", "ne", "ru", "ta", "lo", "mi", "za", "pe", "vo", "gu", "si", "ho", "ry",
];
const RESERVED_WORDS: [&str; 5] = ["a", "an", "the", "of", "is"];

/// A fresh pseudo-word not used before in this example.
fn word(rng: &mut ChaCha8Rng, used: &mut HashSet<String>) -> String {
    loop {
        let n = rng.gen_range(2..=3);
        let w: String = (0..n).map(|_| *SYLLABLES.choose(rng).unwrap()).collect();
        if !RESERVED_WORDS.contains(&w.as_str()) && used.insert(w.clone()) {
            return w;
        }
    }
}

/// One or two fresh words joined by `_`.
fn entity(rng: &mut ChaCha8Rng, used: &mut HashSet<String>) -> String {
    let n = rng.gen_range(1..=2);
    (0..n).map(|_| word(rng, used)).collect::<Vec<_>>().join("_")
}

/// Up to six triples over a few subjects. Every (subject, predicate) and
/// every object is unique, so each template question has one answer.
fn random_triples(rng: &mut ChaCha8Rng, used: &mut HashSet<String>) -> Vec<(String, String, String)> {
    let subjects: Vec<String> = (0..rng.gen_range(1..=3)).map(|_| entity(rng, used)).collect();
    (0..rng.gen_range(1..=6))
        .map(|_| {
            let s = subjects.choose(rng).unwrap().clone();
            (s, entity(rng, used), entity(rng, used))
        })
        .collect()
}

fn to_input(id: &str, triples: &[(String, String, String)]) -> StructuredInput {
    let triples = triples.iter().map(|(s, p, o)| Triple::new(s, p, o).unwrap()).collect();
    StructuredInput::triples(id, triples).unwrap()
}

struct Generated {
    input: StructuredInput,
    faithful: String,
    corrupted: String,
}

fn generate(rng: &mut ChaCha8Rng, id: &str) -> Generated {
    let mut used = HashSet::new();
    let triples = random_triples(rng, &mut used);
    let input = to_input(id, &triples);
    let mut broken = triples.clone();
    let k = rng.gen_range(0..broken.len());
    broken[k].2 = word(rng, &mut used);
    Generated {
        faithful: template_verbalize(&input),
        corrupted: template_verbalize(&to_input(id, &broken)),
        input,
    }
}

fn example(id: &str, input: StructuredInput, references: Vec<String>) -> DtgExample {
    DtgExample {
        id: id.to_string(),
        input,
        references,
        split: Split::Train,
    }
}

// ---------------------------------------------------------------- criteria

fn helena() -> Verdict {
    let dir = fixture_dir();
    let examples = load_dtg_dataset(&dir.join("dataset.jsonl"), DatasetFormat::Canonical).unwrap();
    let outputs = load_hypotheses(&dir.join("hypotheses.csv")).unwrap();
    let oracle = OracleBackend::new(&examples);
    let backends = BackendSet::uniform(&oracle);
    let cfg = ScoringConfig::default();
    let sig = signature(&RunConfig::default(), oracle.signature());
    let rows = score_outputs(&examples, &outputs, &backends, &cfg, &sig).unwrap();
    let by_system: BTreeMap<&str, f64> = rows.iter().map(|r| (r.system_id.as_str(), r.score.final_score)).collect();
    check(by_system["hyp1"] == 0.0, || format!("hypothesis 1 scored {}", by_system["hyp1"]));
    check(by_system["hyp2"] == 1.0, || format!("hypothesis 2 scored {}", by_system["hyp2"]));

    let reports = explain_outputs(&examples, &outputs, None, &backends, &cfg, &sig).unwrap();
    let bad = reports.iter().find(|r| r.hypothesis.contains("patson")).unwrap();
    check(bad.rows.iter().any(|r| r.unanswerable && r.similarity == 0.0), || {
        "no unanswerable row for hypothesis 1".into()
    });
    let good = reports.iter().find(|r| r.hypothesis.contains("peritonitis")).unwrap();
    check(
        good.rows
            .iter()
            .any(|r| r.gold_answer == "james craig watson" && r.predicted_answer == "james craig watson" && r.similarity == 1.0),
        || "hypothesis 2 lacks the discoverer row".into(),
    );
    Verdict::Pass(format!("finals hyp1={} hyp2={}", by_system["hyp1"], by_system["hyp2"]))
}

fn oracle_closure() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2021);
    let oracle = OracleBackend::new(&[]);
    let backends = BackendSet::uniform(&oracle);
    let cfg = ScoringConfig::default();
    let mut max_corrupted: f64 = 0.0;
    for i in 0..200 {
        let g = generate(&mut rng, &format!("g{i}"));
        let clean = qa_score(&g.input, &g.faithful, None, &backends, &cfg, "s").unwrap();
        check(clean.final_score == 1.0, || {
            format!("example {i}: verbalization scored {} ({})", clean.final_score, g.faithful)
        });
        let broken = qa_score(&g.input, &g.corrupted, None, &backends, &cfg, "s").unwrap();
        check(broken.final_score < clean.final_score, || {
            format!("example {i}: corruption did not lower the score ({})", g.corrupted)
        });
        max_corrupted = max_corrupted.max(broken.final_score);
    }
    Verdict::Pass(format!("200 examples, max corrupted score {max_corrupted:.4}"))
}

/// Character-level reimplementation of the normalization rules.
fn normalize_by_scanning(s: &str) -> String {
    let mut kept = String::new();
    for c in s.chars() {
        for l in c.to_lowercase() {
            if !"!\"#$%&'()*+,-./:;<=>?@[\\]^_`{|}~".contains(l) {
                kept.push(l);
            }
        }
    }
    // Split into maximal runs of word and non-word characters; drop runs
    // that are exactly an article.
    let is_word = |c: char| c.is_alphanumeric() || c == '_';
    let mut spaced = String::new();
    let mut run = String::new();
    let mut run_is_word = false;
    let flush = |run: &mut String, word: bool, out: &mut String| {
        if word && (run == "a" || run == "an" || run == "the") {
            out.push(' ');
        } else {
            out.push_str(run);
        }
        run.clear();
    };
    for c in kept.chars() {
        let w = is_word(c);
        if !run.is_empty() && w != run_is_word {
            flush(&mut run, run_is_word, &mut spaced);
        }
        run_is_word = w;
        run.push(c);
    }
    flush(&mut run, run_is_word, &mut spaced);
    let mut out = String::new();
    for tok in spaced.split(char::is_whitespace).filter(|t| !t.is_empty()) {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(tok);
    }
    out
}

const PIECES: [&str; 24] = [
    "the", "The", "a", "A", "an", "AN", "paris", "France", "new", "york", "42", "3.5", "é", "Étoile", "€",
    "!", ",", ".", "'s", "-", "_", "  ", "\t", "theatre",
];

fn random_text(rng: &mut ChaCha8Rng) -> String {
    let n = rng.gen_range(0..9);
    let mut s = String::new();
    for _ in 0..n {
        s.push_str(PIECES.choose(rng).unwrap());
        if rng.gen_bool(0.7) {
            s.push(' ');
        }
    }
    s
}

fn normalize_oracle() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..1000 {
        let s = random_text(&mut rng);
        let (got, want) = (normalize_answer(&s), normalize_by_scanning(&s));
        check(got == want, || format!("{s:?}: {got:?} != {want:?}"));
    }
    let example = normalize_answer("The James Craig Watson!");
    check(example == "james craig watson", || format!("got {example:?}"));
    Verdict::Pass("1000 strings agree".into())
}

/// Quadratic bag overlap on top of the scanning normalizer.
fn f1_brute_force(pred: &str, gold: &str) -> f64 {
    let p = normalize_by_scanning(pred);
    let g = normalize_by_scanning(gold);
    let p: Vec<&str> = p.split_whitespace().collect();
    let mut g: Vec<Option<&str>> = g.split_whitespace().map(Some).collect();
    if p.is_empty() || g.is_empty() {
        return if p.is_empty() && g.is_empty() { 1.0 } else { 0.0 };
    }
    let mut overlap = 0.0;
    for tok in &p {
        if let Some(slot) = g.iter_mut().find(|s| **s == Some(*tok)) {
            *slot = None;
            overlap += 1.0;
        }
    }
    if overlap == 0.0 {
        return 0.0;
    }
    let precision = overlap / p.len() as f64;
    let recall = overlap / g.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

fn token_f1_oracle() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let (a, b) = (random_text(&mut rng), random_text(&mut rng));
        let diff = (token_f1(&a, &b) - f1_brute_force(&a, &b)).abs();
        check(diff <= 1e-9, || format!("{a:?} vs {b:?}: differs by {diff}"));
        worst = worst.max(diff);
    }
    let pf = token_f1("paris france", "paris");
    check((pf - 0.6667).abs() <= 1e-4, || format!("(paris france, paris) = {pf}"));
    Verdict::Pass(format!("1000 pairs, max deviation {worst:e}; (paris france, paris) = {pf:.4}"))
}

fn pearson_checks() -> Verdict {
    let r = pearson(&[1.0, 2.0, 3.0], &[1.0, 2.0, 4.0]).unwrap();
    check((r - 0.9820).abs() <= 1e-4, || format!("r = {r}"));
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100 {
        let n = rng.gen_range(3..40);
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-50.0..50.0)).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-50.0..50.0)).collect();
        let r = pearson(&x, &y).unwrap();
        let nonzero = |rng: &mut ChaCha8Rng| {
            let v: f64 = rng.gen_range(0.1..10.0);
            if rng.gen_bool(0.5) {
                -v
            } else {
                v
            }
        };
        let (a, c) = (nonzero(&mut rng), nonzero(&mut rng));
        let (b, d): (f64, f64) = (rng.gen_range(-20.0..20.0), rng.gen_range(-20.0..20.0));
        let xs: Vec<f64> = x.iter().map(|v| a * v + b).collect();
        let ys: Vec<f64> = y.iter().map(|v| c * v + d).collect();
        let transformed = pearson(&xs, &ys).unwrap();
        check((transformed - (a * c).signum() * r).abs() <= 1e-9, || {
            format!("affine invariance: {transformed} vs {r}")
        });
        check((pearson(&y, &x).unwrap() - r).abs() <= 1e-9, || "symmetry".into());
    }
    for n in [3, 4, 10, 100] {
        check(p_value(0.0, n).unwrap() == 1.0, || format!("p_value(0, {n}) != 1"));
    }
    let grid: Vec<f64> = (0..=98).map(|i| i as f64 / 100.0).collect();
    for n in [3usize, 5, 20, 200] {
        for w in grid.windows(2) {
            check(p_value(w[1], n).unwrap() <= p_value(w[0], n).unwrap(), || {
                format!("not decreasing in |r| at n={n}, r={}", w[1])
            });
            check(p_value(-w[1], n).unwrap() == p_value(w[1], n).unwrap(), || "depends on the sign of r".into());
        }
        for &r in &grid[1..] {
            check(p_value(r, n + 1).unwrap() <= p_value(r, n).unwrap(), || {
                format!("not decreasing in n at n={n}, r={r}")
            });
        }
    }
    let p = p_value(r, 3).unwrap();
    Verdict::Pass(format!("r = {r:.4}, p(r, 3) = {p:.4}, 100 affine pairs"))
}

/// QA that appends zero to two filler words to the oracle's answer, so that
/// round-trip F1 varies across questions.
struct NoisyQa {
    inner: OracleBackend,
}

impl Backend for NoisyQa {
    fn signature(&self) -> &BackendSignature {
        self.inner.signature()
    }
    fn generate_qa_pairs(&self, c: &str, m: Modality, k: usize) -> Result<Vec<QaPair>, BackendError> {
        self.inner.generate_qa_pairs(c, m, k)
    }
    fn answer(&self, q: &str, c: &str, m: Modality) -> Result<AnswerPrediction, BackendError> {
        let p = self.inner.answer(q, c, m)?;
        if p.unanswerable {
            return Ok(p);
        }
        let extra = q.bytes().map(usize::from).sum::<usize>() % 3;
        let text = std::iter::once(p.text.as_str())
            .chain(["zz", "qq"].into_iter().take(extra))
            .collect::<Vec<_>>()
            .join(" ");
        Ok(AnswerPrediction::answered(text, p.confidence))
    }
}

fn corpus_properties() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let qg = OracleBackend::new(&[]);
    let qa = NoisyQa {
        inner: OracleBackend::new(&[]),
    };
    let thresholds = [0.0, 0.3, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0];
    let mut total_records = 0;
    for round in 0..10 {
        let examples: Vec<DtgExample> = (0..15)
            .map(|i| {
                let g = generate(&mut rng, &format!("r{round}e{i}"));
                let mut refs = vec![g.faithful.clone()];
                if i % 4 == 0 {
                    refs.push(g.corrupted.clone());
                }
                example(&format!("r{round}e{i}"), g.input, refs)
            })
            .collect();
        let mut previous = usize::MAX;
        for &t in &thresholds {
            let cfg = FilterConfig {
                roundtrip_threshold: t,
                ..FilterConfig::default()
            };
            let a = build_synthetic_corpus(&examples, &qg, &qa, &cfg).unwrap();
            let b = build_synthetic_corpus(&examples, &qg, &qa, &cfg).unwrap();
            let header = corpus_build_signature(&qg, &qa, &cfg);
            let (ra, rb) = (
                render_synthetic_corpus(&a.records, Some(&header)).unwrap(),
                render_synthetic_corpus(&b.records, Some(&header)).unwrap(),
            );
            check(ra == rb, || format!("round {round}, threshold {t}: corpora differ"));
            for r in &a.records {
                r.validate().unwrap();
                let desc = format!(" {} ", normalize_by_scanning(&r.source_description));
                let ans = format!(" {} ", normalize_by_scanning(&r.answer));
                check(desc.contains(&ans), || format!("{:?} not in {:?}", r.answer, r.source_description));
            }
            check(a.records.len() <= previous, || {
                format!("round {round}: threshold {t} kept {} > {previous}", a.records.len())
            });
            previous = a.records.len();
            total_records += a.records.len();
        }
    }
    let dir = tempfile::tempdir().unwrap();
    let examples: Vec<DtgExample> = (0..10)
        .map(|i| {
            let g = generate(&mut rng, &format!("f{i}"));
            example(&format!("f{i}"), g.input, vec![g.faithful])
        })
        .collect();
    let cfg = FilterConfig::default();
    let sig = corpus_build_signature(&qg, &qa, &cfg);
    let (_, first) = build_corpus_files(&examples, &qg, &qa, &cfg, &sig, &dir.path().join("a")).unwrap();
    let (_, second) = build_corpus_files(&examples, &qg, &qa, &cfg, &sig, &dir.path().join("b")).unwrap();
    for (x, y) in [
        (&first.corpus, &second.corpus),
        (&first.qa_view, &second.qa_view),
        (&first.qg_view, &second.qg_view),
        (&first.manifest, &second.manifest),
    ] {
        check(std::fs::read(x).unwrap() == std::fs::read(y).unwrap(), || format!("{} differs", x.display()));
    }
    Verdict::Pass(format!("10 datasets x {} thresholds, {total_records} records checked", thresholds.len()))
}

fn scoring_fixture(n: usize, seed: u64) -> (Vec<DtgExample>, Vec<RatedOutput>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut examples = Vec::new();
    let mut outputs = Vec::new();
    for i in 0..n {
        let id = format!("c{i}");
        let g = generate(&mut rng, &id);
        for (system, hyp) in [("faithful", &g.faithful), ("corrupted", &g.corrupted)] {
            outputs.push(RatedOutput {
                system_id: system.into(),
                example_id: id.clone(),
                hypothesis: hyp.clone(),
                ratings: BTreeMap::new(),
            });
        }
        examples.push(example(&id, g.input, vec![g.faithful.clone()]));
    }
    (examples, outputs)
}

fn cache_transparency() -> Verdict {
    let (examples, outputs) = scoring_fixture(50, 50);
    let cfg = ScoringConfig::default();
    let sig = signature(&RunConfig::default(), &BackendSignature::uniform("oracle-v1"));
    let dir = tempfile::tempdir().unwrap();

    let direct = RecordingBackend::new(OracleBackend::new(&examples));
    let uncached = render_scores(&score_outputs(&examples, &outputs, &BackendSet::uniform(&direct), &cfg, &sig).unwrap(), &sig);

    let mut passes = Vec::new();
    let mut calls = Vec::new();
    for _ in 0..2 {
        let store = Arc::new(CacheStore::open(dir.path()).unwrap());
        let recorder = RecordingBackend::new(OracleBackend::new(&examples));
        let cached = CachedBackend::new(&recorder, store);
        let rows = score_outputs(&examples, &outputs, &BackendSet::uniform(&cached), &cfg, &sig).unwrap();
        passes.push(render_scores(&rows, &sig));
        calls.push(recorder.counts().total());
    }
    check(passes[0] == uncached, || "first cached pass differs from uncached scores".into());
    check(passes[1] == passes[0], || "second cached pass differs".into());
    // Repeated requests within the first pass are already served from the cache.
    check(calls[0] > 0 && calls[0] <= direct.counts().total(), || {
        format!("first pass made {} calls, uncached {}", calls[0], direct.counts().total())
    });
    check(calls[1] == 0, || format!("second pass made {} backend calls", calls[1]));
    Verdict::Pass(format!("{} outputs, calls {} then {}", outputs.len(), calls[0], calls[1]))
}

fn first_line(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap().lines().next().unwrap_or_default().to_string()
}

fn signature_stability() -> Verdict {
    let oracle_sig = BackendSignature::uniform("oracle-v1");
    let base = RunConfig::default();
    check(signature(&base, &oracle_sig) == signature(&RunConfig::default(), &oracle_sig), || "unstable".into());
    check(
        signature(&base, &oracle_sig) == "dqe|mode:data|qg:oracle-v1|qa:oracle-v1|sim:f1|norm:v1|nq:2x|filt:rt0.9|v:1.0.0",
        || format!("default rendering {}", signature(&base, &oracle_sig)),
    );
    let with = |f: &dyn Fn(&mut RunConfig)| {
        let mut c = base.clone();
        f(&mut c);
        c
    };
    let sig_with = |f: &dyn Fn(&mut BackendSignature)| {
        let mut s = oracle_sig.clone();
        f(&mut s);
        s
    };
    let variants = [
        ("mode", signature(&with(&|c| c.mode = EvalMode::Text), &oracle_sig)),
        ("similarity", signature(&with(&|c| c.similarity = SimilarityKind::Embedding), &oracle_sig)),
        ("max_questions", signature(&with(&|c| c.max_questions = Some(4)), &oracle_sig)),
        ("roundtrip", signature(&with(&|c| c.roundtrip = false), &oracle_sig)),
        ("roundtrip_threshold", signature(&with(&|c| c.roundtrip_threshold = 0.8), &oracle_sig)),
        ("text_qg_id", signature(&base, &sig_with(&|s| s.text_qg_id = "x".into()))),
        ("text_qa_id", signature(&base, &sig_with(&|s| s.text_qa_id = "x".into()))),
        ("data_qg_id", signature(&base, &sig_with(&|s| s.data_qg_id = "x".into()))),
        ("data_qa_id", signature(&base, &sig_with(&|s| s.data_qa_id = "x".into()))),
    ];
    let mut seen = HashSet::from([signature(&base, &oracle_sig)]);
    for (name, s) in &variants {
        check(seen.insert(s.clone()), || format!("changing {name} did not produce a new signature"));
    }
    let informational = with(&|c| {
        c.output = Some("elsewhere.csv".into());
        c.cache_dir = Some("cache".into());
        c.workers = Some(7);
        c.timeout_ms = 1;
    });
    check(signature(&informational, &oracle_sig) == signature(&base, &oracle_sig), || {
        "paths or workers changed the signature".into()
    });

    // Every output file written by the pipeline carries it on its first line.
    let dir = tempfile::tempdir().unwrap();
    let (examples, outputs) = scoring_fixture(5, 8);
    let oracle = OracleBackend::new(&examples);
    let sig = signature(&base, oracle.signature());
    let backends = BackendSet::uniform(&oracle);
    let cfg = base.scoring_config(oracle.signature());
    let rows = score_outputs(&examples, &outputs, &backends, &cfg, &sig).unwrap();
    let scores_path = dir.path().join("scores.csv");
    write_output(&scores_path, &render_scores(&rows, &sig)).unwrap();
    let reports = explain_outputs(&examples, &outputs, None, &backends, &cfg, &sig).unwrap();
    let structured = dir.path().join("reports.jsonl");
    let human = dir.path().join("reports.txt");
    write_output(&structured, &pipeline::render_reports(&reports, RenderFormat::Structured, &sig)).unwrap();
    write_output(&human, &pipeline::render_reports(&reports, RenderFormat::Human, &sig)).unwrap();
    let ratings: Vec<RatedOutput> = rows
        .iter()
        .zip(&outputs)
        .enumerate()
        .map(|(i, (row, o))| RatedOutput {
            ratings: BTreeMap::from([("semantic".to_string(), row.score.final_score + i as f64 * 0.01)]),
            ..o.clone()
        })
        .collect();
    let scores = load_metric_scores(&scores_path).unwrap();
    let meta = pipeline::meta_evaluate(&scores, &ratings, None, None).unwrap();
    let meta_path = dir.path().join("meta.csv");
    write_output(&meta_path, &meta.rendered).unwrap();
    let mut files = vec![scores_path, structured, human, meta_path];
    for path in &files {
        check(first_line(path).contains(&sig), || format!("{} lacks the signature", path.display()));
    }

    let filter = base.filter();
    let corpus_sig = corpus_build_signature(&oracle, &oracle, &filter);
    let (_, corpus) = build_corpus_files(&examples, &oracle, &oracle, &filter, &corpus_sig, &dir.path().join("corpus")).unwrap();
    for path in [corpus.corpus, corpus.qa_view, corpus.qg_view, corpus.manifest] {
        check(first_line(&path).contains(&corpus_sig), || format!("{} lacks the corpus signature", path.display()));
        files.push(path);
    }
    Verdict::Pass(format!("{} variants distinct, {} files signed", variants.len(), files.len()))
}

fn dataset_table() -> Verdict {
    let targets = [
        ("WEBNLG", "webnlg-triples", 11usize, 4.5f64),
        ("WIKIBIO", "wikibio-infobox", 86, 12.42),
        ("E2E", "e2e-mr", 8, 5.37),
    ];
    let mut checked = Vec::new();
    let mut missing = Vec::new();
    for (name, default_format, max, mean) in targets {
        let Some(path) = std::env::var_os(format!("DQE_{name}_PATH")).map(PathBuf::from) else {
            missing.push(name);
            continue;
        };
        let format: DatasetFormat = std::env::var(format!("DQE_{name}_FORMAT"))
            .unwrap_or_else(|_| default_format.to_string())
            .parse()
            .unwrap();
        let examples = load_dtg_dataset(&path, format).unwrap();
        let stats = dataset_stats(&examples).unwrap();
        check(stats.table_size_max == max, || format!("{name}: max {} != {max}", stats.table_size_max));
        check((stats.table_size_mean - mean).abs() <= 0.05, || {
            format!("{name}: mean {:.3} not within 0.05 of {mean}", stats.table_size_mean)
        });
        checked.push(format!("{name} {}/{:.2}", stats.table_size_max, stats.table_size_mean));
    }
    if checked.is_empty() {
        return Verdict::Skip(format!("no converted datasets ({} unset)", missing.join(", ")));
    }
    Verdict::Pass(checked.join(", "))
}

// ---------------------------------------------------------------- runner

type Criterion = (&'static str, Option<Duration>, fn() -> Verdict);

#[test]
fn acceptance() {
    let criteria: [Criterion; 9] = [
        ("helena_fixture", Some(Duration::from_secs(1)), helena),
        ("oracle_closure", Some(Duration::from_secs(10)), oracle_closure),
        ("token_f1_oracle", None, token_f1_oracle),
        ("normalize_answer_oracle", None, normalize_oracle),
        ("pearson_and_p_value", None, pearson_checks),
        ("corpus_builder_properties", Some(Duration::from_secs(10)), corpus_properties),
        ("cache_transparency", None, cache_transparency),
        ("signature_stability", None, signature_stability),
        ("dataset_stats_table", None, dataset_table),
    ];
    let mut failures = Vec::new();
    for (name, budget, run) in criteria {
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(run));
        let elapsed = start.elapsed();
        let line = match outcome {
            Ok(Verdict::Pass(detail)) => match budget {
                Some(b) if elapsed > b => {
                    failures.push(name);
                    format!("FAIL {name}: took {elapsed:.2?}, budget {b:?} ({detail})")
                }
                _ => format!("PASS {name}: {detail} [{elapsed:.2?}]"),
            },
            Ok(Verdict::Skip(why)) => format!("SKIP {name}: {why}"),
            Err(payload) => {
                failures.push(name);
                let msg = payload
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| payload.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                format!("FAIL {name}: {msg}")
            }
        };
        println!("{line}");
    }
    assert!(failures.is_empty(), "failed criteria: {failures:?}");
}
