//! Correlation of metric scores with human ratings.
//!
//! Scores and ratings are joined on `(system_id, example_id)` and pooled over
//! systems, giving one Pearson coefficient per rating dimension. Significance
//! comes from the two-sided t-test for Pearson's r; a seeded permutation test
//! is available as a cross-check.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::dataset_io::RatedOutput;
use crate::error::{DataError, MetaEvalError};

pub const DEFAULT_PERMUTATIONS: usize = 10_000;
pub const DEFAULT_PERMUTATION_SEED: u64 = 42;

/// `(system_id, example_id)`.
pub type ScoreKey = (String, String);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult {
    pub dimension: String,
    pub n: usize,
    pub r: f64,
    pub p_value: f64,
    pub significant_at_05: bool,
    /// Present when the permutation cross-check ran.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub permutation_p_value: Option<f64>,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Product-moment correlation coefficient.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, MetaEvalError> {
    if x.len() != y.len() {
        return Err(MetaEvalError::DimensionMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(MetaEvalError::InsufficientSamples {
            required: 2,
            got: x.len(),
        });
    }
    let (mx, my) = (mean(x), mean(y));
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(MetaEvalError::DegenerateVariance);
    }
    // sqrt(a * a) == a exactly, so identical inputs give exactly 1.
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Two-sided p-value of `r` under the null of zero correlation, using a
/// Student-t law with `n - 2` degrees of freedom.
pub fn p_value(r: f64, n: usize) -> Result<f64, MetaEvalError> {
    if n < 3 {
        return Err(MetaEvalError::InsufficientSamples { required: 3, got: n });
    }
    let r = r.clamp(-1.0, 1.0);
    if r.abs() >= 1.0 {
        return Ok(0.0);
    }
    if r == 0.0 {
        return Ok(1.0);
    }
    let df = (n - 2) as f64;
    let t = r.abs() * (df / (1.0 - r * r)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).expect("df is positive");
    Ok((2.0 * dist.sf(t)).clamp(0.0, 1.0))
}

/// Share of seeded shuffles of `y` whose |r| reaches the observed |r|, with
/// the usual +1 correction.
pub fn permutation_p_value(x: &[f64], y: &[f64], permutations: usize, seed: u64) -> Result<f64, MetaEvalError> {
    let observed = pearson(x, y)?.abs();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut shuffled = y.to_vec();
    let mut extreme = 0usize;
    for _ in 0..permutations {
        shuffled.shuffle(&mut rng);
        if pearson(x, &shuffled)?.abs() >= observed - 1e-12 {
            extreme += 1;
        }
    }
    Ok((extreme + 1) as f64 / (permutations + 1) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PermutationTest {
    pub permutations: usize,
    pub seed: u64,
}

impl Default for PermutationTest {
    fn default() -> Self {
        PermutationTest {
            permutations: DEFAULT_PERMUTATIONS,
            seed: DEFAULT_PERMUTATION_SEED,
        }
    }
}

/// One correlation per dimension over all joined `(system, example)` pairs.
pub fn correlate(
    scores: &BTreeMap<ScoreKey, f64>,
    ratings: &[RatedOutput],
    dimensions: &[String],
    permutation: Option<PermutationTest>,
) -> Result<Vec<CorrelationResult>, MetaEvalError> {
    let missing: Vec<String> = ratings
        .iter()
        .filter(|r| !scores.contains_key(&(r.system_id.clone(), r.example_id.clone())))
        .map(|r| format!("{}/{}", r.system_id, r.example_id))
        .collect();
    if !missing.is_empty() {
        return Err(MetaEvalError::Join { missing });
    }

    dimensions
        .iter()
        .map(|dim| {
            let mut metric = Vec::with_capacity(ratings.len());
            let mut human = Vec::with_capacity(ratings.len());
            for r in ratings {
                let rating = r
                    .ratings
                    .get(dim)
                    .ok_or_else(|| MetaEvalError::UnknownDimension(dim.clone()))?;
                metric.push(scores[&(r.system_id.clone(), r.example_id.clone())]);
                human.push(*rating);
            }
            if metric.len() < 3 {
                return Err(MetaEvalError::InsufficientSamples {
                    required: 3,
                    got: metric.len(),
                });
            }
            let r = pearson(&metric, &human)?;
            let p = p_value(r, metric.len())?;
            let permutation_p_value = permutation
                .map(|t| permutation_p_value(&metric, &human, t.permutations, t.seed))
                .transpose()?;
            Ok(CorrelationResult {
                dimension: dim.clone(),
                n: metric.len(),
                r,
                p_value: p,
                significant_at_05: p < 0.05,
                permutation_p_value,
            })
        })
        .collect()
}

/// Metric scores read from a delimited file.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricScores {
    pub scores: BTreeMap<ScoreKey, f64>,
    /// The `# ...` header line, if the file carried one.
    pub signature: Option<String>,
}

/// Reads `system_id,example_id,score` rows. Files written by the score
/// command are accepted too: their `final` column is used.
pub fn load_metric_scores(path: &Path) -> Result<MetricScores, DataError> {
    let text = std::fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
    let name = path.display().to_string();
    let mut signature = None;
    let mut body_start = 0usize;
    let mut skipped_lines = 0usize;
    for line in text.split_inclusive('\n') {
        if let Some(header) = line.strip_prefix('#') {
            if signature.is_none() {
                signature = Some(header.trim().to_string());
            }
            body_start += line.len();
            skipped_lines += 1;
        } else {
            break;
        }
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(&text.as_bytes()[body_start..]);
    let headers = reader
        .headers()
        .map_err(|e| DataError::parse(&name, skipped_lines + 1, e.to_string()))?
        .clone();
    let col = |wanted: &str| headers.iter().position(|h| h.trim() == wanted);
    let (sys, ex) = match (col("system_id"), col("example_id")) {
        (Some(s), Some(e)) => (s, e),
        _ => {
            return Err(DataError::parse(
                &name,
                skipped_lines + 1,
                "header must contain system_id and example_id",
            ))
        }
    };
    let value_col = col("score")
        .or_else(|| col("final"))
        .ok_or_else(|| DataError::parse(&name, skipped_lines + 1, "missing `score` column"))?;

    let mut scores = BTreeMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0) + skipped_lines;
            DataError::parse(&name, line, e.to_string())
        })?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0) + skipped_lines;
        let get = |i: usize| {
            record
                .get(i)
                .map(str::trim)
                .ok_or_else(|| DataError::parse(&name, line, format!("missing column {}", i + 1)))
        };
        let cell = get(value_col)?;
        let value: f64 = cell
            .parse()
            .map_err(|_| DataError::parse(&name, line, format!("non-numeric score {cell:?}")))?;
        let key = (get(sys)?.to_string(), get(ex)?.to_string());
        if scores.insert(key.clone(), value).is_some() {
            return Err(DataError::parse(
                &name,
                line,
                format!("duplicate score for {}/{}", key.0, key.1),
            ));
        }
    }
    Ok(MetricScores { scores, signature })
}

/// Renders a correlation table as CSV, preceded by `# ` metadata lines.
pub fn render_correlations(results: &[CorrelationResult], metadata: &[String]) -> String {
    let mut out = String::new();
    for m in metadata {
        out.push_str("# ");
        out.push_str(m);
        out.push('\n');
    }
    out.push_str("dimension,n,r,p_value,significant_at_05,permutation_p_value\n");
    for r in results {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.dimension,
            r.n,
            r.r,
            r.p_value,
            r.significant_at_05,
            r.permutation_p_value.map(|p| p.to_string()).unwrap_or_default()
        ));
    }
    out
}
