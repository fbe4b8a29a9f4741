//! Dataset, rating, and synthetic-corpus file formats.
//!
//! The canonical dataset format is JSON lines, one example per line:
//!
//! ```text
//! {"id":"e1","triples":["101_helena | discoverer | james_craig_watson"],"references":["..."],"split":"train"}
//! {"id":"e2","table":[{"key":"name","value":"john doe"}],"references":[],"split":"test"}
//! ```
//!
//! Adapters convert a documented subset of the native WebNLG, WikiBio and E2E
//! releases into the same [`DtgExample`] values.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data_model::{AttributeValue, StructuredInput, Triple};
use crate::error::DataError;
use crate::scoring::contains_normalized;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    /// Guesses the split from a file name (`train`, `dev`/`valid`, `test`);
    /// defaults to train.
    pub fn infer_from_path(path: &Path) -> Split {
        let stem = path
            .file_name()
            .map(|s| s.to_string_lossy().to_lowercase())
            .unwrap_or_default();
        if stem.contains("test") {
            Split::Test
        } else if stem.contains("dev") || stem.contains("valid") {
            Split::Dev
        } else {
            Split::Train
        }
    }
}

/// A structured input paired with its gold descriptions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DtgExample {
    pub id: String,
    pub input: StructuredInput,
    pub references: Vec<String>,
    pub split: Split,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetFormat {
    /// JSON lines in the canonical schema.
    Canonical,
    /// WebNLG XML: `<entry eid=..>` elements holding `<mtriple>` and `<lex>` children.
    WebnlgTriples,
    /// WikiBio as JSON lines with `input_text.table.{column_header,content}`
    /// and `target_text`.
    WikibioInfobox,
    /// E2E CSV with `mr` and `ref` columns; consecutive rows sharing an MR
    /// form one example.
    E2eMr,
}

impl std::str::FromStr for DatasetFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "canonical" => Ok(DatasetFormat::Canonical),
            "webnlg-triples" => Ok(DatasetFormat::WebnlgTriples),
            "wikibio-infobox" => Ok(DatasetFormat::WikibioInfobox),
            "e2e-mr" => Ok(DatasetFormat::E2eMr),
            other => Err(format!(
                "unknown dataset format `{other}` (expected canonical, webnlg-triples, wikibio-infobox or e2e-mr)"
            )),
        }
    }
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct CanonicalRow {
    key: String,
    value: String,
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct CanonicalRecord {
    id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    triples: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    table: Option<Vec<CanonicalRow>>,
    #[serde(default)]
    references: Vec<String>,
    split: Split,
}

fn read_to_string(path: &Path) -> Result<String, DataError> {
    fs::read_to_string(path).map_err(|e| DataError::io(path, e))
}

/// Entity errors surface with the record they came from.
fn at_line(path: &str, line: usize, err: DataError) -> DataError {
    match err {
        DataError::InvalidEntity { field, reason } => DataError::InvalidEntity {
            field: format!("{path}:{line}: {field}"),
            reason,
        },
        other => other,
    }
}

/// Loads a dataset file; example order follows the file.
pub fn load_dtg_dataset(path: &Path, format: DatasetFormat) -> Result<Vec<DtgExample>, DataError> {
    let text = read_to_string(path)?;
    let name = path.display().to_string();
    let examples = match format {
        DatasetFormat::Canonical => parse_canonical(&name, &text)?,
        DatasetFormat::WebnlgTriples => parse_webnlg(&name, &text, Split::infer_from_path(path))?,
        DatasetFormat::WikibioInfobox => parse_wikibio(&name, &text, Split::infer_from_path(path))?,
        DatasetFormat::E2eMr => parse_e2e(&name, &text, Split::infer_from_path(path))?,
    };
    check_examples(&name, &examples)?;
    Ok(examples)
}

fn check_examples(name: &str, examples: &[DtgExample]) -> Result<(), DataError> {
    let mut seen = HashSet::new();
    for (idx, ex) in examples.iter().enumerate() {
        if !seen.insert((ex.split, ex.id.as_str())) {
            return Err(DataError::parse(name, idx + 1, format!("duplicate example id {}", ex.id)));
        }
        if ex.split == Split::Train && ex.references.iter().all(|r| r.trim().is_empty()) {
            return Err(DataError::parse(
                name,
                idx + 1,
                format!("training example {} has no reference", ex.id),
            ));
        }
    }
    Ok(())
}

fn parse_canonical(name: &str, text: &str) -> Result<Vec<DtgExample>, DataError> {
    let mut examples = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let record: CanonicalRecord = serde_json::from_str(line)
            .map_err(|e| DataError::parse(name, lineno, e.to_string()))?;
        let input = match (record.triples, record.table) {
            (Some(triples), None) => {
                let triples = triples
                    .iter()
                    .map(|t| Triple::parse(t))
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|e| at_line(name, lineno, e))?;
                StructuredInput::triples(record.id.clone(), triples)
            }
            (None, Some(rows)) => {
                let rows = rows
                    .iter()
                    .map(|r| AttributeValue::new(&r.key, &r.value))
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|e| at_line(name, lineno, e))?;
                StructuredInput::table(record.id.clone(), rows)
            }
            _ => {
                return Err(DataError::parse(
                    name,
                    lineno,
                    "exactly one of `triples` or `table` is required",
                ))
            }
        }
        .map_err(|e| at_line(name, lineno, e))?;
        if record.id.trim().is_empty() {
            return Err(DataError::parse(name, lineno, "empty id"));
        }
        examples.push(DtgExample {
            id: record.id,
            input,
            references: record.references,
            split: record.split,
        });
    }
    Ok(examples)
}

/// Serializes examples in the canonical format.
pub fn write_canonical_dataset(examples: &[DtgExample], path: &Path) -> Result<(), DataError> {
    let mut out = String::new();
    for ex in examples {
        let (triples, table) = match ex.input.content() {
            crate::data_model::StructuredContent::TripleSet(ts) => (
                Some(
                    ts.iter()
                        .map(|t| format!("{} | {} | {}", t.subject(), t.predicate(), t.object()))
                        .collect(),
                ),
                None,
            ),
            crate::data_model::StructuredContent::Table(rows) => (
                None,
                Some(
                    rows.iter()
                        .map(|r| CanonicalRow {
                            key: r.key().to_string(),
                            value: r.value().to_string(),
                        })
                        .collect(),
                ),
            ),
        };
        let record = CanonicalRecord {
            id: ex.id.clone(),
            triples,
            table,
            references: ex.references.clone(),
            split: ex.split,
        };
        out.push_str(&serde_json::to_string(&record).expect("record serializes"));
        out.push('\n');
    }
    atomic_write(path, out.as_bytes()).map_err(|e| DataError::io(path, e))
}

fn line_of(text: &str, offset: usize) -> usize {
    text.as_bytes()[..offset.min(text.len())]
        .iter()
        .filter(|b| **b == b'\n')
        .count()
        + 1
}

fn parse_webnlg(name: &str, text: &str, split: Split) -> Result<Vec<DtgExample>, DataError> {
    use quick_xml::events::Event;
    use quick_xml::Reader;

    #[derive(PartialEq)]
    enum Capture {
        None,
        Triple,
        Lex,
    }

    let mut reader = Reader::from_str(text);
    let mut examples = Vec::new();
    let mut current: Option<(String, usize, Vec<Triple>, Vec<String>)> = None;
    let mut capture = Capture::None;
    let mut buffer = String::new();

    loop {
        let pos = reader.buffer_position() as usize;
        let event = reader
            .read_event()
            .map_err(|e| DataError::parse(name, line_of(text, pos), e.to_string()))?;
        let line = line_of(text, pos);
        match event {
            Event::Start(e) => match e.name().as_ref() {
                b"entry" => {
                    let eid = e
                        .try_get_attribute("eid")
                        .map_err(|err| DataError::parse(name, line, err.to_string()))?
                        .ok_or_else(|| DataError::parse(name, line, "entry without eid"))?;
                    let eid = eid
                        .unescape_value()
                        .map_err(|err| DataError::parse(name, line, err.to_string()))?
                        .into_owned();
                    current = Some((eid, line, Vec::new(), Vec::new()));
                }
                b"mtriple" if current.is_some() => {
                    capture = Capture::Triple;
                    buffer.clear();
                }
                b"lex" if current.is_some() => {
                    capture = Capture::Lex;
                    buffer.clear();
                }
                _ => {}
            },
            Event::Text(t) if capture != Capture::None => {
                let unescaped = t
                    .unescape()
                    .map_err(|err| DataError::parse(name, line, err.to_string()))?;
                buffer.push_str(&unescaped);
            }
            Event::CData(t) if capture != Capture::None => {
                buffer.push_str(&String::from_utf8_lossy(&t));
            }
            Event::End(e) => match e.name().as_ref() {
                b"mtriple" if capture == Capture::Triple => {
                    let triple = Triple::parse(buffer.trim()).map_err(|err| at_line(name, line, err))?;
                    if let Some(entry) = current.as_mut() {
                        entry.2.push(triple);
                    }
                    capture = Capture::None;
                }
                b"lex" if capture == Capture::Lex => {
                    let lex = buffer.split_whitespace().collect::<Vec<_>>().join(" ");
                    if let Some(entry) = current.as_mut() {
                        if !lex.is_empty() {
                            entry.3.push(lex);
                        }
                    }
                    capture = Capture::None;
                }
                b"entry" => {
                    if let Some((eid, start, triples, lexes)) = current.take() {
                        if triples.is_empty() {
                            return Err(DataError::parse(name, start, format!("entry {eid} has no mtriple")));
                        }
                        let input = StructuredInput::triples(eid.clone(), triples)
                            .map_err(|err| at_line(name, start, err))?;
                        examples.push(DtgExample {
                            id: eid,
                            input,
                            references: lexes,
                            split,
                        });
                    }
                }
                _ => {}
            },
            Event::Eof => break,
            _ => {}
        }
    }
    if current.is_some() {
        return Err(DataError::parse(name, line_of(text, text.len()), "unterminated entry"));
    }
    Ok(examples)
}

#[derive(Deserialize)]
struct WikiBioTable {
    column_header: Vec<String>,
    content: Vec<String>,
}

#[derive(Deserialize)]
struct WikiBioInput {
    table: WikiBioTable,
}

#[derive(Deserialize)]
struct WikiBioRecord {
    input_text: WikiBioInput,
    target_text: String,
}

fn parse_wikibio(name: &str, text: &str, split: Split) -> Result<Vec<DtgExample>, DataError> {
    let mut examples = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let record: WikiBioRecord =
            serde_json::from_str(line).map_err(|e| DataError::parse(name, lineno, e.to_string()))?;
        let table = record.input_text.table;
        if table.column_header.len() != table.content.len() {
            return Err(DataError::parse(
                name,
                lineno,
                format!(
                    "{} column headers but {} cells",
                    table.column_header.len(),
                    table.content.len()
                ),
            ));
        }
        let rows = table
            .column_header
            .iter()
            .zip(&table.content)
            .filter(|(_, v)| {
                let v = v.trim();
                !v.is_empty() && v != "<none>"
            })
            .map(|(k, v)| AttributeValue::new(k, v))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| at_line(name, lineno, e))?;
        let id = format!("wb-{}", examples.len());
        let input = StructuredInput::table(id.clone(), rows).map_err(|e| at_line(name, lineno, e))?;
        let reference = record.target_text.trim().to_string();
        examples.push(DtgExample {
            id,
            input,
            references: if reference.is_empty() { vec![] } else { vec![reference] },
            split,
        });
    }
    Ok(examples)
}

/// Parses `name[The Vaults], eatType[pub]` into table rows.
fn parse_mr(mr: &str) -> Result<Vec<AttributeValue>, String> {
    let mut rows = Vec::new();
    let mut rest = mr.trim();
    while !rest.is_empty() {
        let open = rest.find('[').ok_or_else(|| format!("missing `[` in {rest:?}"))?;
        let close = rest[open..]
            .find(']')
            .map(|c| c + open)
            .ok_or_else(|| format!("missing `]` in {rest:?}"))?;
        let key = rest[..open].trim().trim_start_matches(',').trim();
        let value = &rest[open + 1..close];
        rows.push(AttributeValue::new(key, value).map_err(|e| e.to_string())?);
        rest = rest[close + 1..].trim_start().trim_start_matches(',').trim_start();
    }
    if rows.is_empty() {
        return Err("empty meaning representation".into());
    }
    Ok(rows)
}

fn parse_e2e(name: &str, text: &str, split: Split) -> Result<Vec<DtgExample>, DataError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| DataError::parse(name, 1, e.to_string()))?
        .clone();
    let column = |wanted: &str| headers.iter().position(|h| h.trim().eq_ignore_ascii_case(wanted));
    let mr_col = column("mr").ok_or_else(|| DataError::parse(name, 1, "missing `mr` column"))?;
    let ref_col = column("ref");

    let mut examples: Vec<DtgExample> = Vec::new();
    let mut last_mr: Option<String> = None;
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            DataError::parse(name, line, e.to_string())
        })?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let mr = record
            .get(mr_col)
            .ok_or_else(|| DataError::parse(name, line, "missing mr cell"))?
            .trim()
            .to_string();
        let reference = ref_col
            .and_then(|c| record.get(c))
            .map(|r| r.trim().to_string())
            .filter(|r| !r.is_empty());

        if last_mr.as_deref() == Some(mr.as_str()) {
            if let (Some(ex), Some(r)) = (examples.last_mut(), reference) {
                ex.references.push(r);
            }
            continue;
        }
        let rows = parse_mr(&mr).map_err(|reason| DataError::parse(name, line, reason))?;
        let id = format!("e2e-{}", examples.len());
        let input = StructuredInput::table(id.clone(), rows).map_err(|e| at_line(name, line, e))?;
        examples.push(DtgExample {
            id,
            input,
            references: reference.into_iter().collect(),
            split,
        });
        last_mr = Some(mr);
    }
    Ok(examples)
}

/// A system output with its human ratings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatedOutput {
    pub system_id: String,
    pub example_id: String,
    pub hypothesis: String,
    pub ratings: BTreeMap<String, f64>,
}

const RATING_KEY_COLUMNS: [&str; 3] = ["system_id", "example_id", "hypothesis"];

/// Loads `system_id,example_id,hypothesis,<dim>...` rows.
pub fn load_ratings(path: &Path) -> Result<Vec<RatedOutput>, DataError> {
    load_outputs(path, true)
}

/// Loads system outputs to score. Rating columns are optional.
pub fn load_hypotheses(path: &Path) -> Result<Vec<RatedOutput>, DataError> {
    load_outputs(path, false)
}

fn load_outputs(path: &Path, require_dimensions: bool) -> Result<Vec<RatedOutput>, DataError> {
    let text = read_to_string(path)?;
    let name = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| DataError::parse(&name, 1, e.to_string()))?
        .clone();
    if headers.len() == 1 && headers.get(0).is_none_or(str::is_empty) && text.trim().is_empty() {
        return Ok(Vec::new());
    }
    for (i, expected) in RATING_KEY_COLUMNS.iter().enumerate() {
        if headers.get(i).map(str::trim) != Some(*expected) {
            return Err(DataError::parse(
                &name,
                1,
                format!("column {} must be `{expected}`", i + 1),
            ));
        }
    }
    let dimensions: Vec<String> = headers.iter().skip(3).map(|h| h.trim().to_string()).collect();
    if require_dimensions && dimensions.is_empty() {
        return Err(DataError::parse(&name, 1, "header declares no rating dimensions"));
    }

    let mut outputs = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            DataError::parse(&name, line, e.to_string())
        })?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let mut ratings = BTreeMap::new();
        for (offset, dim) in dimensions.iter().enumerate() {
            let cell = record
                .get(offset + 3)
                .ok_or_else(|| DataError::parse(&name, line, format!("missing column {dim}")))?
                .trim();
            let value: f64 = cell.parse().map_err(|_| {
                DataError::parse(&name, line, format!("non-numeric rating {cell:?} for {dim}"))
            })?;
            if !value.is_finite() {
                return Err(DataError::parse(&name, line, format!("non-finite rating for {dim}")));
            }
            ratings.insert(dim.clone(), value);
        }
        outputs.push(RatedOutput {
            system_id: record[0].trim().to_string(),
            example_id: record[1].trim().to_string(),
            hypothesis: record[2].to_string(),
            ratings,
        });
    }
    Ok(outputs)
}

/// Checks that every rated output points at a known example.
pub fn check_ratings_against(ratings: &[RatedOutput], examples: &[DtgExample]) -> Result<(), DataError> {
    let known: HashSet<&str> = examples.iter().map(|e| e.id.as_str()).collect();
    for (idx, r) in ratings.iter().enumerate() {
        if !known.contains(r.example_id.as_str()) {
            return Err(DataError::InvariantViolation {
                record: format!("rating row {} ({}/{})", idx + 1, r.system_id, r.example_id),
                reason: "example id not present in the dataset".into(),
            });
        }
    }
    Ok(())
}

/// One `(linearized input, question, answer)` training triple.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticQaRecord {
    pub example_id: String,
    pub linearized_input: String,
    pub question: String,
    pub answer: String,
    pub source_description: String,
    pub qg_signature: String,
}

impl SyntheticQaRecord {
    /// Non-empty question and answer; the answer occurs in the description.
    pub fn validate(&self) -> Result<(), DataError> {
        let violation = |reason: &str| DataError::InvariantViolation {
            record: format!("{}: {:?}", self.example_id, self.question),
            reason: reason.to_string(),
        };
        if self.question.trim().is_empty() {
            return Err(violation("empty question"));
        }
        if self.answer.trim().is_empty() {
            return Err(violation("empty answer"));
        }
        if !contains_normalized(&self.source_description, &self.answer) {
            return Err(violation("answer does not occur in the source description"));
        }
        Ok(())
    }
}

/// Writes `path` through a sibling temp file and an atomic rename.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

/// Renders records as JSON lines, optionally preceded by a `# <header>` line.
pub fn render_synthetic_corpus(records: &[SyntheticQaRecord], header: Option<&str>) -> Result<String, DataError> {
    let mut out = String::new();
    if let Some(h) = header {
        out.push_str("# ");
        out.push_str(h);
        out.push('\n');
    }
    for record in records {
        record.validate()?;
        out.push_str(&serde_json::to_string(record).expect("record serializes"));
        out.push('\n');
    }
    Ok(out)
}

pub fn write_synthetic_corpus(records: &[SyntheticQaRecord], path: &Path) -> Result<(), DataError> {
    let out = render_synthetic_corpus(records, None)?;
    atomic_write(path, out.as_bytes()).map_err(|e| DataError::io(path, e))
}

/// Reads a corpus file; blank lines and `#` header lines are skipped.
pub fn read_synthetic_corpus(path: &Path) -> Result<Vec<SyntheticQaRecord>, DataError> {
    let text = read_to_string(path)?;
    let name = path.display().to_string();
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|(idx, line)| {
            serde_json::from_str(line).map_err(|e| DataError::parse(&name, idx + 1, e.to_string()))
        })
        .collect()
}

/// Input and output sizes over a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub table_size_max: usize,
    pub table_size_mean: f64,
    pub target_len_max: usize,
    pub target_len_mean: f64,
}

/// Table size counts triples or rows; target length counts whitespace
/// tokens of the first reference (zero when there is none).
pub fn dataset_stats(examples: &[DtgExample]) -> Result<DatasetStats, DataError> {
    if examples.is_empty() {
        return Err(DataError::EmptyDataset);
    }
    let sizes: Vec<usize> = examples.iter().map(|e| e.input.size()).collect();
    let lengths: Vec<usize> = examples
        .iter()
        .map(|e| e.references.first().map_or(0, |r| r.split_whitespace().count()))
        .collect();
    let mean = |v: &[usize]| v.iter().sum::<usize>() as f64 / v.len() as f64;
    Ok(DatasetStats {
        table_size_max: sizes.iter().copied().max().unwrap_or(0),
        table_size_mean: mean(&sizes),
        target_len_max: lengths.iter().copied().max().unwrap_or(0),
        target_len_mean: mean(&lengths),
    })
}
