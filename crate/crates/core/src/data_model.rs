//! Structured inputs, text passages, and their deterministic linearization.
//!
//! A triple set is rendered as `subject | predicate | object` entries and a
//! table as `key : value` entries, joined by ` [SEP] ` in input order.
//! Triple fields are entity-normalized on the way out, so
//! `101_helena | discoverer | james_craig_watson` linearizes to
//! `101 helena | discoverer | james craig watson`.

use serde::{Deserialize, Serialize};

use crate::error::DataError;

/// Joins the entries of a linearized input.
pub const RECORD_SEPARATOR: &str = " [SEP] ";
/// Reserved token that may never appear inside a field.
pub const SEP_TOKEN: &str = "[SEP]";
/// Separates the three fields of a linearized triple.
pub const TRIPLE_FIELD_SEPARATOR: &str = " | ";
/// Separates key and value of a linearized table row.
pub const TABLE_FIELD_SEPARATOR: &str = " : ";

/// Replaces underscores with spaces, collapses whitespace and trims.
///
/// Casing is preserved. The function is idempotent.
pub fn normalize_entity(raw: &str) -> Result<String, DataError> {
    let normalized = raw.replace('_', " ").split_whitespace().collect::<Vec<_>>().join(" ");
    if normalized.is_empty() {
        return Err(DataError::InvalidEntity {
            field: raw.to_string(),
            reason: "empty after normalization".to_string(),
        });
    }
    Ok(normalized)
}

fn check_field(name: &str, value: &str) -> Result<String, DataError> {
    let trimmed = value.trim();
    if trimmed.is_empty() {
        return Err(DataError::InvalidEntity {
            field: name.to_string(),
            reason: "empty field".to_string(),
        });
    }
    if trimmed.contains(SEP_TOKEN) {
        return Err(DataError::InvalidEntity {
            field: format!("{name}={trimmed}"),
            reason: format!("contains reserved token {SEP_TOKEN}"),
        });
    }
    if trimmed.contains('|') {
        return Err(DataError::InvalidEntity {
            field: format!("{name}={trimmed}"),
            reason: "contains reserved character |".to_string(),
        });
    }
    if trimmed.contains('\n') || trimmed.contains('\t') {
        return Err(DataError::InvalidEntity {
            field: format!("{name}={trimmed}"),
            reason: "contains a tab or line break".to_string(),
        });
    }
    Ok(trimmed.to_string())
}

/// A single RDF-style fact.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Triple {
    subject: String,
    predicate: String,
    object: String,
}

impl Triple {
    pub fn new(subject: &str, predicate: &str, object: &str) -> Result<Self, DataError> {
        let triple = Triple {
            subject: check_field("subject", subject)?,
            predicate: check_field("predicate", predicate)?,
            object: check_field("object", object)?,
        };
        // Underscore-only fields survive the emptiness check above but not normalization.
        triple.normalized()?;
        Ok(triple)
    }

    /// Parses the `s | p | o` notation used by WebNLG and the canonical format.
    pub fn parse(raw: &str) -> Result<Self, DataError> {
        let parts: Vec<&str> = raw.split('|').collect();
        if parts.len() != 3 {
            return Err(DataError::InvalidEntity {
                field: raw.to_string(),
                reason: format!("expected 3 `|`-separated fields, found {}", parts.len()),
            });
        }
        Triple::new(parts[0], parts[1], parts[2])
    }

    pub fn subject(&self) -> &str {
        &self.subject
    }

    pub fn predicate(&self) -> &str {
        &self.predicate
    }

    pub fn object(&self) -> &str {
        &self.object
    }

    /// The triple with every field passed through [`normalize_entity`].
    pub fn normalized(&self) -> Result<Triple, DataError> {
        Ok(Triple {
            subject: normalize_entity(&self.subject)?,
            predicate: normalize_entity(&self.predicate)?,
            object: normalize_entity(&self.object)?,
        })
    }
}

/// One row of an attribute-value table (infobox, meaning representation).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AttributeValue {
    key: String,
    value: String,
}

impl AttributeValue {
    pub fn new(key: &str, value: &str) -> Result<Self, DataError> {
        let key = check_field("key", key)?;
        if key.contains(TABLE_FIELD_SEPARATOR.trim()) {
            return Err(DataError::InvalidEntity {
                field: format!("key={key}"),
                reason: "table keys may not contain `:`".to_string(),
            });
        }
        let value = check_field("value", value)?;
        Ok(AttributeValue { key, value })
    }

    pub fn key(&self) -> &str {
        &self.key
    }

    pub fn value(&self) -> &str {
        &self.value
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum StructuredContent {
    TripleSet(Vec<Triple>),
    Table(Vec<AttributeValue>),
}

impl StructuredContent {
    pub fn len(&self) -> usize {
        match self {
            StructuredContent::TripleSet(t) => t.len(),
            StructuredContent::Table(t) => t.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// The data side of every comparison.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructuredInput {
    id: String,
    content: StructuredContent,
}

impl StructuredInput {
    pub fn new(id: impl Into<String>, content: StructuredContent) -> Result<Self, DataError> {
        let id = id.into();
        if content.is_empty() {
            return Err(DataError::InvalidEntity {
                field: format!("input {id}"),
                reason: "structured input has no entries".to_string(),
            });
        }
        Ok(StructuredInput { id, content })
    }

    pub fn triples(id: impl Into<String>, triples: Vec<Triple>) -> Result<Self, DataError> {
        Self::new(id, StructuredContent::TripleSet(triples))
    }

    pub fn table(id: impl Into<String>, rows: Vec<AttributeValue>) -> Result<Self, DataError> {
        Self::new(id, StructuredContent::Table(rows))
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn content(&self) -> &StructuredContent {
        &self.content
    }

    /// Number of triples or table rows.
    pub fn size(&self) -> usize {
        self.content.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Text,
    Data,
}

impl Modality {
    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Text => "text",
            Modality::Data => "data",
        }
    }
}

impl std::fmt::Display for Modality {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinearizedInput {
    pub text: String,
    pub modality: Modality,
    pub source_id: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PassageRole {
    Hypothesis,
    Reference,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextPassage {
    text: String,
    role: PassageRole,
}

impl TextPassage {
    pub fn hypothesis(text: impl Into<String>) -> Self {
        TextPassage {
            text: text.into(),
            role: PassageRole::Hypothesis,
        }
    }

    pub fn reference(text: impl Into<String>) -> Result<Self, DataError> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(DataError::InvalidEntity {
                field: "reference".to_string(),
                reason: "references may not be empty".to_string(),
            });
        }
        Ok(TextPassage {
            text,
            role: PassageRole::Reference,
        })
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn role(&self) -> PassageRole {
        self.role
    }
}

/// One parsed entry of a linearization.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LinearEntry {
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

/// Flattens a structured input into a single string.
pub fn linearize(input: &StructuredInput) -> LinearizedInput {
    let entries: Vec<String> = match input.content() {
        StructuredContent::TripleSet(triples) => triples
            .iter()
            .map(|t| {
                // Construction guarantees every field normalizes.
                let n = t.normalized().expect("validated triple");
                format!(
                    "{}{sep}{}{sep}{}",
                    n.subject,
                    n.predicate,
                    n.object,
                    sep = TRIPLE_FIELD_SEPARATOR
                )
            })
            .collect(),
        StructuredContent::Table(rows) => rows
            .iter()
            .map(|r| format!("{}{}{}", r.key, TABLE_FIELD_SEPARATOR, r.value))
            .collect(),
    };
    LinearizedInput {
        text: entries.join(RECORD_SEPARATOR),
        modality: Modality::Data,
        source_id: input.id().to_string(),
    }
}

/// Splits a linearization back into its entries.
///
/// Returns `None` when any entry is neither a triple nor a table row.
pub fn parse_linearization(text: &str) -> Option<Vec<LinearEntry>> {
    if text.trim().is_empty() {
        return None;
    }
    text.split(RECORD_SEPARATOR)
        .map(|entry| {
            let fields: Vec<&str> = entry.split(TRIPLE_FIELD_SEPARATOR).collect();
            match fields.as_slice() {
                [s, p, o] if !s.is_empty() && !p.is_empty() && !o.is_empty() => {
                    Some(LinearEntry::Triple {
                        subject: s.to_string(),
                        predicate: p.to_string(),
                        object: o.to_string(),
                    })
                }
                [_] => {
                    let (key, value) = entry.split_once(TABLE_FIELD_SEPARATOR)?;
                    (!key.is_empty() && !value.is_empty()).then(|| LinearEntry::Row {
                        key: key.to_string(),
                        value: value.to_string(),
                    })
                }
                _ => None,
            }
        })
        .collect()
}

/// Renders an input as template sentences: `The <predicate> of <subject> is <object> .`
/// for triples and `The <key> is <value> .` for table rows.
///
/// These are the only free-text forms the oracle backend's text QG parses.
pub fn template_verbalize(input: &StructuredInput) -> String {
    match input.content() {
        StructuredContent::TripleSet(triples) => triples
            .iter()
            .map(|t| {
                let n = t.normalized().expect("validated triple");
                format!("The {} of {} is {} .", n.predicate, n.subject, n.object)
            })
            .collect::<Vec<_>>()
            .join(" "),
        StructuredContent::Table(rows) => rows
            .iter()
            .map(|r| format!("The {} is {} .", r.key, r.value))
            .collect::<Vec<_>>()
            .join(" "),
    }
}
