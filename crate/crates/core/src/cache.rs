//! Content-addressed store for backend responses.
//!
//! Layout under the root:
//!
//! ```text
//! <root>/<namespace digest>/namespace      the namespace string
//! <root>/<namespace digest>/manifest.tsv   digest \t op \t size, one per line
//! <root>/<namespace digest>/<digest>.json  raw response bytes
//! ```
//!
//! Entries are never rewritten. Putting a different value under an existing
//! key is an error; putting the same value again is a no-op.

use std::collections::HashMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::SystemTime;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::backends::{canonical_body, AnswerPrediction, Backend, BackendSignature, QaPair};
use crate::data_model::Modality;
use crate::error::{BackendError, CacheError};

const MANIFEST: &str = "manifest.tsv";
const NAMESPACE_FILE: &str = "namespace";
const NAMESPACE_DIGEST_LEN: usize = 16;

fn sha256_hex(parts: &[&[u8]]) -> String {
    let mut hasher = Sha256::new();
    for (i, part) in parts.iter().enumerate() {
        if i > 0 {
            hasher.update([0x1f]);
        }
        hasher.update(part);
    }
    hex::encode(hasher.finalize())
}

/// Directory name for a namespace.
pub fn namespace_digest(namespace: &str) -> String {
    sha256_hex(&[namespace.as_bytes()])[..NAMESPACE_DIGEST_LEN].to_string()
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CacheKey {
    pub namespace: String,
    pub op: String,
    /// Hex SHA-256 of namespace, op and canonical request.
    pub digest: String,
}

impl CacheKey {
    pub fn new(namespace: &str, op: &str, canonical_request: &str) -> Self {
        CacheKey {
            namespace: namespace.to_string(),
            op: op.to_string(),
            digest: sha256_hex(&[namespace.as_bytes(), op.as_bytes(), canonical_request.as_bytes()]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CacheEntry {
    pub key: CacheKey,
    pub value: Vec<u8>,
    /// File modification time; not part of the key.
    pub created_at: Option<SystemTime>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheStats {
    pub entries: usize,
    pub hits: usize,
    pub misses: usize,
}

#[derive(Debug, Default)]
struct Counters {
    entries: usize,
    hits: usize,
    misses: usize,
}

#[derive(Debug)]
pub struct CacheStore {
    root: PathBuf,
    counters: Mutex<Counters>,
    /// Serializes writers; readers never take it.
    write_lock: Mutex<()>,
}

fn count_manifest_lines(path: &Path) -> Result<usize, CacheError> {
    match fs::read_to_string(path) {
        Ok(text) => Ok(text.lines().filter(|l| !l.trim().is_empty()).count()),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(0),
        Err(e) => Err(CacheError::io(path, e)),
    }
}

impl CacheStore {
    /// Opens or creates a store at `root`.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, CacheError> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|e| CacheError::io(&root, e))?;
        let mut entries = 0;
        for dir in fs::read_dir(&root).map_err(|e| CacheError::io(&root, e))? {
            let dir = dir.map_err(|e| CacheError::io(&root, e))?.path();
            if dir.is_dir() {
                entries += count_manifest_lines(&dir.join(MANIFEST))?;
            }
        }
        Ok(CacheStore {
            root,
            counters: Mutex::new(Counters {
                entries,
                ..Counters::default()
            }),
            write_lock: Mutex::new(()),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn namespace_dir(&self, namespace: &str) -> PathBuf {
        self.root.join(namespace_digest(namespace))
    }

    fn entry_path(&self, key: &CacheKey) -> PathBuf {
        self.namespace_dir(&key.namespace).join(format!("{}.json", key.digest))
    }

    pub fn get(&self, key: &CacheKey) -> Result<Option<CacheEntry>, CacheError> {
        let path = self.entry_path(key);
        let found = match fs::read(&path) {
            Ok(value) => {
                let created_at = fs::metadata(&path).and_then(|m| m.modified()).ok();
                Some(CacheEntry {
                    key: key.clone(),
                    value,
                    created_at,
                })
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => None,
            Err(e) => return Err(CacheError::io(&path, e)),
        };
        let mut c = self.counters.lock().expect("cache counters poisoned");
        if found.is_some() {
            c.hits += 1;
        } else {
            c.misses += 1;
        }
        Ok(found)
    }

    pub fn put(&self, key: &CacheKey, value: &[u8]) -> Result<(), CacheError> {
        let _guard = self.write_lock.lock().expect("cache write lock poisoned");
        let dir = self.namespace_dir(&key.namespace);
        let path = self.entry_path(key);
        match fs::read(&path) {
            Ok(existing) if existing == value => return Ok(()),
            Ok(_) => {
                return Err(CacheError::Consistency {
                    key: key.digest.clone(),
                })
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
            Err(e) => return Err(CacheError::io(&path, e)),
        }

        fs::create_dir_all(&dir).map_err(|e| CacheError::io(&dir, e))?;
        let ns_file = dir.join(NAMESPACE_FILE);
        if !ns_file.exists() {
            fs::write(&ns_file, key.namespace.as_bytes()).map_err(|e| CacheError::io(&ns_file, e))?;
        }
        let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(|e| CacheError::io(&dir, e))?;
        tmp.write_all(value).map_err(|e| CacheError::io(&path, e))?;
        tmp.persist_noclobber(&path)
            .map_err(|e| CacheError::io(&path, e.error))?;

        let manifest = dir.join(MANIFEST);
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&manifest)
            .map_err(|e| CacheError::io(&manifest, e))?;
        writeln!(f, "{}\t{}\t{}", key.digest, key.op, value.len()).map_err(|e| CacheError::io(&manifest, e))?;

        self.counters.lock().expect("cache counters poisoned").entries += 1;
        Ok(())
    }

    pub fn stats(&self) -> CacheStats {
        let c = self.counters.lock().expect("cache counters poisoned");
        CacheStats {
            entries: c.entries,
            hits: c.hits,
            misses: c.misses,
        }
    }

    /// Namespaces present on disk, sorted.
    pub fn namespaces(&self) -> Result<Vec<String>, CacheError> {
        let mut out = Vec::new();
        for dir in fs::read_dir(&self.root).map_err(|e| CacheError::io(&self.root, e))? {
            let dir = dir.map_err(|e| CacheError::io(&self.root, e))?.path();
            let file = dir.join(NAMESPACE_FILE);
            if file.is_file() {
                out.push(fs::read_to_string(&file).map_err(|e| CacheError::io(&file, e))?);
            }
        }
        out.sort();
        Ok(out)
    }

    /// Deletes every entry of `namespace`. Returns the number removed.
    pub fn purge(&self, namespace: &str) -> Result<usize, CacheError> {
        let _guard = self.write_lock.lock().expect("cache write lock poisoned");
        let dir = self.namespace_dir(namespace);
        if !dir.exists() {
            return Ok(0);
        }
        let removed = count_manifest_lines(&dir.join(MANIFEST))?;
        fs::remove_dir_all(&dir).map_err(|e| CacheError::io(&dir, e))?;
        let mut c = self.counters.lock().expect("cache counters poisoned");
        c.entries = c.entries.saturating_sub(removed);
        Ok(removed)
    }
}

/// Memoizes an inner backend's responses in a [`CacheStore`]. Errors are
/// passed through uncached.
pub struct CachedBackend<B> {
    inner: B,
    store: Arc<CacheStore>,
    namespace: String,
}

impl<B: Backend> CachedBackend<B> {
    pub fn new(inner: B, store: Arc<CacheStore>) -> Self {
        let namespace = inner.cache_namespace();
        CachedBackend { inner, store, namespace }
    }

    pub fn store(&self) -> &CacheStore {
        &self.store
    }

    pub fn inner(&self) -> &B {
        &self.inner
    }

    fn memoize<T>(
        &self,
        op: &str,
        request: Value,
        decode: impl Fn(&Value) -> Option<T>,
        encode: impl Fn(&T) -> Value,
        compute: impl FnOnce() -> Result<T, BackendError>,
    ) -> Result<T, BackendError> {
        let key = CacheKey::new(&self.namespace, op, &canonical_body(&request));
        let cache_err = |e: CacheError| BackendError::Cache(e.to_string());
        if let Some(entry) = self.store.get(&key).map_err(cache_err)? {
            let corrupt = || {
                cache_err(CacheError::StoreCorrupt {
                    key: key.digest.clone(),
                    reason: format!("stored `{op}` response does not parse"),
                })
            };
            let value: Value = serde_json::from_slice(&entry.value).map_err(|_| corrupt())?;
            return decode(&value).ok_or_else(corrupt);
        }
        let result = compute()?;
        let bytes = canonical_body(&encode(&result)).into_bytes();
        self.store.put(&key, &bytes).map_err(cache_err)?;
        Ok(result)
    }
}

fn decode_pairs(v: &Value) -> Option<Vec<QaPair>> {
    v.get("pairs")?
        .as_array()?
        .iter()
        .map(|p| {
            let pair = QaPair {
                question: p.get("question")?.as_str()?.to_string(),
                answer: p.get("answer")?.as_str()?.to_string(),
            };
            pair.validate().ok().map(|_| pair)
        })
        .collect()
}

fn decode_prediction(v: &Value) -> Option<AnswerPrediction> {
    let p = AnswerPrediction {
        text: v.get("answer")?.as_str()?.to_string(),
        unanswerable: v.get("unanswerable")?.as_bool()?,
        confidence: v.get("confidence")?.as_f64()?,
    };
    p.validate().ok().map(|_| p)
}

fn decode_vectors(v: &Value) -> Option<Vec<Vec<f64>>> {
    v.get("vectors")?
        .as_array()?
        .iter()
        .map(|row| row.as_array()?.iter().map(Value::as_f64).collect())
        .collect()
}

impl<B: Backend> Backend for CachedBackend<B> {
    fn signature(&self) -> &BackendSignature {
        self.inner.signature()
    }

    fn cache_namespace(&self) -> String {
        self.namespace.clone()
    }

    fn generate_qa_pairs(
        &self,
        context: &str,
        modality: Modality,
        max_questions: usize,
    ) -> Result<Vec<QaPair>, BackendError> {
        let request = json!({
            "context": context,
            "modality": modality.as_str(),
            "max_questions": max_questions,
        });
        self.memoize(
            "qg",
            request,
            decode_pairs,
            |pairs| json!({ "pairs": pairs.iter().map(|p| json!({"question": p.question, "answer": p.answer})).collect::<Vec<_>>() }),
            || self.inner.generate_qa_pairs(context, modality, max_questions),
        )
    }

    fn answer(
        &self,
        question: &str,
        context: &str,
        modality: Modality,
    ) -> Result<AnswerPrediction, BackendError> {
        let request = json!({
            "question": question,
            "context": context,
            "modality": modality.as_str(),
        });
        self.memoize(
            "qa",
            request,
            decode_prediction,
            |p| json!({"answer": p.text, "unanswerable": p.unanswerable, "confidence": p.confidence}),
            || self.inner.answer(question, context, modality),
        )
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, BackendError> {
        self.memoize(
            "embed",
            json!({ "texts": texts }),
            decode_vectors,
            |vectors| json!({ "vectors": vectors }),
            || self.inner.embed(texts),
        )
    }
}

/// Per-namespace entry counts, keyed by namespace string.
pub fn namespace_sizes(store: &CacheStore) -> Result<HashMap<String, usize>, CacheError> {
    store
        .namespaces()?
        .into_iter()
        .map(|ns| {
            let n = count_manifest_lines(&store.namespace_dir(&ns).join(MANIFEST))?;
            Ok((ns, n))
        })
        .collect()
}
