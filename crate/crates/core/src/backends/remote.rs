//! HTTP client for the model service.
//!
//! Request bodies are JSON objects with keys in sorted order and no volatile
//! fields, so identical calls produce identical bytes.

use std::time::Duration;

use serde_json::{json, Map, Value};

use super::{dedup_pairs, AnswerPrediction, Backend, BackendSignature, QaPair};
use crate::data_model::Modality;
use crate::error::BackendError;

pub struct RemoteBackend {
    agent: ureq::Agent,
    base: String,
    retries: u32,
    signature: BackendSignature,
}

impl std::fmt::Debug for RemoteBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteBackend")
            .field("base", &self.base)
            .field("retries", &self.retries)
            .field("signature", &self.signature)
            .finish()
    }
}

fn protocol(field: impl Into<String>, reason: impl Into<String>) -> BackendError {
    BackendError::Protocol {
        field: field.into(),
        reason: reason.into(),
    }
}

fn field<'a>(obj: &'a Map<String, Value>, name: &str) -> Result<&'a Value, BackendError> {
    obj.get(name).ok_or_else(|| protocol(name, "missing"))
}

fn str_field(obj: &Map<String, Value>, name: &str) -> Result<String, BackendError> {
    field(obj, name)?
        .as_str()
        .map(str::to_owned)
        .ok_or_else(|| protocol(name, "expected a string"))
}

fn as_object<'a>(value: &'a Value, name: &str) -> Result<&'a Map<String, Value>, BackendError> {
    value.as_object().ok_or_else(|| protocol(name, "expected an object"))
}

/// Canonical JSON rendering of a request body.
pub(crate) fn canonical_body(value: &Value) -> String {
    // serde_json's default map is a BTreeMap, so keys come out sorted.
    serde_json::to_string(value).expect("JSON values always serialize")
}

impl RemoteBackend {
    /// Connects to `endpoint` and caches its `/signature`.
    pub fn connect(endpoint: &str, timeout: Duration, retries: u32) -> Result<Self, BackendError> {
        let agent = ureq::AgentBuilder::new().timeout(timeout).build();
        let mut backend = RemoteBackend {
            agent,
            base: endpoint.trim_end_matches('/').to_string(),
            retries,
            signature: BackendSignature::uniform("pending"),
        };
        let body = backend.call("GET", "/signature", None)?;
        let obj = as_object(&body, "<body>")?;
        let signature = BackendSignature {
            text_qg_id: str_field(obj, "text_qg_id")?,
            text_qa_id: str_field(obj, "text_qa_id")?,
            data_qg_id: str_field(obj, "data_qg_id")?,
            data_qa_id: str_field(obj, "data_qa_id")?,
            embed_id: str_field(obj, "embed_id")?,
            protocol_version: str_field(obj, "protocol_version")?,
        };
        signature.validate()?;
        backend.signature = signature;
        Ok(backend)
    }

    pub fn endpoint(&self) -> &str {
        &self.base
    }

    /// One logical call: up to `retries + 1` attempts. Transport failures and
    /// 5xx responses are retried; 422 and other statuses are not.
    fn call(&self, method: &str, path: &str, body: Option<&Value>) -> Result<Value, BackendError> {
        let url = format!("{}{}", self.base, path);
        let payload = body.map(canonical_body);
        let attempts = self.retries + 1;
        let mut last_error = String::new();

        for _ in 0..attempts {
            let request = self.agent.request(method, &url);
            let result = match &payload {
                Some(p) => request
                    .set("Content-Type", "application/json")
                    .send_string(p),
                None => request.call(),
            };
            match result {
                Ok(response) => {
                    let text = response
                        .into_string()
                        .map_err(|e| protocol("<body>", format!("unreadable body: {e}")))?;
                    return serde_json::from_str(&text)
                        .map_err(|e| protocol("<body>", format!("invalid JSON: {e}")));
                }
                Err(ureq::Error::Status(422, response)) => {
                    let detail = response.into_string().unwrap_or_default();
                    return Err(BackendError::InvalidInput(format!(
                        "{path} rejected the request body: {detail}"
                    )));
                }
                Err(ureq::Error::Status(code, _)) if code >= 500 => {
                    last_error = format!("{path} returned status {code}");
                }
                Err(ureq::Error::Status(code, _)) => {
                    return Err(protocol("<status>", format!("{path} returned status {code}")));
                }
                Err(ureq::Error::Transport(t)) => {
                    last_error = format!("{path}: {t}");
                }
            }
        }
        Err(BackendError::Unavailable {
            attempts,
            reason: last_error,
        })
    }
}

impl Backend for RemoteBackend {
    fn signature(&self) -> &BackendSignature {
        &self.signature
    }

    fn generate_qa_pairs(
        &self,
        context: &str,
        modality: Modality,
        max_questions: usize,
    ) -> Result<Vec<QaPair>, BackendError> {
        if max_questions == 0 {
            return Err(BackendError::InvalidInput("max_questions must be positive".into()));
        }
        if context.trim().is_empty() {
            return Err(BackendError::InvalidContext("empty context".into()));
        }
        let body = json!({
            "context": context,
            "modality": modality.as_str(),
            "max_questions": max_questions,
        });
        let response = self.call("POST", "/qg", Some(&body))?;
        let obj = as_object(&response, "<body>")?;
        let raw_pairs = field(obj, "pairs")?
            .as_array()
            .ok_or_else(|| protocol("pairs", "expected an array"))?;
        let mut pairs = Vec::with_capacity(raw_pairs.len());
        for (i, raw) in raw_pairs.iter().enumerate() {
            let name = format!("pairs[{i}]");
            let item = as_object(raw, &name)?;
            let pair = QaPair {
                question: str_field(item, "question")
                    .map_err(|_| protocol(format!("{name}.question"), "expected a string"))?,
                answer: str_field(item, "answer")
                    .map_err(|_| protocol(format!("{name}.answer"), "expected a string"))?,
            };
            pair.validate()
                .map_err(|e| protocol(name.clone(), e.to_string()))?;
            pairs.push(pair);
        }
        let mut pairs = dedup_pairs(pairs);
        pairs.truncate(max_questions);
        Ok(pairs)
    }

    fn answer(
        &self,
        question: &str,
        context: &str,
        modality: Modality,
    ) -> Result<AnswerPrediction, BackendError> {
        if question.trim().is_empty() {
            return Err(BackendError::InvalidInput("empty question".into()));
        }
        if context.trim().is_empty() {
            return Ok(AnswerPrediction::unanswerable(1.0));
        }
        let body = json!({
            "question": question,
            "context": context,
            "modality": modality.as_str(),
        });
        let response = self.call("POST", "/qa", Some(&body))?;
        let obj = as_object(&response, "<body>")?;
        let prediction = AnswerPrediction {
            text: str_field(obj, "answer")?,
            unanswerable: field(obj, "unanswerable")?
                .as_bool()
                .ok_or_else(|| protocol("unanswerable", "expected a boolean"))?,
            confidence: field(obj, "confidence")?
                .as_f64()
                .ok_or_else(|| protocol("confidence", "expected a number"))?,
        };
        prediction.validate()?;
        Ok(prediction)
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, BackendError> {
        if texts.is_empty() {
            return Err(BackendError::InvalidInput("no texts to embed".into()));
        }
        let body = json!({ "texts": texts });
        let response = self.call("POST", "/embed", Some(&body))?;
        let obj = as_object(&response, "<body>")?;
        let dim = field(obj, "dim")?
            .as_u64()
            .ok_or_else(|| protocol("dim", "expected a non-negative integer"))? as usize;
        let rows = field(obj, "vectors")?
            .as_array()
            .ok_or_else(|| protocol("vectors", "expected an array"))?;
        if rows.len() != texts.len() {
            return Err(protocol(
                "vectors",
                format!("expected {} vectors, got {}", texts.len(), rows.len()),
            ));
        }
        rows.iter()
            .enumerate()
            .map(|(i, row)| {
                let name = format!("vectors[{i}]");
                let values = row
                    .as_array()
                    .ok_or_else(|| protocol(name.clone(), "expected an array"))?;
                if values.len() != dim {
                    return Err(protocol(
                        name,
                        format!("expected dimension {dim}, got {}", values.len()),
                    ));
                }
                let vector: Vec<f64> = values
                    .iter()
                    .map(|v| v.as_f64().ok_or_else(|| protocol(name.clone(), "expected numbers")))
                    .collect::<Result<_, _>>()?;
                if vector.iter().all(|v| *v == 0.0) {
                    return Err(protocol(name, "zero vector"));
                }
                Ok(vector)
            })
            .collect()
    }
}
