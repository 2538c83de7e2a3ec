use super::{BackendError, CompletionBackend, CompletionRequest, CompletionResponse, FinishReason};
use crate::rng::sha256_hex;
use serde::Deserialize;
use std::collections::HashMap;
use std::io::BufRead;
use std::path::Path;

/// Replays fixed responses keyed by the SHA-256 of the prompt.
///
/// Fixture files are JSONL; each line carries either the literal `prompt`
/// or its `prompt_sha256` (lowercase hex), plus `response` and an optional
/// `finish` flag. Sampling parameters are ignored.
#[derive(Debug, Clone, Default)]
pub struct RecordedBackend {
    responses: HashMap<String, CompletionResponse>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FixtureLine {
    #[serde(default)]
    prompt: Option<String>,
    #[serde(default)]
    prompt_sha256: Option<String>,
    response: String,
    #[serde(default)]
    finish: Option<FinishReason>,
    #[serde(default)]
    #[allow(dead_code)]
    note: Option<String>,
}

impl RecordedBackend {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, prompt: &str, response: impl Into<String>) {
        self.responses
            .insert(sha256_hex(prompt.as_bytes()), CompletionResponse::stop(response));
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }

    pub fn from_jsonl(path: impl AsRef<Path>) -> Result<Self, BackendError> {
        let file = std::fs::File::open(path.as_ref())
            .map_err(|e| BackendError::Unavailable(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_reader(std::io::BufReader::new(file))
    }

    pub fn from_reader(reader: impl BufRead) -> Result<Self, BackendError> {
        let mut out = RecordedBackend::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| BackendError::Unavailable(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: FixtureLine = serde_json::from_str(&line)
                .map_err(|e| BackendError::MalformedResponse(format!("fixture line {}: {e}", i + 1)))?;
            let key = match (entry.prompt, entry.prompt_sha256) {
                (Some(p), None) => sha256_hex(p.as_bytes()),
                (None, Some(h)) => h.to_ascii_lowercase(),
                _ => {
                    return Err(BackendError::MalformedResponse(format!(
                        "fixture line {}: need exactly one of prompt / prompt_sha256",
                        i + 1
                    )))
                }
            };
            out.responses.insert(
                key,
                CompletionResponse {
                    text: entry.response,
                    finish: entry.finish.unwrap_or(FinishReason::Stop),
                },
            );
        }
        Ok(out)
    }
}

impl CompletionBackend for RecordedBackend {
    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        let key = sha256_hex(req.prompt.as_bytes());
        self.responses
            .get(&key)
            .cloned()
            .ok_or(BackendError::NotRecorded(key))
    }

    fn name(&self) -> String {
        format!("recorded:{}", self.responses.len())
    }
}
