//! Pluggable text-completion backends.
//!
//! [`MockBackend`] is a deterministic template grammar used for tests and
//! simulation, [`RecordedBackend`] replays fixed prompt → response pairs,
//! and [`RemoteBackend`] talks to a JSON-over-HTTP completion endpoint.

mod grammar;
mod mock;
mod recorded;
mod remote;

pub use grammar::{Grammar, PoolKind, WordDraw};
pub use grammar::Style;
pub use mock::MockBackend;
pub use recorded::RecordedBackend;
pub use remote::{RemoteBackend, RemoteConfig};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackendError {
    #[error("backend unavailable: {0}")]
    Unavailable(String),
    #[error("rate limited after {attempts} attempts")]
    RateLimited { attempts: u32 },
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("no recorded response for prompt sha256 {0}")]
    NotRecorded(String),
}

/// Sampling controls for one completion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingParams {
    pub top_k: u32,
    pub temperature: f64,
    pub max_tokens: u32,
    /// Only the mock backend uses the seed.
    #[serde(default)]
    pub seed: u64,
}

impl Default for SamplingParams {
    fn default() -> Self {
        SamplingParams {
            top_k: 40,
            temperature: 0.2,
            max_tokens: 256,
            seed: 0,
        }
    }
}

impl SamplingParams {
    pub fn validate(&self) -> Result<(), BackendError> {
        if self.top_k < 1 {
            return Err(BackendError::InvalidRequest("top_k must be >= 1".into()));
        }
        if !(self.temperature >= 0.0) || !self.temperature.is_finite() {
            return Err(BackendError::InvalidRequest(
                "temperature must be finite and >= 0".into(),
            ));
        }
        if self.max_tokens < 1 {
            return Err(BackendError::InvalidRequest("max_tokens must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompletionRequest {
    pub prompt: String,
    pub params: SamplingParams,
}

impl CompletionRequest {
    pub fn new(prompt: impl Into<String>, params: SamplingParams) -> Self {
        CompletionRequest {
            prompt: prompt.into(),
            params,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinishReason {
    Stop,
    Length,
    Refused,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompletionResponse {
    pub text: String,
    pub finish: FinishReason,
}

impl CompletionResponse {
    pub fn stop(text: impl Into<String>) -> Self {
        CompletionResponse {
            text: text.into(),
            finish: FinishReason::Stop,
        }
    }

    /// Empty text is only legal alongside a truncation or refusal flag.
    pub fn validate(&self) -> Result<(), BackendError> {
        if self.text.is_empty() && self.finish == FinishReason::Stop {
            return Err(BackendError::MalformedResponse(
                "empty text without truncation or refusal flag".into(),
            ));
        }
        Ok(())
    }
}

/// Anything that can complete a prompt. Implementations must tolerate
/// concurrent calls.
pub trait CompletionBackend: Send + Sync {
    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResponse, BackendError>;

    /// Short label recorded in pipeline manifests.
    fn name(&self) -> String;
}

impl<B: CompletionBackend + ?Sized> CompletionBackend for Box<B> {
    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        (**self).complete(req)
    }

    fn name(&self) -> String {
        (**self).name()
    }
}

impl<B: CompletionBackend + ?Sized> CompletionBackend for &B {
    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        (**self).complete(req)
    }

    fn name(&self) -> String {
        (**self).name()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn params_validation() {
        assert!(SamplingParams::default().validate().is_ok());
        let bad = SamplingParams {
            top_k: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = SamplingParams {
            temperature: -0.1,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = SamplingParams {
            temperature: f64::NAN,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn empty_response_needs_flag() {
        assert!(CompletionResponse::stop("").validate().is_err());
        let cut = CompletionResponse {
            text: String::new(),
            finish: FinishReason::Length,
        };
        assert!(cut.validate().is_ok());
    }
}
