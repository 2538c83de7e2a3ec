use super::{BackendError, CompletionBackend, CompletionRequest, CompletionResponse};
use serde::{Deserialize, Serialize};
use std::time::Duration;

/// Connection settings for [`RemoteBackend`]. The credential itself is read
/// from the environment variable named by `auth_env`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RemoteConfig {
    pub url: String,
    #[serde(default = "default_auth_header")]
    pub auth_header: String,
    #[serde(default)]
    pub auth_env: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
    #[serde(default = "default_retries")]
    pub retries: u32,
    #[serde(default = "default_backoff")]
    pub backoff_ms: u64,
}

fn default_auth_header() -> String {
    "Authorization".to_owned()
}
fn default_timeout() -> f64 {
    30.0
}
fn default_retries() -> u32 {
    3
}
fn default_backoff() -> u64 {
    500
}

impl RemoteConfig {
    pub fn new(url: impl Into<String>) -> Self {
        RemoteConfig {
            url: url.into(),
            auth_header: default_auth_header(),
            auth_env: None,
            timeout_secs: default_timeout(),
            retries: default_retries(),
            backoff_ms: default_backoff(),
        }
    }
}

#[derive(Serialize)]
struct WireRequest<'a> {
    prompt: &'a str,
    top_k: u32,
    temperature: f64,
    max_tokens: u32,
}

#[derive(Deserialize)]
struct WireResponse {
    text: String,
}

/// Client for a minimal completion endpoint:
/// `POST {"prompt", "top_k", "temperature", "max_tokens"}` → `{"text"}`.
///
/// Transport failures, 5xx and 429 are retried with exponential backoff up
/// to `retries` extra attempts; every attempt is bounded by the timeout.
pub struct RemoteBackend {
    config: RemoteConfig,
    agent: ureq::Agent,
    auth_value: Option<String>,
}

enum Attempt {
    Done(CompletionResponse),
    Retry(BackendError),
    Fail(BackendError),
}

impl RemoteBackend {
    pub fn new(config: RemoteConfig) -> Result<Self, BackendError> {
        let auth_value = match &config.auth_env {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                BackendError::Unavailable(format!("credential variable {var} is not set"))
            })?),
            None => None,
        };
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(config.timeout_secs.max(0.001))))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(RemoteBackend {
            config,
            agent,
            auth_value,
        })
    }

    fn attempt(&self, body: &str) -> Attempt {
        let mut req = self
            .agent
            .post(&self.config.url)
            .header("Content-Type", "application/json");
        if let Some(v) = &self.auth_value {
            req = req.header(self.config.auth_header.as_str(), v.as_str());
        }
        let mut resp = match req.send(body) {
            Ok(r) => r,
            Err(e) => return Attempt::Retry(BackendError::Unavailable(e.to_string())),
        };
        let status = resp.status().as_u16();
        let text = match resp.body_mut().read_to_string() {
            Ok(t) => t,
            Err(e) => return Attempt::Retry(BackendError::Unavailable(e.to_string())),
        };
        match status {
            200..=299 => match serde_json::from_str::<WireResponse>(&text) {
                Ok(w) => {
                    let out = CompletionResponse::stop(w.text);
                    match out.validate() {
                        Ok(()) => Attempt::Done(out),
                        Err(e) => Attempt::Fail(e),
                    }
                }
                Err(e) => Attempt::Fail(BackendError::MalformedResponse(e.to_string())),
            },
            429 => Attempt::Retry(BackendError::RateLimited { attempts: 0 }),
            500..=599 => Attempt::Retry(BackendError::Unavailable(format!("HTTP {status}"))),
            _ => Attempt::Fail(BackendError::Unavailable(format!("HTTP {status}: {text}"))),
        }
    }
}

impl CompletionBackend for RemoteBackend {
    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        req.params.validate()?;
        let body = serde_json::to_string(&WireRequest {
            prompt: &req.prompt,
            top_k: req.params.top_k,
            temperature: req.params.temperature,
            max_tokens: req.params.max_tokens,
        })
        .map_err(|e| BackendError::InvalidRequest(e.to_string()))?;
        let attempts = self.config.retries + 1;
        let mut last = BackendError::Unavailable("no attempt made".into());
        for n in 0..attempts {
            if n > 0 {
                let wait = self.config.backoff_ms.saturating_mul(1 << (n - 1).min(16));
                std::thread::sleep(Duration::from_millis(wait));
            }
            match self.attempt(&body) {
                Attempt::Done(r) => return Ok(r),
                Attempt::Fail(e) => return Err(e),
                Attempt::Retry(BackendError::RateLimited { .. }) => {
                    last = BackendError::RateLimited { attempts: n + 1 }
                }
                Attempt::Retry(e) => last = e,
            }
        }
        Err(last)
    }

    fn name(&self) -> String {
        format!("remote:{}", self.config.url)
    }
}
