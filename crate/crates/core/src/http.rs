//! Blocking JSON-over-HTTP client with bounded retries, shared by the
//! completion backend and the embedding provider.

use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde::{Deserialize, Serialize};

pub const API_KEY_ENV: &str = "LLM_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub initial_backoff_ms: u64,
    pub max_backoff_ms: u64,
    /// Per-attempt deadline.
    pub timeout_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 5,
            initial_backoff_ms: 500,
            max_backoff_ms: 8_000,
            timeout_ms: 30_000,
        }
    }
}

impl RetryPolicy {
    /// Sleep before retry number `attempt` (1-based): doubling, capped.
    pub fn backoff(&self, attempt: u32) -> Duration {
        let factor = 1u64.checked_shl(attempt.saturating_sub(1)).unwrap_or(u64::MAX);
        Duration::from_millis(self.initial_backoff_ms.saturating_mul(factor).min(self.max_backoff_ms))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum HttpError {
    #[error("request {request_id} timed out after {attempts} attempt(s)")]
    Timeout { request_id: String, attempts: u32 },
    #[error("request {request_id} rate limited after {attempts} attempt(s)")]
    RateLimited { request_id: String, attempts: u32 },
    #[error("request {request_id} rejected: authentication failed (HTTP {status})")]
    AuthFailure { request_id: String, status: u16 },
    #[error("request {request_id} failed with HTTP {status}: {body}")]
    Status { request_id: String, status: u16, body: String },
    #[error("request {request_id} failed: {message}")]
    Transport { request_id: String, message: String },
    #[error("request {request_id} returned malformed JSON: {message}")]
    Decode { request_id: String, message: String },
}

impl HttpError {
    pub fn request_id(&self) -> &str {
        match self {
            HttpError::Timeout { request_id, .. }
            | HttpError::RateLimited { request_id, .. }
            | HttpError::AuthFailure { request_id, .. }
            | HttpError::Status { request_id, .. }
            | HttpError::Transport { request_id, .. }
            | HttpError::Decode { request_id, .. } => request_id,
        }
    }
}

static REQUEST_COUNTER: AtomicU64 = AtomicU64::new(0);

fn client_request_id() -> String {
    format!(
        "client-{}-{}",
        std::process::id(),
        REQUEST_COUNTER.fetch_add(1, Ordering::Relaxed)
    )
}

#[derive(Debug, Clone)]
pub struct HttpClient {
    endpoint: String,
    api_key: Option<String>,
    policy: RetryPolicy,
    client: Client,
}

impl HttpClient {
    pub fn new(endpoint: impl Into<String>, api_key: Option<String>, policy: RetryPolicy) -> Result<Self, HttpError> {
        let client = Client::builder()
            .timeout(Duration::from_millis(policy.timeout_ms))
            .build()
            .map_err(|e| HttpError::Transport {
                request_id: "-".into(),
                message: e.to_string(),
            })?;
        Ok(Self {
            endpoint: endpoint.into(),
            api_key,
            policy,
            client,
        })
    }

    /// Reads the key from `LLM_API_KEY`.
    pub fn from_env(endpoint: impl Into<String>, policy: RetryPolicy) -> Result<Self, HttpError> {
        Self::new(endpoint, std::env::var(API_KEY_ENV).ok(), policy)
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    pub fn policy(&self) -> &RetryPolicy {
        &self.policy
    }

    /// POSTs `body`, retrying timeouts, transport errors, 429 and 5xx.
    pub fn post_json(&self, body: &serde_json::Value) -> Result<serde_json::Value, HttpError> {
        let client_id = client_request_id();
        let mut attempt = 0;
        loop {
            attempt += 1;
            let mut req = self
                .client
                .post(&self.endpoint)
                .header("X-Client-Request-Id", &client_id)
                .json(body);
            if let Some(key) = &self.api_key {
                req = req.bearer_auth(key);
            }
            let err = match req.send() {
                Ok(resp) => {
                    let request_id = resp
                        .headers()
                        .get("x-request-id")
                        .and_then(|v| v.to_str().ok())
                        .map(str::to_owned)
                        .unwrap_or_else(|| client_id.clone());
                    let status = resp.status();
                    if status.is_success() {
                        let text = resp.text().map_err(|e| HttpError::Transport {
                            request_id: request_id.clone(),
                            message: e.to_string(),
                        })?;
                        return serde_json::from_str(&text).map_err(|e| HttpError::Decode {
                            request_id,
                            message: e.to_string(),
                        });
                    }
                    match status {
                        StatusCode::UNAUTHORIZED | StatusCode::FORBIDDEN => {
                            return Err(HttpError::AuthFailure { request_id, status: status.as_u16() })
                        }
                        StatusCode::TOO_MANY_REQUESTS => HttpError::RateLimited { request_id, attempts: attempt },
                        s if s.is_server_error() => HttpError::Status {
                            request_id,
                            status: s.as_u16(),
                            body: resp.text().unwrap_or_default(),
                        },
                        s => {
                            return Err(HttpError::Status {
                                request_id,
                                status: s.as_u16(),
                                body: resp.text().unwrap_or_default(),
                            })
                        }
                    }
                }
                Err(e) if e.is_timeout() => HttpError::Timeout {
                    request_id: client_id.clone(),
                    attempts: attempt,
                },
                Err(e) => HttpError::Transport {
                    request_id: client_id.clone(),
                    message: e.to_string(),
                },
            };
            if attempt >= self.policy.max_attempts {
                return Err(err);
            }
            log::debug!("attempt {attempt} failed ({err}); retrying");
            std::thread::sleep(self.policy.backoff(attempt));
        }
    }
}
