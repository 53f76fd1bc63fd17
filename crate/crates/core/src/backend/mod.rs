//! Completion backends: a uniform `complete` call over an HTTP completion
//! API, rule-driven scripted responses, and record/replay of either.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::http::HttpError;

mod gate;
mod http;
mod replay;
mod scripted;

pub use gate::ConcurrencyLimited;
pub use http::{HttpBackend, HttpBackendConfig};
pub use replay::{RecordingBackend, ReplayBackend};
pub use scripted::{parse_prompt_query, PromptQuery, ScriptRule, ScriptedBackend};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub prompt: String,
    pub logit_bias: BTreeMap<String, f64>,
    pub temperature: f64,
    pub stop: String,
    pub max_tokens: u32,
}

impl CompletionRequest {
    pub fn new(prompt: impl Into<String>) -> Self {
        Self {
            prompt: prompt.into(),
            logit_bias: BTreeMap::new(),
            temperature: 0.0,
            stop: "\n".into(),
            max_tokens: 128,
        }
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("request serializes");
        hex::encode(Sha256::digest(json))
    }
}

impl From<crate::prompting::PromptSpec> for CompletionRequest {
    fn from(p: crate::prompting::PromptSpec) -> Self {
        Self {
            prompt: p.text,
            logit_bias: p.logit_bias,
            temperature: p.temperature,
            stop: p.stop,
            max_tokens: p.max_tokens,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum BackendError {
    #[error("empty prompt")]
    EmptyPrompt,
    #[error("request {request_id} timed out")]
    Timeout { request_id: String },
    #[error("request {request_id} rate limited")]
    RateLimited { request_id: String },
    #[error("request {request_id}: authentication failed")]
    AuthFailure { request_id: String },
    #[error("{0}")]
    Http(HttpError),
    #[error("malformed completion response: {0}")]
    MalformedResponse(String),
    #[error("no scripted rule for goal {goal:?} after [{completed}]")]
    NoRuleMatched { goal: String, completed: String },
    #[error("no recorded response for request {hash}")]
    NotRecorded { hash: String },
    #[error("replay store: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Tokenizer(#[from] TokenizerError),
}

impl From<HttpError> for BackendError {
    fn from(e: HttpError) -> Self {
        match e {
            HttpError::Timeout { request_id, .. } => BackendError::Timeout { request_id },
            HttpError::RateLimited { request_id, .. } => BackendError::RateLimited { request_id },
            HttpError::AuthFailure { request_id, .. } => BackendError::AuthFailure { request_id },
            other => BackendError::Http(other),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TokenizerError {
    #[error("token {0:?} has no id in the token map")]
    UnknownToken(String),
}

pub trait Tokenizer: Send + Sync {
    fn tokenize(&self, text: &str) -> Result<Vec<String>, TokenizerError>;
}

pub type TokenizerRef = Arc<dyn Tokenizer>;

#[derive(Debug, Clone, Copy, Default)]
pub struct WhitespaceTokenizer;

impl Tokenizer for WhitespaceTokenizer {
    fn tokenize(&self, text: &str) -> Result<Vec<String>, TokenizerError> {
        Ok(text.split_whitespace().map(str::to_owned).collect())
    }
}

/// Whitespace tokens translated to the ids an API expects as logit-bias
/// keys. Words absent from the map are an error.
#[derive(Debug, Clone, Default)]
pub struct TokenIdTokenizer {
    ids: HashMap<String, u32>,
}

impl TokenIdTokenizer {
    pub fn new(ids: HashMap<String, u32>) -> Self {
        Self { ids }
    }

    /// JSON object of word → id.
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        Ok(Self::new(serde_json::from_str(text)?))
    }
}

impl Tokenizer for TokenIdTokenizer {
    fn tokenize(&self, text: &str) -> Result<Vec<String>, TokenizerError> {
        text.split_whitespace()
            .map(|w| {
                self.ids
                    .get(w)
                    .map(|id| id.to_string())
                    .ok_or_else(|| TokenizerError::UnknownToken(w.to_owned()))
            })
            .collect()
    }
}

pub trait LlmBackend: Send + Sync {
    /// Identifier recorded in run manifests.
    fn id(&self) -> String;

    /// Raw continuation, cut at the request's stop sequence.
    fn complete(&self, req: &CompletionRequest) -> Result<String, BackendError>;

    fn tokenizer(&self) -> TokenizerRef;

    fn is_deterministic(&self) -> bool;

    /// `None` allows any number of concurrent `complete` calls.
    fn max_concurrency(&self) -> Option<usize> {
        None
    }
}

impl<T: LlmBackend + ?Sized> LlmBackend for Arc<T> {
    fn id(&self) -> String {
        (**self).id()
    }
    fn complete(&self, req: &CompletionRequest) -> Result<String, BackendError> {
        (**self).complete(req)
    }
    fn tokenizer(&self) -> TokenizerRef {
        (**self).tokenizer()
    }
    fn is_deterministic(&self) -> bool {
        (**self).is_deterministic()
    }
    fn max_concurrency(&self) -> Option<usize> {
        (**self).max_concurrency()
    }
}

impl<T: LlmBackend + ?Sized> LlmBackend for Box<T> {
    fn id(&self) -> String {
        (**self).id()
    }
    fn complete(&self, req: &CompletionRequest) -> Result<String, BackendError> {
        (**self).complete(req)
    }
    fn tokenizer(&self) -> TokenizerRef {
        (**self).tokenizer()
    }
    fn is_deterministic(&self) -> bool {
        (**self).is_deterministic()
    }
    fn max_concurrency(&self) -> Option<usize> {
        (**self).max_concurrency()
    }
}

/// Text before the first occurrence of `stop`.
pub fn truncate_at_stop<'a>(text: &'a str, stop: &str) -> &'a str {
    if stop.is_empty() {
        return text;
    }
    text.find(stop).map_or(text, |i| &text[..i])
}
