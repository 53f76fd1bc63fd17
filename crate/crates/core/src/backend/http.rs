use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{truncate_at_stop, BackendError, CompletionRequest, LlmBackend, TokenizerRef, WhitespaceTokenizer};
use crate::http::{HttpClient, RetryPolicy};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HttpBackendConfig {
    pub endpoint: String,
    pub model: String,
    #[serde(default)]
    pub retry: RetryPolicy,
    /// Requests in flight at once; unlimited when absent.
    #[serde(default)]
    pub max_concurrency: Option<usize>,
}

/// Completions endpoint with the `{"model", "prompt", "logit_bias", ...}` →
/// `{"choices": [{"text"}]}` wire format.
pub struct HttpBackend {
    config: HttpBackendConfig,
    client: HttpClient,
    tokenizer: TokenizerRef,
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    text: String,
}

impl HttpBackend {
    /// API key from `LLM_API_KEY`; whitespace tokenizer.
    pub fn from_env(config: HttpBackendConfig) -> Result<Self, BackendError> {
        let client = HttpClient::from_env(&config.endpoint, config.retry.clone())?;
        Ok(Self::with_client(config, client, Arc::new(WhitespaceTokenizer)))
    }

    pub fn with_client(config: HttpBackendConfig, client: HttpClient, tokenizer: TokenizerRef) -> Self {
        Self { config, client, tokenizer }
    }

    pub fn with_tokenizer(mut self, tokenizer: TokenizerRef) -> Self {
        self.tokenizer = tokenizer;
        self
    }
}

impl LlmBackend for HttpBackend {
    fn id(&self) -> String {
        format!("http:{}:{}", self.config.endpoint, self.config.model)
    }

    fn complete(&self, req: &CompletionRequest) -> Result<String, BackendError> {
        if req.prompt.trim().is_empty() {
            return Err(BackendError::EmptyPrompt);
        }
        let body = serde_json::json!({
            "model": self.config.model,
            "prompt": req.prompt,
            "max_tokens": req.max_tokens,
            "temperature": req.temperature,
            "stop": [req.stop],
            "logit_bias": req.logit_bias,
        });
        let value = self.client.post_json(&body)?;
        let resp: CompletionResponse =
            serde_json::from_value(value).map_err(|e| BackendError::MalformedResponse(e.to_string()))?;
        let text = resp
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| BackendError::MalformedResponse("no choices".into()))?
            .text;
        Ok(truncate_at_stop(&text, &req.stop).to_string())
    }

    fn tokenizer(&self) -> TokenizerRef {
        self.tokenizer.clone()
    }

    fn is_deterministic(&self) -> bool {
        false
    }

    fn max_concurrency(&self) -> Option<usize> {
        self.config.max_concurrency
    }
}
