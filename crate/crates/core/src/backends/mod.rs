//! Provider-agnostic model access.
//!
//! A [`Backend`] performs one attempt per call; retries, pacing and
//! concurrency belong to [`fan_out`]. Every backend runs [`preflight`] first
//! so budget and modality errors are identical across providers.

mod fanout;
mod http;
mod mock;
mod rate;

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::hashing::content_hash;
use crate::model::{CleanText, Modality, ModelSpec, SamplerSettings};

pub use fanout::{fan_out, fan_out_embeddings, FanOutItem, FanOutPolicy, Schedule, TerminalError};
pub use http::{HttpBackend, ProviderEndpoint};
pub use mock::{embedding_key as mock_embedding_key, seeded_embedding, MockBackend, MockMode, MockResponse, MockTable};
pub use rate::RateLimiter;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub model: ModelSpec,
    pub sampler: SamplerSettings,
    pub prompt: CleanText,
    #[serde(default)]
    pub want_logprobs: bool,
    #[serde(default)]
    pub top_k_logprobs: u32,
}

impl CompletionRequest {
    pub fn new(model: ModelSpec, sampler: SamplerSettings, prompt: CleanText) -> Self {
        Self {
            model,
            sampler,
            prompt,
            want_logprobs: false,
            top_k_logprobs: 0,
        }
    }

    pub fn with_logprobs(mut self, top_k: u32) -> Self {
        self.want_logprobs = true;
        self.top_k_logprobs = top_k;
        self
    }

    pub fn hash(&self) -> String {
        request_hash(&self.model.model_id, &self.sampler, self.prompt.as_str())
    }
}

/// `hash(model_id, sampler, prompt)` over their canonical JSON encoding.
pub fn request_hash(model_id: &str, sampler: &SamplerSettings, prompt: &str) -> String {
    #[derive(Serialize)]
    struct Key<'a> {
        model_id: &'a str,
        sampler: &'a SamplerSettings,
        prompt: &'a str,
    }
    content_hash(&Key {
        model_id,
        sampler,
        prompt,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenProb {
    pub token: String,
    pub probability: f64,
}

/// One generated position: the emitted token and the alternatives the
/// provider reported for it (possibly none).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenLogprobs {
    pub token: String,
    #[serde(default)]
    pub alternatives: Vec<TokenProb>,
}

/// Descending by probability, ties broken lexicographically by token.
pub fn sort_alternatives(alts: &mut [TokenProb]) {
    alts.sort_by(|a, b| {
        b.probability
            .total_cmp(&a.probability)
            .then_with(|| a.token.cmp(&b.token))
    });
}

/// Verbatim provider wire traffic (never includes credentials).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireLog {
    pub request_body: String,
    pub response_body: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompletionResult {
    pub text: String,
    pub token_logprobs: Option<Vec<TokenLogprobs>>,
    pub latency: Duration,
    pub attempt_count: u32,
    pub request_hash: String,
    pub wire: Option<WireLog>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
    pub dimension: usize,
    pub model_id: String,
}

impl EmbeddingVector {
    pub fn new(model_id: &str, values: Vec<f64>) -> Self {
        Self {
            dimension: values.len(),
            values,
            model_id: model_id.to_string(),
        }
    }
}

#[derive(Debug, Clone, thiserror::Error, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendError {
    #[error("provider {provider} unavailable: {detail}")]
    ProviderUnavailable { provider: String, detail: String },
    #[error("provider {provider} rejected the request (HTTP {status}): {detail}")]
    ProviderRejected {
        provider: String,
        status: u16,
        detail: String,
    },
    #[error("prompt needs ~{needed} tokens but {model_id} allows {budget}")]
    BudgetExceeded {
        model_id: String,
        needed: usize,
        budget: usize,
    },
    #[error("{model_id} cannot return logprobs")]
    LogprobsUnsupported { model_id: String },
    #[error("{model_id} has modality {actual:?}; this call needs {expected:?}")]
    WrongModality {
        model_id: String,
        expected: Modality,
        actual: Modality,
    },
    #[error("empty input")]
    EmptyInput,
    #[error("invalid sampler settings: {0}")]
    InvalidSampler(String),
    #[error("no credentials: set {env_var}")]
    MissingCredentials { env_var: String },
    #[error("mock has no fixture for request {request_hash}")]
    NoFixture { request_hash: String },
}

impl BackendError {
    /// Only transient provider failures are retried.
    pub fn is_retryable(&self) -> bool {
        matches!(self, BackendError::ProviderUnavailable { .. })
    }
}

/// Rough token count used for budget checks: the larger of the word count
/// and one token per four characters.
pub fn estimate_tokens(text: &str) -> usize {
    let words = text.split_whitespace().count();
    let chars = text.chars().count();
    words.max(chars.div_ceil(4))
}

/// Contract checks shared by every backend, run before any provider call.
pub fn preflight(request: &CompletionRequest) -> Result<(), BackendError> {
    let model = &request.model;
    if model.modality == Modality::Embedding {
        return Err(BackendError::WrongModality {
            model_id: model.model_id.clone(),
            expected: Modality::Chat,
            actual: model.modality,
        });
    }
    if request.prompt.as_str().trim().is_empty() {
        return Err(BackendError::EmptyInput);
    }
    request
        .sampler
        .validate()
        .map_err(|e| BackendError::InvalidSampler(e.to_string()))?;
    if request.want_logprobs && !model.modality.supports_logprobs() {
        return Err(BackendError::LogprobsUnsupported {
            model_id: model.model_id.clone(),
        });
    }
    let needed = estimate_tokens(request.prompt.as_str());
    if needed > model.context_budget {
        return Err(BackendError::BudgetExceeded {
            model_id: model.model_id.clone(),
            needed,
            budget: model.context_budget,
        });
    }
    Ok(())
}

pub fn embed_preflight(text: &CleanText, model: &ModelSpec) -> Result<(), BackendError> {
    if model.modality != Modality::Embedding {
        return Err(BackendError::WrongModality {
            model_id: model.model_id.clone(),
            expected: Modality::Embedding,
            actual: model.modality,
        });
    }
    if text.as_str().trim().is_empty() {
        return Err(BackendError::EmptyInput);
    }
    Ok(())
}

/// A chat/completion and embedding provider. One call is one attempt.
pub trait Backend: Send + Sync {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult, BackendError>;

    fn embed(&self, text: &CleanText, model: &ModelSpec) -> Result<EmbeddingVector, BackendError>;
}
