//! Verbatim record of every provider call made during a run.
//!
//! Prompts are stored once, keyed by their SHA-256; entries reference them.
//! Every derived report is a pure function of a transcript plus the run
//! configuration, which is what makes capsule replay possible.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::backends::{request_hash, BackendError, CompletionRequest, FanOutItem, TokenLogprobs, WireLog};
use crate::hashing::sha256_hex;
use crate::model::SamplerSettings;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum CallOutcome {
    Ok {
        text: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        token_logprobs: Option<Vec<TokenLogprobs>>,
        attempt_count: u32,
        latency_ms: u64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        wire: Option<WireLog>,
    },
    Error {
        error: BackendError,
        attempt_count: u32,
    },
}

impl CallOutcome {
    pub fn text(&self) -> Option<&str> {
        match self {
            CallOutcome::Ok { text, .. } => Some(text),
            CallOutcome::Error { .. } => None,
        }
    }

    pub fn is_ok(&self) -> bool {
        matches!(self, CallOutcome::Ok { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub request_hash: String,
    pub provider: String,
    pub model_id: String,
    pub sampler: SamplerSettings,
    pub prompt_hash: String,
    #[serde(default)]
    pub want_logprobs: bool,
    pub outcome: CallOutcome,
}

impl TranscriptEntry {
    /// Recompute the request hash from the recorded fields.
    pub fn recomputed_hash(&self, prompt: &str) -> String {
        request_hash(&self.model_id, &self.sampler, prompt)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub prompts: BTreeMap<String, String>,
    pub entries: Vec<TranscriptEntry>,
}

impl Transcript {
    pub fn from_fan_out(requests: &[CompletionRequest], items: Vec<FanOutItem>) -> Self {
        let mut prompts = BTreeMap::new();
        let entries = requests
            .iter()
            .zip(items)
            .map(|(req, item)| {
                let prompt_hash = sha256_hex(req.prompt.as_str().as_bytes());
                prompts
                    .entry(prompt_hash.clone())
                    .or_insert_with(|| req.prompt.as_str().to_string());
                let outcome = match item.result {
                    Ok(r) => CallOutcome::Ok {
                        text: r.text,
                        token_logprobs: r.token_logprobs,
                        attempt_count: r.attempt_count,
                        latency_ms: r.latency.as_millis() as u64,
                        wire: r.wire,
                    },
                    Err(e) => CallOutcome::Error {
                        error: e.error,
                        attempt_count: e.attempts,
                    },
                };
                TranscriptEntry {
                    request_hash: item.request_hash,
                    provider: req.model.provider.clone(),
                    model_id: req.model.model_id.clone(),
                    sampler: req.sampler.clone(),
                    prompt_hash,
                    want_logprobs: req.want_logprobs,
                    outcome,
                }
            })
            .collect();
        Self { prompts, entries }
    }

    pub fn prompt(&self, entry: &TranscriptEntry) -> Option<&str> {
        self.prompts.get(&entry.prompt_hash).map(String::as_str)
    }

    pub fn successes(&self) -> usize {
        self.entries.iter().filter(|e| e.outcome.is_ok()).count()
    }
}
