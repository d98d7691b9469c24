//! Live providers over HTTP.
//!
//! Credentials come only from `GI_API_KEY_<PROVIDER>`; base URLs default per
//! known provider and can be overridden with `GI_BASE_URL_<PROVIDER>`
//! (`<PROVIDER>` is the provider name upper-cased, non-alphanumerics as `_`).
//! `anthropic` speaks the Messages API; every other provider is treated as
//! OpenAI-compatible (`/chat/completions`, `/completions`, `/embeddings`).

use std::collections::HashMap;
use std::time::{Duration, Instant};

use serde_json::{json, Value};

use super::{
    embed_preflight, preflight, sort_alternatives, Backend, BackendError, CompletionRequest, CompletionResult,
    EmbeddingVector, TokenLogprobs, TokenProb, WireLog,
};
use crate::model::{CleanText, Modality, ModelSpec};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProviderEndpoint {
    pub base_url: String,
    pub api_key: Option<String>,
}

pub struct HttpBackend {
    agent: ureq::Agent,
    overrides: HashMap<String, ProviderEndpoint>,
}

impl Default for HttpBackend {
    fn default() -> Self {
        Self::new()
    }
}

fn env_suffix(provider: &str) -> String {
    provider
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() {
                c.to_ascii_uppercase()
            } else {
                '_'
            }
        })
        .collect()
}

fn default_base(provider: &str) -> Option<&'static str> {
    match provider {
        "openai" => Some("https://api.openai.com/v1"),
        "anthropic" => Some("https://api.anthropic.com/v1"),
        _ => None,
    }
}

impl HttpBackend {
    pub fn new() -> Self {
        Self {
            agent: ureq::AgentBuilder::new()
                .timeout_connect(Duration::from_secs(10))
                .timeout(Duration::from_secs(120))
                .build(),
            overrides: HashMap::new(),
        }
    }

    /// Pin an endpoint for `provider`, bypassing the environment.
    pub fn with_endpoint(mut self, provider: &str, endpoint: ProviderEndpoint) -> Self {
        self.overrides.insert(provider.to_string(), endpoint);
        self
    }

    pub fn endpoint(&self, provider: &str) -> Result<ProviderEndpoint, BackendError> {
        if let Some(e) = self.overrides.get(provider) {
            return Ok(e.clone());
        }
        let suffix = env_suffix(provider);
        let key_var = format!("GI_API_KEY_{suffix}");
        let url_var = format!("GI_BASE_URL_{suffix}");
        let api_key = std::env::var(&key_var).ok().filter(|k| !k.is_empty());
        let base_override = std::env::var(&url_var).ok().filter(|u| !u.is_empty());
        let base_url = match (&base_override, default_base(provider)) {
            (Some(u), _) => u.clone(),
            (None, Some(d)) => d.to_string(),
            (None, None) => return Err(BackendError::MissingCredentials { env_var: url_var }),
        };
        // Overridden endpoints may be unauthenticated test doubles.
        if api_key.is_none() && base_override.is_none() {
            return Err(BackendError::MissingCredentials { env_var: key_var });
        }
        Ok(ProviderEndpoint {
            base_url: base_url.trim_end_matches('/').to_string(),
            api_key,
        })
    }

    fn post(
        &self,
        provider: &str,
        endpoint: &ProviderEndpoint,
        path: &str,
        body: &Value,
    ) -> Result<(String, String), BackendError> {
        let request_body = serde_json::to_string(body).expect("json body");
        let mut req = self
            .agent
            .post(&format!("{}{}", endpoint.base_url, path))
            .set("content-type", "application/json");
        if let Some(key) = &endpoint.api_key {
            req = if provider == "anthropic" {
                req.set("x-api-key", key).set("anthropic-version", "2023-06-01")
            } else {
                req.set("authorization", &format!("Bearer {key}"))
            };
        }
        match req.send_string(&request_body) {
            Ok(resp) => {
                let text = resp.into_string().map_err(|e| BackendError::ProviderUnavailable {
                    provider: provider.to_string(),
                    detail: format!("reading body: {e}"),
                })?;
                Ok((request_body, text))
            }
            Err(ureq::Error::Status(status, resp)) => {
                let detail = resp.into_string().unwrap_or_default();
                if status == 429 || status >= 500 {
                    Err(BackendError::ProviderUnavailable {
                        provider: provider.to_string(),
                        detail: format!("HTTP {status}: {detail}"),
                    })
                } else {
                    Err(BackendError::ProviderRejected {
                        provider: provider.to_string(),
                        status,
                        detail,
                    })
                }
            }
            Err(e) => Err(BackendError::ProviderUnavailable {
                provider: provider.to_string(),
                detail: e.to_string(),
            }),
        }
    }
}

fn malformed(provider: &str, what: &str) -> BackendError {
    BackendError::ProviderRejected {
        provider: provider.to_string(),
        status: 200,
        detail: format!("malformed response: {what}"),
    }
}

fn openai_body(request: &CompletionRequest) -> (String, Value) {
    let s = &request.sampler;
    let mut body = json!({
        "model": request.model.model_id,
        "temperature": s.temperature,
        "top_p": s.top_p,
        "frequency_penalty": s.frequency_penalty,
        "presence_penalty": s.presence_penalty,
        "max_tokens": s.max_tokens,
        "n": 1,
    });
    let obj = body.as_object_mut().expect("object");
    if let Some(seed) = s.seed {
        obj.insert("seed".into(), json!(seed));
    }
    match request.model.modality {
        Modality::CompletionWithLogprobs => {
            obj.insert("prompt".into(), json!(request.prompt.as_str()));
            obj.insert("best_of".into(), json!(s.best_of));
            if request.want_logprobs {
                obj.insert("logprobs".into(), json!(request.top_k_logprobs.clamp(1, 20)));
            }
            ("/completions".to_string(), body)
        }
        _ => {
            obj.insert(
                "messages".into(),
                json!([{"role": "user", "content": request.prompt.as_str()}]),
            );
            if request.want_logprobs {
                obj.insert("logprobs".into(), json!(true));
                obj.insert("top_logprobs".into(), json!(request.top_k_logprobs.min(20)));
            }
            ("/chat/completions".to_string(), body)
        }
    }
}

fn prob(lp: &Value) -> Option<f64> {
    lp.as_f64().map(|l| l.exp().clamp(0.0, 1.0))
}

fn parse_chat_logprobs(choice: &Value) -> Option<Vec<TokenLogprobs>> {
    let content = choice.get("logprobs")?.get("content")?.as_array()?;
    Some(
        content
            .iter()
            .map(|pos| {
                let mut alternatives: Vec<TokenProb> = pos
                    .get("top_logprobs")
                    .and_then(Value::as_array)
                    .map(|alts| {
                        alts.iter()
                            .filter_map(|a| {
                                Some(TokenProb {
                                    token: a.get("token")?.as_str()?.to_string(),
                                    probability: prob(a.get("logprob")?)?,
                                })
                            })
                            .collect()
                    })
                    .unwrap_or_default();
                sort_alternatives(&mut alternatives);
                TokenLogprobs {
                    token: pos.get("token").and_then(Value::as_str).unwrap_or("").to_string(),
                    alternatives,
                }
            })
            .collect(),
    )
}

fn parse_completion_logprobs(choice: &Value) -> Option<Vec<TokenLogprobs>> {
    let lp = choice.get("logprobs")?;
    let tokens = lp.get("tokens")?.as_array()?;
    let tops = lp.get("top_logprobs").and_then(Value::as_array);
    Some(
        tokens
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let mut alternatives: Vec<TokenProb> = tops
                    .and_then(|v| v.get(i))
                    .and_then(Value::as_object)
                    .map(|m| {
                        m.iter()
                            .filter_map(|(tok, lp)| {
                                Some(TokenProb {
                                    token: tok.clone(),
                                    probability: prob(lp)?,
                                })
                            })
                            .collect()
                    })
                    .unwrap_or_default();
                sort_alternatives(&mut alternatives);
                TokenLogprobs {
                    token: t.as_str().unwrap_or("").to_string(),
                    alternatives,
                }
            })
            .collect(),
    )
}

impl Backend for HttpBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult, BackendError> {
        preflight(request)?;
        let provider = request.model.provider.as_str();
        if provider == "anthropic" && request.want_logprobs {
            return Err(BackendError::LogprobsUnsupported {
                model_id: request.model.model_id.clone(),
            });
        }
        let endpoint = self.endpoint(provider)?;
        let started = Instant::now();
        let (text, token_logprobs, wire) = if provider == "anthropic" {
            let s = &request.sampler;
            let body = json!({
                "model": request.model.model_id,
                "max_tokens": s.max_tokens,
                "temperature": s.temperature.min(1.0),
                "top_p": s.top_p,
                "messages": [{"role": "user", "content": request.prompt.as_str()}],
            });
            let (req_body, resp_body) = self.post(provider, &endpoint, "/messages", &body)?;
            let v: Value = serde_json::from_str(&resp_body).map_err(|_| malformed(provider, "not JSON"))?;
            let text = v
                .get("content")
                .and_then(Value::as_array)
                .map(|blocks| {
                    blocks
                        .iter()
                        .filter_map(|b| b.get("text").and_then(Value::as_str))
                        .collect::<String>()
                })
                .ok_or_else(|| malformed(provider, "missing content"))?;
            (
                text,
                None,
                WireLog {
                    request_body: req_body,
                    response_body: resp_body,
                },
            )
        } else {
            let (path, body) = openai_body(request);
            let (req_body, resp_body) = self.post(provider, &endpoint, &path, &body)?;
            let v: Value = serde_json::from_str(&resp_body).map_err(|_| malformed(provider, "not JSON"))?;
            let choice = v
                .get("choices")
                .and_then(|c| c.get(0))
                .ok_or_else(|| malformed(provider, "missing choices"))?;
            let (text, logprobs) = if request.model.modality == Modality::CompletionWithLogprobs {
                (
                    choice.get("text").and_then(Value::as_str),
                    parse_completion_logprobs(choice),
                )
            } else {
                (
                    choice
                        .get("message")
                        .and_then(|m| m.get("content"))
                        .and_then(Value::as_str),
                    parse_chat_logprobs(choice),
                )
            };
            let text = text.ok_or_else(|| malformed(provider, "missing text"))?.to_string();
            let logprobs = if request.want_logprobs { logprobs } else { None };
            (
                text,
                logprobs,
                WireLog {
                    request_body: req_body,
                    response_body: resp_body,
                },
            )
        };
        Ok(CompletionResult {
            text,
            token_logprobs,
            latency: started.elapsed(),
            attempt_count: 1,
            request_hash: request.hash(),
            wire: Some(wire),
        })
    }

    fn embed(&self, text: &CleanText, model: &ModelSpec) -> Result<EmbeddingVector, BackendError> {
        embed_preflight(text, model)?;
        let provider = model.provider.as_str();
        let endpoint = self.endpoint(provider)?;
        let body = json!({"model": model.model_id, "input": text.as_str()});
        let (_, resp_body) = self.post(provider, &endpoint, "/embeddings", &body)?;
        let v: Value = serde_json::from_str(&resp_body).map_err(|_| malformed(provider, "not JSON"))?;
        let values: Vec<f64> = v
            .get("data")
            .and_then(|d| d.get(0))
            .and_then(|d| d.get("embedding"))
            .and_then(Value::as_array)
            .ok_or_else(|| malformed(provider, "missing embedding"))?
            .iter()
            .map(|x| x.as_f64().ok_or_else(|| malformed(provider, "non-numeric component")))
            .collect::<Result<_, _>>()?;
        if values.is_empty() {
            return Err(malformed(provider, "empty embedding"));
        }
        Ok(EmbeddingVector::new(&model.model_id, values))
    }
}
