//! Deterministic offline backend.
//!
//! Two modes:
//!
//! * **table**: exact responses keyed by request hash (and embeddings keyed
//!   by model and text). Unknown requests fail with `NoFixture`.
//! * **hash-seeded**: pseudo-random but reproducible responses derived from
//!   the request. Completions take the form `"<phrase> (<n>%)"` with roughly
//!   one response in twenty being an unscorable hedge. The centre of the
//!   percentage depends on the model and an *order-insensitive* digest of the
//!   prompt; the spread around it scales with temperature and is drawn from
//!   the full request (sampler and seed included).
//!
//! The order-insensitive digest splits the prompt into blank-line separated
//! blocks, drops a leading `[n] ` item marker from each block, sorts the
//! blocks and hashes them. Two prompts listing the same evidence items in a
//! different order therefore receive the same response.

use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{
    embed_preflight, preflight, sort_alternatives, Backend, BackendError, CompletionRequest, CompletionResult,
    EmbeddingVector, TokenLogprobs, TokenProb,
};
use crate::hashing::canonical_json;
use crate::model::{CleanText, ModelSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MockMode {
    Table,
    HashSeeded,
    /// Table lookup first, hash-seeded fallback on a miss.
    TableThenHashSeeded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockResponse {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_logprobs: Option<Vec<TokenLogprobs>>,
}

impl MockResponse {
    pub fn text(text: &str) -> Self {
        Self {
            text: text.to_string(),
            token_logprobs: None,
        }
    }
}

/// Serializable fixture table: completions by request hash, embeddings by
/// `model_id` then text.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MockTable {
    #[serde(default)]
    pub completions: BTreeMap<String, MockResponse>,
    #[serde(default)]
    pub embeddings: BTreeMap<String, BTreeMap<String, Vec<f64>>>,
}

#[derive(Debug, Clone, Copy)]
enum FailurePlan {
    Times(u32),
    Always,
}

pub struct MockBackend {
    mode: MockMode,
    table: MockTable,
    failures: Mutex<HashMap<String, FailurePlan>>,
    default_dimension: usize,
    dimensions: HashMap<String, usize>,
    jitter: bool,
    in_flight: AtomicUsize,
    peak_in_flight: AtomicUsize,
    calls: AtomicUsize,
}

impl MockBackend {
    fn with_mode(mode: MockMode, table: MockTable) -> Self {
        Self {
            mode,
            table,
            failures: Mutex::new(HashMap::new()),
            default_dimension: 64,
            dimensions: HashMap::new(),
            jitter: false,
            in_flight: AtomicUsize::new(0),
            peak_in_flight: AtomicUsize::new(0),
            calls: AtomicUsize::new(0),
        }
    }

    pub fn hash_seeded() -> Self {
        Self::with_mode(MockMode::HashSeeded, MockTable::default())
    }

    pub fn table(table: MockTable) -> Self {
        Self::with_mode(MockMode::Table, table)
    }

    pub fn table_with_fallback(table: MockTable) -> Self {
        Self::with_mode(MockMode::TableThenHashSeeded, table)
    }

    pub fn mode(&self) -> MockMode {
        self.mode
    }

    pub fn table_entries(&self) -> &MockTable {
        &self.table
    }

    pub fn insert(&mut self, request: &CompletionRequest, response: MockResponse) {
        self.table.completions.insert(request.hash(), response);
    }

    pub fn insert_embedding(&mut self, model_id: &str, text: &str, values: Vec<f64>) {
        self.table
            .embeddings
            .entry(model_id.to_string())
            .or_default()
            .insert(text.to_string(), values);
    }

    pub fn with_embedding_dimension(mut self, dimension: usize) -> Self {
        self.default_dimension = dimension.max(1);
        self
    }

    pub fn with_model_dimension(mut self, model_id: &str, dimension: usize) -> Self {
        self.dimensions.insert(model_id.to_string(), dimension.max(1));
        self
    }

    /// Sleep a request-derived few hundred microseconds per call so that
    /// concurrent callers genuinely interleave.
    pub fn with_jitter(mut self) -> Self {
        self.jitter = true;
        self
    }

    /// Fail the request with this hash `times` times, then behave normally.
    pub fn fail_times(&self, request_hash: &str, times: u32) {
        self.failures
            .lock()
            .unwrap()
            .insert(request_hash.to_string(), FailurePlan::Times(times));
    }

    pub fn fail_always(&self, request_hash: &str) {
        self.failures
            .lock()
            .unwrap()
            .insert(request_hash.to_string(), FailurePlan::Always);
    }

    /// Highest number of simultaneously executing calls observed.
    pub fn peak_in_flight(&self) -> usize {
        self.peak_in_flight.load(Ordering::SeqCst)
    }

    pub fn call_count(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    fn injected_failure(&self, key: &str) -> Option<BackendError> {
        let mut failures = self.failures.lock().unwrap();
        let fail = match failures.get_mut(key) {
            Some(FailurePlan::Always) => true,
            Some(FailurePlan::Times(n)) if *n > 0 => {
                *n -= 1;
                true
            }
            _ => false,
        };
        fail.then(|| BackendError::ProviderUnavailable {
            provider: "mock".into(),
            detail: format!("injected failure for {key}"),
        })
    }

    fn enter(&self, key: &str) -> InFlightGuard<'_> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak_in_flight.fetch_max(now, Ordering::SeqCst);
        if self.jitter {
            let micros = 50 + (Sha256::digest(key.as_bytes())[0] as u64) * 2;
            std::thread::sleep(Duration::from_micros(micros));
        }
        InFlightGuard(&self.in_flight)
    }

    fn lookup(&self, hash: &str) -> Option<&MockResponse> {
        match self.mode {
            MockMode::HashSeeded => None,
            _ => self.table.completions.get(hash),
        }
    }
}

struct InFlightGuard<'a>(&'a AtomicUsize);

impl Drop for InFlightGuard<'_> {
    fn drop(&mut self) {
        self.0.fetch_sub(1, Ordering::SeqCst);
    }
}

impl Backend for MockBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult, BackendError> {
        preflight(request)?;
        let hash = request.hash();
        let _guard = self.enter(&hash);
        if let Some(err) = self.injected_failure(&hash) {
            return Err(err);
        }
        let response = match (self.lookup(&hash), self.mode) {
            (Some(r), _) => r.clone(),
            (None, MockMode::Table) => return Err(BackendError::NoFixture { request_hash: hash }),
            (None, _) => seeded_completion(request),
        };
        let token_logprobs = if request.want_logprobs {
            response.token_logprobs.map(|mut positions| {
                for p in &mut positions {
                    sort_alternatives(&mut p.alternatives);
                }
                positions
            })
        } else {
            None
        };
        Ok(CompletionResult {
            text: response.text,
            token_logprobs,
            latency: Duration::ZERO,
            attempt_count: 1,
            request_hash: hash,
            wire: None,
        })
    }

    fn embed(&self, text: &CleanText, model: &ModelSpec) -> Result<EmbeddingVector, BackendError> {
        embed_preflight(text, model)?;
        let key = embedding_key(&model.model_id, text.as_str());
        let _guard = self.enter(&key);
        if let Some(err) = self.injected_failure(&key) {
            return Err(err);
        }
        if self.mode != MockMode::HashSeeded {
            if let Some(v) = self
                .table
                .embeddings
                .get(&model.model_id)
                .and_then(|m| m.get(text.as_str()))
            {
                return Ok(EmbeddingVector::new(&model.model_id, v.clone()));
            }
            if self.mode == MockMode::Table {
                return Err(BackendError::NoFixture { request_hash: key });
            }
        }
        let dim = self
            .dimensions
            .get(&model.model_id)
            .copied()
            .unwrap_or(self.default_dimension);
        Ok(EmbeddingVector::new(
            &model.model_id,
            seeded_embedding(&model.model_id, text.as_str(), dim),
        ))
    }
}

/// Key used for embedding fixtures and failure injection.
pub fn embedding_key(model_id: &str, text: &str) -> String {
    crate::hashing::content_hash(&("embed", model_id, text))
}

fn rng_from(parts: &[&[u8]]) -> ChaCha8Rng {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    ChaCha8Rng::from_seed(h.finalize().into())
}

/// Sorted, marker-free block digest of a prompt.
pub(crate) fn order_insensitive_digest(prompt: &str) -> [u8; 32] {
    let mut blocks: Vec<&str> = prompt
        .split("\n\n")
        .map(|b| b.trim())
        .filter(|b| !b.is_empty())
        .map(strip_item_marker)
        .collect();
    blocks.sort_unstable();
    let mut h = Sha256::new();
    for b in blocks {
        h.update(b.as_bytes());
        h.update([0u8]);
    }
    h.finalize().into()
}

fn strip_item_marker(block: &str) -> &str {
    if let Some(rest) = block.strip_prefix('[') {
        if let Some(close) = rest.find("] ") {
            if close > 0 && rest[..close].bytes().all(|b| b.is_ascii_digit()) {
                return &rest[close + 2..];
            }
        }
    }
    block
}

const HEDGES: [&str; 3] = [
    "It depends on jurisdiction.",
    "The contract language alone does not settle this.",
    "Reasonable readers could disagree.",
];

fn phrase_for(pct: i64) -> &'static str {
    match pct {
        85..=100 => "Highly likely",
        60..=84 => "Likely",
        41..=59 => "Uncertain",
        16..=40 => "Unlikely",
        _ => "Highly unlikely",
    }
}

fn seeded_completion(request: &CompletionRequest) -> MockResponse {
    let digest = order_insensitive_digest(request.prompt.as_str());
    let model = request.model.model_id.as_bytes();
    let centre = rng_from(&[b"centre", model, &digest]).gen_range(5.0..95.0);
    let sampler = canonical_json(&request.sampler);
    let mut rng = rng_from(&[b"draw", model, sampler.as_bytes(), &digest]);
    let text = if rng.gen_range(0..20) == 0 {
        HEDGES[rng.gen_range(0..HEDGES.len())].to_string()
    } else {
        // Sum of uniforms: a cheap bell shape with unit-ish spread.
        let noise: f64 = (0..4).map(|_| rng.gen_range(-1.0..1.0)).sum::<f64>() * 12.0;
        let pct = (centre + request.sampler.temperature * noise).round().clamp(0.0, 100.0) as i64;
        format!("{} ({pct}%)", phrase_for(pct))
    };
    let token_logprobs = request.want_logprobs.then(|| {
        let k = request.top_k_logprobs.max(1) as usize;
        seeded_logprobs(&text, k, &mut rng)
    });
    MockResponse { text, token_logprobs }
}

const FILLER: [&str; 8] = ["the", "a", "yes", "no", "likely", "not", "it", "first"];

fn seeded_logprobs(text: &str, k: usize, rng: &mut ChaCha8Rng) -> Vec<TokenLogprobs> {
    text.split_whitespace()
        .map(|tok| {
            let mut remaining = 1.0 - rng.gen_range(0.0..0.01);
            let top = remaining * rng.gen_range(0.5..0.99);
            remaining -= top;
            let mut alts = vec![TokenProb {
                token: tok.to_string(),
                probability: top,
            }];
            for filler in FILLER.iter().filter(|f| **f != tok).take(k.saturating_sub(1)) {
                let p = remaining * rng.gen_range(0.0..0.6);
                remaining -= p;
                alts.push(TokenProb {
                    token: filler.to_string(),
                    probability: p,
                });
            }
            sort_alternatives(&mut alts);
            TokenLogprobs {
                token: tok.to_string(),
                alternatives: alts,
            }
        })
        .collect()
}

/// Reference generator for hash-seeded embeddings; components uniform in
/// (-1, 1) from a ChaCha stream keyed by model and text.
pub fn seeded_embedding(model_id: &str, text: &str, dim: usize) -> Vec<f64> {
    let mut rng = rng_from(&[b"embed", model_id.as_bytes(), text.as_bytes()]);
    let mut v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    if v.iter().all(|x| *x == 0.0) {
        v[0] = 1.0;
    }
    v
}
