//! Bounded-concurrency batch executor with retries.
//!
//! Output order always equals input order. Each slot yields exactly one
//! outcome: the first success or the terminal error.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Backend, BackendError, CompletionRequest, CompletionResult, EmbeddingVector, RateLimiter};
use crate::model::{CleanText, ModelSpec};

/// Order in which slots are started. Results are reported in input order
/// either way.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Schedule {
    #[default]
    InOrder,
    Shuffled(u64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FanOutPolicy {
    pub max_in_flight: usize,
    pub max_retries: u32,
    pub backoff_base: Duration,
    /// Requests per second per provider; 0 disables pacing.
    pub per_provider_rate: f64,
    pub schedule: Schedule,
}

impl Default for FanOutPolicy {
    fn default() -> Self {
        Self {
            max_in_flight: 8,
            max_retries: 3,
            backoff_base: Duration::from_millis(250),
            per_provider_rate: 0.0,
            schedule: Schedule::InOrder,
        }
    }
}

impl FanOutPolicy {
    /// No backoff or pacing; for the mock backend.
    pub fn immediate(max_in_flight: usize) -> Self {
        Self {
            max_in_flight,
            backoff_base: Duration::ZERO,
            ..Default::default()
        }
    }
}

/// One result cell: the value and its attempt count, or the final error.
type Slot<R> = Mutex<Option<Result<(R, u32), TerminalError>>>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{error} (after {attempts} attempt(s))")]
pub struct TerminalError {
    pub error: BackendError,
    pub attempts: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FanOutItem {
    pub request_hash: String,
    pub result: Result<CompletionResult, TerminalError>,
}

pub fn fan_out(backend: &dyn Backend, requests: &[CompletionRequest], policy: &FanOutPolicy) -> Vec<FanOutItem> {
    let outcomes = run_pool(requests, policy, |r| r.model.provider.as_str(), |r| backend.complete(r));
    requests
        .iter()
        .zip(outcomes)
        .map(|(req, outcome)| FanOutItem {
            request_hash: req.hash(),
            result: outcome.map(|(mut res, attempts)| {
                res.attempt_count = attempts;
                res
            }),
        })
        .collect()
}

pub fn fan_out_embeddings(
    backend: &dyn Backend,
    jobs: &[(CleanText, ModelSpec)],
    policy: &FanOutPolicy,
) -> Vec<Result<EmbeddingVector, TerminalError>> {
    run_pool(jobs, policy, |(_, m)| m.provider.as_str(), |(t, m)| backend.embed(t, m))
        .into_iter()
        .map(|o| o.map(|(v, _)| v))
        .collect()
}

fn run_pool<T, R, P, F>(
    items: &[T],
    policy: &FanOutPolicy,
    provider_of: P,
    call: F,
) -> Vec<Result<(R, u32), TerminalError>>
where
    T: Sync,
    R: Send,
    P: Fn(&T) -> &str + Sync,
    F: Fn(&T) -> Result<R, BackendError> + Sync,
{
    let mut order: Vec<usize> = (0..items.len()).collect();
    if let Schedule::Shuffled(seed) = policy.schedule {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    let limiter = RateLimiter::new(policy.per_provider_rate);
    let next = AtomicUsize::new(0);
    let slots: Vec<Slot<R>> = items.iter().map(|_| Mutex::new(None)).collect();
    let workers = policy.max_in_flight.max(1).min(items.len());

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::SeqCst);
                let Some(&idx) = order.get(k) else { break };
                let item = &items[idx];
                let outcome = attempt_with_retries(policy, &limiter, provider_of(item), || call(item));
                *slots[idx].lock().unwrap() = Some(outcome);
            });
        }
    });

    slots
        .into_iter()
        .map(|s| s.into_inner().unwrap().expect("every slot is filled"))
        .collect()
}

fn attempt_with_retries<R>(
    policy: &FanOutPolicy,
    limiter: &RateLimiter,
    provider: &str,
    mut call: impl FnMut() -> Result<R, BackendError>,
) -> Result<(R, u32), TerminalError> {
    let mut attempts = 0u32;
    loop {
        limiter.acquire(provider);
        attempts += 1;
        match call() {
            Ok(r) => return Ok((r, attempts)),
            Err(e) if e.is_retryable() && attempts <= policy.max_retries => {
                let factor = 1u32 << (attempts - 1).min(16);
                let deadline = Instant::now() + policy.backoff_base * factor;
                std::thread::sleep(deadline.saturating_duration_since(Instant::now()));
            }
            Err(error) => return Err(TerminalError { error, attempts }),
        }
    }
}
