//! Per-provider token-bucket pacing. Exceeding the rate delays; it never errors.

use std::collections::HashMap;
use std::sync::Mutex;
use std::time::{Duration, Instant};

#[derive(Debug)]
struct Bucket {
    tokens: f64,
    last: Instant,
}

#[derive(Debug)]
pub struct RateLimiter {
    /// Requests per second per provider; zero or negative disables pacing.
    rate: f64,
    buckets: Mutex<HashMap<String, Bucket>>,
}

impl RateLimiter {
    pub fn new(rate: f64) -> Self {
        Self {
            rate,
            buckets: Mutex::new(HashMap::new()),
        }
    }

    /// Block until `provider` has a token, then consume it.
    pub fn acquire(&self, provider: &str) {
        if !(self.rate > 0.0 && self.rate.is_finite()) {
            return;
        }
        let capacity = self.rate.max(1.0);
        loop {
            let wait = {
                let mut buckets = self.buckets.lock().unwrap();
                let now = Instant::now();
                let b = buckets.entry(provider.to_string()).or_insert(Bucket {
                    tokens: capacity,
                    last: now,
                });
                let elapsed = now.duration_since(b.last).as_secs_f64();
                b.tokens = (b.tokens + elapsed * self.rate).min(capacity);
                b.last = now;
                if b.tokens >= 1.0 {
                    b.tokens -= 1.0;
                    return;
                }
                Duration::from_secs_f64((1.0 - b.tokens) / self.rate)
            };
            std::thread::sleep(wait);
        }
    }
}
