//! Next-token distribution readout from completion logprobs.

use serde::{Deserialize, Serialize};

use crate::backends::{sort_alternatives, CompletionResult, TokenLogprobs, TokenProb};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenDistribution {
    pub position: usize,
    pub alternatives: Vec<TokenProb>,
}

impl TokenDistribution {
    pub fn total(&self) -> f64 {
        crate::numeric::exact_sum(self.alternatives.iter().map(|a| a.probability))
    }
}

/// Slack allowed when checking that a position's mass does not exceed one.
pub const MASS_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TokenError {
    #[error("no logprobs recorded at position {0}")]
    LogprobsAbsent(usize),
    #[error("invalid distribution at position {position}: {reason}")]
    InvalidDistribution { position: usize, reason: String },
}

pub fn top_tokens(result: &CompletionResult, position: usize) -> Result<TokenDistribution, TokenError> {
    distribution_at(result.token_logprobs.as_deref(), position)
}

/// Same as [`top_tokens`], over a recorded logprob list.
pub fn distribution_at(logprobs: Option<&[TokenLogprobs]>, position: usize) -> Result<TokenDistribution, TokenError> {
    let pos = logprobs
        .and_then(|l| l.get(position))
        .filter(|p| !p.alternatives.is_empty())
        .ok_or(TokenError::LogprobsAbsent(position))?;
    let invalid = |reason: String| TokenError::InvalidDistribution { position, reason };
    if let Some(a) = pos.alternatives.iter().find(|a| !(0.0..=1.0).contains(&a.probability)) {
        return Err(invalid(format!(
            "probability {} for {:?} outside [0, 1]",
            a.probability, a.token
        )));
    }
    let mut alternatives = pos.alternatives.clone();
    sort_alternatives(&mut alternatives);
    let dist = TokenDistribution { position, alternatives };
    if dist.total() > 1.0 + MASS_TOLERANCE {
        return Err(invalid(format!("mass {} exceeds 1", dist.total())));
    }
    Ok(dist)
}

/// Position of the first token equal to `token` after trimming whitespace.
pub fn position_of(result: &CompletionResult, token: &str) -> Option<usize> {
    result
        .token_logprobs
        .as_ref()?
        .iter()
        .position(|p| p.token.trim() == token)
}
