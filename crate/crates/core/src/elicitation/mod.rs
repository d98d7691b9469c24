//! Prompt construction, variant generation, grid sweeps and response
//! parsing.

mod grid;
mod parse;
mod prompt;
mod sweep;
mod tokens;
mod variants;

use serde::{Deserialize, Serialize};

pub use grid::{temperature_grid, GridError, SweepGrid, DEFAULT_REPETITIONS};
pub use parse::{
    parse_confidence, parse_response, render_confidence, ParsedResponse, Verdict, RULE_DECIMAL, RULE_FREE_TEXT,
    RULE_NONE, RULE_PAREN_PERCENT, RULE_PERCENT, RULE_YES_NO_TOKEN,
};
pub use prompt::{render_evidence_section, render_prompt, PromptTemplate, RenderError, ResponseFormat};
pub use sweep::{
    derive_sample_sets, elicit, plan_elicit, plan_sweep, run_sweep, DeriveError, ElicitQuestion, ElicitRun,
    PlannedCall, RunPlan, SweepError, SweepRun,
};
pub use tokens::{distribution_at, position_of, top_tokens, TokenDistribution, TokenError, MASS_TOLERANCE};
pub use variants::{
    generate_variants, generator_prompt, negation_count, proposition_id, same_polarity, single,
    variants_from_generator_reply, GenerationMethod, Generator, Variant, VariantError, VariantSet, LOCAL_FRAME_COUNT,
};

/// One cell of a sweep grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coordinate {
    pub model_id: String,
    pub temperature: f64,
    pub variant_id: String,
    pub repetition: u32,
}

impl Coordinate {
    /// Key used to detect duplicates; temperatures compare by bit pattern.
    pub fn key(&self) -> (String, u64, String, u32) {
        (
            self.model_id.clone(),
            self.temperature.to_bits(),
            self.variant_id.clone(),
            self.repetition,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum SampleOutcome {
    Parsed(ParsedResponse),
    /// The provider call failed terminally; the message is the error's text.
    Error {
        message: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub coordinate: Coordinate,
    /// Proposition a "yes" affirms at this coordinate.
    pub proposition_id: String,
    pub request_hash: String,
    pub outcome: SampleOutcome,
}

impl Sample {
    pub fn parsed(&self) -> Option<&ParsedResponse> {
        match &self.outcome {
            SampleOutcome::Parsed(p) => Some(p),
            SampleOutcome::Error { .. } => None,
        }
    }

    pub fn confidence(&self) -> Option<f64> {
        self.parsed().and_then(|p| p.confidence)
    }

    pub fn is_error(&self) -> bool {
        matches!(self.outcome, SampleOutcome::Error { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    pub case_id: String,
    pub question_id: String,
    pub created_at: String,
    pub samples: Vec<Sample>,
}

impl SampleSet {
    pub fn confidences(&self) -> Vec<f64> {
        self.samples.iter().filter_map(Sample::confidence).collect()
    }

    pub fn error_count(&self) -> usize {
        self.samples.iter().filter(|s| s.is_error()).count()
    }

    pub fn has_duplicate_coordinates(&self) -> bool {
        let mut seen = std::collections::HashSet::new();
        !self.samples.iter().all(|s| seen.insert(s.coordinate.key()))
    }

    pub fn model_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = Vec::new();
        for s in &self.samples {
            if !ids.contains(&s.coordinate.model_id) {
                ids.push(s.coordinate.model_id.clone());
            }
        }
        ids
    }
}
