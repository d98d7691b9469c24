//! Domain types shared across the engine.

mod case_file;
mod sanitize;

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

pub use case_file::{load_case, parse_case, CaseFile, CaseLoadError, EvidenceFile, ReadingFile};
pub use sanitize::{sanitize_text, CleanText, ConfusableWarning, SanitizeError};

/// One candidate reading of the disputed clause, phrased as a scorable claim.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reading {
    pub label: String,
    pub proposition: CleanText,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvidenceKind {
    Negotiation,
    Communication,
    Custom,
    CourseOfDealing,
    Other,
}

impl EvidenceKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EvidenceKind::Negotiation => "negotiation",
            EvidenceKind::Communication => "communication",
            EvidenceKind::Custom => "custom",
            EvidenceKind::CourseOfDealing => "course_of_dealing",
            EvidenceKind::Other => "other",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvidenceItem {
    pub evidence_id: String,
    pub kind: EvidenceKind,
    pub text: CleanText,
    /// Credibility annotation for the human reader; never used numerically.
    #[serde(default)]
    pub weight_note: String,
}

/// The unit of analysis: a contract, its disputed clause, the readings under
/// test and the extrinsic evidence in user-supplied order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InterpretationCase {
    pub case_id: String,
    pub contract_text: CleanText,
    pub clause: CleanText,
    pub candidate_readings: Vec<Reading>,
    pub evidence: Vec<EvidenceItem>,
    pub legal_baseline: Option<CleanText>,
}

impl InterpretationCase {
    pub fn reading(&self, label: &str) -> Option<&Reading> {
        self.candidate_readings.iter().find(|r| r.label == label)
    }

    /// A copy whose evidence list is reordered so that position `i` holds the
    /// item previously at `permutation[i]`.
    pub fn permuted(&self, permutation: &[usize]) -> Option<InterpretationCase> {
        if !is_permutation(permutation, self.evidence.len()) {
            return None;
        }
        let mut out = self.clone();
        out.evidence = permutation.iter().map(|&i| self.evidence[i].clone()).collect();
        Some(out)
    }
}

pub(crate) fn is_permutation(p: &[usize], n: usize) -> bool {
    if p.len() != n {
        return false;
    }
    let mut seen = vec![false; n];
    for &i in p {
        if i >= n || seen[i] {
            return false;
        }
        seen[i] = true;
    }
    true
}

/// A broken case invariant: which field, which rule.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub field: String,
    pub rule: String,
}

impl Violation {
    fn new(field: impl Into<String>, rule: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            rule: rule.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.rule)
    }
}

pub fn validate_case(case: &InterpretationCase) -> Vec<Violation> {
    let mut out = Vec::new();
    if case.case_id.trim().is_empty() {
        out.push(Violation::new("case_id", "empty"));
    }
    if case.clause.as_str().trim().is_empty() {
        out.push(Violation::new("clause", "empty"));
    }
    if case.candidate_readings.is_empty() {
        out.push(Violation::new("candidate_readings", "empty"));
    }
    let mut labels = HashSet::new();
    let mut dup_label = false;
    for (i, r) in case.candidate_readings.iter().enumerate() {
        if r.label.trim().is_empty() {
            out.push(Violation::new(format!("candidate_readings[{i}].label"), "empty"));
        }
        if r.proposition.as_str().trim().is_empty() {
            out.push(Violation::new(format!("candidate_readings[{i}].proposition"), "empty"));
        }
        dup_label |= !labels.insert(r.label.as_str());
    }
    if dup_label {
        out.push(Violation::new("candidate_readings", "duplicate label"));
    }
    let mut ids = HashSet::new();
    let mut dup_id = false;
    for (i, e) in case.evidence.iter().enumerate() {
        if e.evidence_id.trim().is_empty() {
            out.push(Violation::new(format!("evidence[{i}].evidence_id"), "empty"));
        }
        if e.text.as_str().trim().is_empty() {
            out.push(Violation::new(format!("evidence[{i}].text"), "empty"));
        }
        dup_id |= !ids.insert(e.evidence_id.as_str());
    }
    if dup_id {
        out.push(Violation::new("evidence", "duplicate evidence_id"));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Chat,
    CompletionWithLogprobs,
    Embedding,
}

impl Modality {
    pub fn supports_logprobs(self) -> bool {
        matches!(self, Modality::Chat | Modality::CompletionWithLogprobs)
    }
}

fn default_context_budget() -> usize {
    8192
}

/// Provider and model identity. The `model_id` is recorded verbatim.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModelSpec {
    pub provider: String,
    pub model_id: String,
    pub modality: Modality,
    /// Maximum prompt size in (estimated) tokens.
    #[serde(default = "default_context_budget")]
    pub context_budget: usize,
}

impl ModelSpec {
    pub fn new(provider: &str, model_id: &str, modality: Modality) -> Self {
        Self {
            provider: provider.to_string(),
            model_id: model_id.to_string(),
            modality,
            context_budget: default_context_budget(),
        }
    }

    pub fn with_context_budget(mut self, tokens: usize) -> Self {
        self.context_budget = tokens;
        self
    }
}

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum SamplerError {
    #[error("temperature {0} outside [0, 2]")]
    Temperature(f64),
    #[error("top_p {0} outside (0, 1]")]
    TopP(f64),
    #[error("max_tokens must be at least 1")]
    MaxTokens,
    #[error("best_of must be at least 1")]
    BestOf,
    #[error("penalty {0} is not finite")]
    Penalty(f64),
}

/// Provider-side sampling knobs, passed through verbatim.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerSettings {
    pub temperature: f64,
    pub top_p: f64,
    #[serde(default)]
    pub frequency_penalty: f64,
    #[serde(default)]
    pub presence_penalty: f64,
    pub max_tokens: u32,
    #[serde(default = "one")]
    pub best_of: u32,
    #[serde(default)]
    pub seed: Option<u64>,
}

fn one() -> u32 {
    1
}

impl Default for SamplerSettings {
    /// temperature 0.7, top-p 1, no penalties, max length 256, best of 1.
    fn default() -> Self {
        Self {
            temperature: 0.7,
            top_p: 1.0,
            frequency_penalty: 0.0,
            presence_penalty: 0.0,
            max_tokens: 256,
            best_of: 1,
            seed: None,
        }
    }
}

impl SamplerSettings {
    pub fn validate(&self) -> Result<(), SamplerError> {
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(SamplerError::Temperature(self.temperature));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(SamplerError::TopP(self.top_p));
        }
        for p in [self.frequency_penalty, self.presence_penalty] {
            if !p.is_finite() {
                return Err(SamplerError::Penalty(p));
            }
        }
        if self.max_tokens == 0 {
            return Err(SamplerError::MaxTokens);
        }
        if self.best_of == 0 {
            return Err(SamplerError::BestOf);
        }
        Ok(())
    }

    pub fn with_temperature(&self, t: f64) -> Self {
        Self {
            temperature: t,
            ..self.clone()
        }
    }

    /// Seed for the `rep`-th draw: the base seed offset by `rep`, or none when
    /// the base is unseeded.
    pub fn for_repetition(&self, rep: u32) -> Self {
        Self {
            seed: self.seed.map(|s| s.wrapping_add(rep as u64)),
            ..self.clone()
        }
    }
}
