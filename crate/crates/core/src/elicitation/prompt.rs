//! Prompt templates with named slots.
//!
//! Slots: `{contract}`, `{clause}`, `{question}`, `{evidence}`, `{baseline}`.
//! `{evidence}` and `{baseline}` render to nothing when there is nothing to
//! show; any other `{name}` is an error.

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::model::{CleanText, EvidenceItem, InterpretationCase};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ResponseFormat {
    YesNo,
    #[default]
    PercentConfidence,
    FreeText,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub template_id: String,
    pub body: String,
    pub response_format: ResponseFormat,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RenderError {
    #[error("template slot {{{0}}} cannot be resolved")]
    UnresolvedSlot(String),
    #[error("template body is empty")]
    EmptyTemplate,
}

const EVIDENCE_HEADER: &str = "Extrinsic evidence, in the order presented:\n\n";

/// Numbered evidence section. The section for a prefix of `items` is a
/// string prefix of the section for all of them.
pub fn render_evidence_section(items: &[EvidenceItem]) -> String {
    if items.is_empty() {
        return String::new();
    }
    let mut out = String::from(EVIDENCE_HEADER);
    for (i, e) in items.iter().enumerate() {
        out.push_str(&format!(
            "[{}] {} ({}):\n{}\n\n",
            i + 1,
            e.evidence_id,
            e.kind.as_str(),
            e.text.as_str().trim_end()
        ));
    }
    out
}

fn render_baseline(baseline: Option<&CleanText>) -> String {
    match baseline {
        Some(b) if !b.as_str().trim().is_empty() => {
            format!("Assume this default legal rule applies: {}\n\n", b.as_str().trim_end())
        }
        _ => String::new(),
    }
}

impl PromptTemplate {
    pub fn new(template_id: &str, body: &str, response_format: ResponseFormat) -> Self {
        Self {
            template_id: template_id.to_string(),
            body: body.to_string(),
            response_format,
        }
    }

    /// Confidence-elicitation template used by `elicit` and the ladder.
    pub fn confidence() -> Self {
        Self::new(
            "confidence-v1",
            "{baseline}Contract:\n{contract}\n\nDisputed language:\n{clause}\n\n{evidence}\
Proposition: {question}\n\n\
Predict how likely the proposition is to be true. Give your prediction with your \
confidence as a percentage in parentheses, for example: Likely (70%).",
            ResponseFormat::PercentConfidence,
        )
    }

    /// Yes/no template used by default in sweeps.
    pub fn yes_no() -> Self {
        Self::new(
            "yes-no-v1",
            "{baseline}Contract:\n{contract}\n\nDisputed language:\n{clause}\n\n{evidence}\
Question: {question}\n\n\
Answer yes or no first. Then give your confidence that the answer is yes as a \
percentage in parentheses, for example: Yes (80%).",
            ResponseFormat::YesNo,
        )
    }

    pub fn slots(&self) -> Vec<String> {
        slot_regex()
            .captures_iter(&self.body)
            .map(|c| c[1].to_string())
            .collect()
    }
}

fn slot_regex() -> Regex {
    Regex::new(r"\{([a-z_]+)\}").expect("static regex")
}

pub fn render_prompt(
    template: &PromptTemplate,
    case: &InterpretationCase,
    question: &str,
    evidence_subset: &[EvidenceItem],
) -> Result<CleanText, RenderError> {
    if template.body.trim().is_empty() {
        return Err(RenderError::EmptyTemplate);
    }
    let mut unresolved = None;
    let rendered = slot_regex().replace_all(&template.body, |c: &regex::Captures| match &c[1] {
        "contract" => case.contract_text.as_str().to_string(),
        "clause" => case.clause.as_str().to_string(),
        "question" => question.to_string(),
        "evidence" => render_evidence_section(evidence_subset),
        "baseline" => render_baseline(case.legal_baseline.as_ref()),
        other => {
            unresolved.get_or_insert_with(|| other.to_string());
            String::new()
        }
    });
    if let Some(slot) = unresolved {
        return Err(RenderError::UnresolvedSlot(slot));
    }
    Ok(CleanText::from_str_lossless(&rendered))
}
