//! The on-disk case document.
//!
//! ```json
//! {
//!   "case_id": "stewart",                     // optional
//!   "contract_text": "...",
//!   "clause": "...",
//!   "readings": [{"label": "monthly", "proposition": "..."}],
//!   "evidence": [{"evidence_id": "phone", "kind": "communication",
//!                 "text": "...", "weight_note": ""}],
//!   "legal_baseline": "..."                   // optional, may be null
//! }
//! ```
//!
//! Every text field is sanitized on load; unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{sanitize_text, validate_case, EvidenceItem, EvidenceKind, InterpretationCase, Reading, Violation};
use crate::hashing::sha256_hex;

#[derive(Debug, thiserror::Error)]
pub enum CaseLoadError {
    #[error("cannot read case file: {0}")]
    Io(#[from] std::io::Error),
    #[error("case document is not valid JSON for the case schema: {0}")]
    Json(#[from] serde_json::Error),
    #[error("case document violates {} invariant(s): {}", .0.len(), join(.0))]
    Invalid(Vec<Violation>),
}

fn join(v: &[Violation]) -> String {
    v.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReadingFile {
    pub label: String,
    pub proposition: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvidenceFile {
    pub evidence_id: String,
    pub kind: EvidenceKind,
    pub text: String,
    #[serde(default)]
    pub weight_note: String,
}

impl EvidenceFile {
    pub fn into_item(self) -> EvidenceItem {
        EvidenceItem {
            evidence_id: self.evidence_id,
            kind: self.kind,
            text: sanitize_str(&self.text),
            weight_note: self.weight_note,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub case_id: Option<String>,
    pub contract_text: String,
    pub clause: String,
    pub readings: Vec<ReadingFile>,
    #[serde(default)]
    pub evidence: Vec<EvidenceFile>,
    #[serde(default)]
    pub legal_baseline: Option<String>,
}

fn sanitize_str(s: &str) -> super::CleanText {
    sanitize_text(s.as_bytes()).expect("decoded JSON strings are UTF-8")
}

impl CaseFile {
    /// Sanitize and validate into an [`InterpretationCase`].
    pub fn into_case(self) -> Result<InterpretationCase, CaseLoadError> {
        let case_id = match self.case_id {
            Some(id) => id,
            None => {
                let digest = sha256_hex(
                    serde_json::to_string(&(&self.contract_text, &self.clause))
                        .expect("strings serialize")
                        .as_bytes(),
                );
                format!("case-{}", &digest[..12])
            }
        };
        let case = InterpretationCase {
            case_id,
            contract_text: sanitize_str(&self.contract_text),
            clause: sanitize_str(&self.clause),
            candidate_readings: self
                .readings
                .into_iter()
                .map(|r| Reading {
                    label: r.label,
                    proposition: sanitize_str(&r.proposition),
                })
                .collect(),
            evidence: self.evidence.into_iter().map(EvidenceFile::into_item).collect(),
            legal_baseline: self.legal_baseline.as_deref().map(sanitize_str),
        };
        let violations = validate_case(&case);
        if violations.is_empty() {
            Ok(case)
        } else {
            Err(CaseLoadError::Invalid(violations))
        }
    }

    /// The document form of a case (sanitized texts).
    pub fn from_case(case: &InterpretationCase) -> Self {
        CaseFile {
            case_id: Some(case.case_id.clone()),
            contract_text: case.contract_text.as_str().to_string(),
            clause: case.clause.as_str().to_string(),
            readings: case
                .candidate_readings
                .iter()
                .map(|r| ReadingFile {
                    label: r.label.clone(),
                    proposition: r.proposition.as_str().to_string(),
                })
                .collect(),
            evidence: case
                .evidence
                .iter()
                .map(|e| EvidenceFile {
                    evidence_id: e.evidence_id.clone(),
                    kind: e.kind,
                    text: e.text.as_str().to_string(),
                    weight_note: e.weight_note.clone(),
                })
                .collect(),
            legal_baseline: case.legal_baseline.as_ref().map(|b| b.as_str().to_string()),
        }
    }
}

pub fn parse_case(bytes: &[u8]) -> Result<InterpretationCase, CaseLoadError> {
    let file: CaseFile = serde_json::from_slice(bytes)?;
    file.into_case()
}

pub fn load_case(path: &Path) -> Result<InterpretationCase, CaseLoadError> {
    parse_case(&std::fs::read(path)?)
}
