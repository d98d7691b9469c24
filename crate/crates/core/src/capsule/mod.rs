//! Disclosure capsules: one canonical JSON file holding a run's case,
//! models, sampler settings, prompts, raw responses and derived reports.
//!
//! `capsule_id` is the SHA-256 of the canonical encoding of every other
//! field. Reports are recomputable from the recorded responses alone, which
//! [`replay`] does without touching a network.

mod derive;
mod secrets;
mod store;
mod verify;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::aggregate::Report;
use crate::elicitation::{ElicitQuestion, PromptTemplate, SampleSet, SweepGrid};
use crate::hashing::{canonical_json, canonical_json_value, content_hash, sha256_hex};
use crate::ladder::LadderConfig;
use crate::lens::{DistanceMatrix, EmbeddingCall, ProbeSpec};
use crate::model::{InterpretationCase, ModelSpec, SamplerSettings};
use crate::transcript::Transcript;

pub use derive::derive;
pub use secrets::{scan_for_secrets, SecretFinding};
pub use store::CapsuleStore;
pub use verify::{verify, verify_bytes, Check, VerifyReport};

pub const CAPSULE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CapsuleError {
    #[error("refusing to record: {0}")]
    SecretDetected(SecretFinding),
    #[error("capsule failed verification: {0}")]
    VerificationFailed(VerifyReport),
    #[error("replay diverges from the recorded reports at {} field(s); first at {}", .0.len(), .0.first().map_or("", |d| d.path.as_str()))]
    DivergenceDetected(Vec<Divergence>),
    #[error("cannot derive reports: {0}")]
    Derivation(String),
    #[error("malformed capsule: {0}")]
    Malformed(String),
    #[error("capsule store: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolInfo {
    pub name: String,
    pub version: String,
}

impl ToolInfo {
    pub fn current() -> Self {
        Self {
            name: crate::TOOL_NAME.into(),
            version: crate::TOOL_VERSION.into(),
        }
    }
}

/// Hashes of one sanitized text field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextHash {
    pub field: String,
    /// SHA-256 of the bytes as supplied.
    pub provenance: String,
    /// SHA-256 of the sanitized value.
    pub value_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseSnapshot {
    pub case: InterpretationCase,
    pub case_hash: String,
    pub texts: Vec<TextHash>,
}

pub(crate) fn text_hashes(case: &InterpretationCase) -> Vec<TextHash> {
    let mut fields = vec![
        ("contract_text".to_string(), &case.contract_text),
        ("clause".to_string(), &case.clause),
    ];
    if let Some(b) = &case.legal_baseline {
        fields.push(("legal_baseline".into(), b));
    }
    for (i, r) in case.candidate_readings.iter().enumerate() {
        fields.push((format!("candidate_readings[{i}].proposition"), &r.proposition));
    }
    for (i, e) in case.evidence.iter().enumerate() {
        fields.push((format!("evidence[{i}].text"), &e.text));
    }
    fields
        .into_iter()
        .map(|(field, t)| TextHash {
            field,
            provenance: t.provenance().to_string(),
            value_hash: t.value_hash(),
        })
        .collect()
}

impl CaseSnapshot {
    pub fn of(case: &InterpretationCase) -> Self {
        Self {
            case: case.clone(),
            case_hash: content_hash(case),
            texts: text_hashes(case),
        }
    }
}

/// What was asked, of which models, with which settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum RunSpec {
    Elicit {
        template: PromptTemplate,
        questions: Vec<ElicitQuestion>,
        models: Vec<ModelSpec>,
        sampler: SamplerSettings,
        repetitions: u32,
    },
    Sweep {
        template: PromptTemplate,
        grid: SweepGrid,
        sampler: SamplerSettings,
    },
    Ladder {
        /// Label of the reading under test.
        proposition: String,
        config: LadderConfig,
    },
    Probe {
        spec: ProbeSpec,
    },
}

impl RunSpec {
    pub fn command(&self) -> &'static str {
        match self {
            RunSpec::Elicit { .. } => "elicit",
            RunSpec::Sweep { .. } => "sweep",
            RunSpec::Ladder { .. } => "ladder",
            RunSpec::Probe { .. } => "probe",
        }
    }
}

/// Everything computed from the raw responses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Derived {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sample_sets: Vec<SampleSet>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distance_matrix: Option<DistanceMatrix>,
    pub report: Report,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Capsule {
    pub schema_version: u32,
    pub capsule_id: String,
    pub tool: ToolInfo,
    pub parse_rules_version: String,
    pub started_at: String,
    pub finished_at: String,
    pub case: CaseSnapshot,
    pub run: RunSpec,
    pub transcript: Transcript,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub embedding_calls: Vec<EmbeddingCall>,
    pub derived: Derived,
}

/// Run artifacts handed to [`record`].
#[derive(Debug, Clone)]
pub struct RecordInput {
    pub case: InterpretationCase,
    pub run: RunSpec,
    pub transcript: Transcript,
    pub embedding_calls: Vec<EmbeddingCall>,
    pub derived: Derived,
    pub started_at: String,
    pub finished_at: String,
}

fn id_over(mut value: Value) -> String {
    if let Some(obj) = value.as_object_mut() {
        obj.remove("capsule_id");
    }
    sha256_hex(canonical_json_value(&value).as_bytes())
}

impl Capsule {
    /// Content hash of everything except `capsule_id`.
    pub fn compute_id(&self) -> String {
        id_over(serde_json::to_value(self).expect("capsule serializes"))
    }

    /// Recompute and store `capsule_id`.
    pub fn seal(&mut self) {
        self.capsule_id = self.compute_id();
    }

    /// The normative file bytes.
    pub fn to_bytes(&self) -> Vec<u8> {
        canonical_json(self).into_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CapsuleError> {
        serde_json::from_slice(bytes).map_err(|e| CapsuleError::Malformed(e.to_string()))
    }

    pub fn file_name(&self) -> String {
        format!("{}.capsule.json", self.capsule_id)
    }
}

pub fn record(input: RecordInput) -> Result<Capsule, CapsuleError> {
    let mut capsule = Capsule {
        schema_version: CAPSULE_SCHEMA_VERSION,
        capsule_id: String::new(),
        tool: ToolInfo::current(),
        parse_rules_version: crate::PARSE_RULES_VERSION.into(),
        started_at: input.started_at,
        finished_at: input.finished_at,
        case: CaseSnapshot::of(&input.case),
        run: input.run,
        transcript: input.transcript,
        embedding_calls: input.embedding_calls,
        derived: input.derived,
    };
    if let Some(finding) = scan_for_secrets(&String::from_utf8_lossy(&capsule.to_bytes()))
        .into_iter()
        .next()
    {
        return Err(CapsuleError::SecretDetected(finding));
    }
    capsule.seal();
    Ok(capsule)
}

/// One field where replay disagrees with the record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Divergence {
    /// JSON pointer into the capsule.
    pub path: String,
    pub recorded: Value,
    pub recomputed: Value,
}

fn escape_pointer(key: &str) -> String {
    key.replace('~', "~0").replace('/', "~1")
}

fn diff_values(path: &str, recorded: &Value, recomputed: &Value, out: &mut Vec<Divergence>) {
    match (recorded, recomputed) {
        (Value::Object(a), Value::Object(b)) => {
            let keys: std::collections::BTreeSet<&String> = a.keys().chain(b.keys()).collect();
            for k in keys {
                let p = format!("{path}/{}", escape_pointer(k));
                diff_values(
                    &p,
                    a.get(k).unwrap_or(&Value::Null),
                    b.get(k).unwrap_or(&Value::Null),
                    out,
                );
            }
        }
        (Value::Array(a), Value::Array(b)) if a.len() == b.len() => {
            for (i, (x, y)) in a.iter().zip(b).enumerate() {
                diff_values(&format!("{path}/{i}"), x, y, out);
            }
        }
        (a, b) if a != b => out.push(Divergence {
            path: path.to_string(),
            recorded: a.clone(),
            recomputed: b.clone(),
        }),
        _ => {}
    }
}

/// Recompute the derived reports from the recorded raw responses and
/// compare them byte for byte with the recorded ones.
pub fn replay(capsule: &Capsule) -> Result<Derived, CapsuleError> {
    let recomputed = derive(
        &capsule.run,
        &capsule.case.case,
        &capsule.transcript,
        &capsule.embedding_calls,
        &capsule.started_at,
    )?;
    let recorded_bytes = canonical_json(&capsule.derived);
    let recomputed_bytes = canonical_json(&recomputed);
    if recorded_bytes == recomputed_bytes {
        return Ok(recomputed);
    }
    let mut diffs = Vec::new();
    diff_values(
        "/derived",
        &serde_json::to_value(&capsule.derived).expect("serializes"),
        &serde_json::to_value(&recomputed).expect("serializes"),
        &mut diffs,
    );
    Err(CapsuleError::DivergenceDetected(diffs))
}

/// Verify the file, then replay it.
pub fn replay_bytes(bytes: &[u8]) -> Result<(Capsule, Derived), CapsuleError> {
    let report = verify_bytes(bytes);
    if !report.passed() {
        return Err(CapsuleError::VerificationFailed(report));
    }
    let capsule = Capsule::from_bytes(bytes)?;
    let derived = replay(&capsule)?;
    Ok((capsule, derived))
}
