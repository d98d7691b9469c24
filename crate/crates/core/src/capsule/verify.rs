//! Integrity checks on capsule files. Failures are report entries.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{id_over, scan_for_secrets, text_hashes, Capsule, CAPSULE_SCHEMA_VERSION};
use crate::hashing::{canonical_json_value, content_hash, sha256_hex};
use crate::model::sanitize_text;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        !self.checks.is_empty() && self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    fn push(&mut self, name: &str, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check {
            name: name.to_string(),
            passed,
            detail: detail.into(),
        });
    }
}

impl std::fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let failed: Vec<String> = self.failures().map(|c| format!("{} ({})", c.name, c.detail)).collect();
        if failed.is_empty() {
            write!(f, "all {} checks passed", self.checks.len())
        } else {
            write!(f, "failed: {}", failed.join("; "))
        }
    }
}

/// Check a capsule file as found on disk.
pub fn verify_bytes(bytes: &[u8]) -> VerifyReport {
    let mut r = VerifyReport { checks: Vec::new() };
    let value: Value = match serde_json::from_slice(bytes) {
        Ok(v @ Value::Object(_)) => v,
        Ok(_) => {
            r.push("parse", false, "top level is not a JSON object");
            return r;
        }
        Err(e) => {
            r.push("parse", false, e.to_string());
            return r;
        }
    };
    r.push("parse", true, "valid JSON");
    match value.get("schema_version") {
        Some(v) if v.as_u64() == Some(CAPSULE_SCHEMA_VERSION as u64) => {
            r.push("schema_version", true, format!("version {CAPSULE_SCHEMA_VERSION}"))
        }
        other => {
            let found = other.map_or("missing".to_string(), |v| v.to_string());
            r.push("schema_version", false, format!("unsupported version {found}"));
            return r;
        }
    }
    let canonical = canonical_json_value(&value);
    r.push(
        "canonical_form",
        canonical.as_bytes() == bytes,
        if canonical.as_bytes() == bytes {
            "bytes are canonical"
        } else {
            "bytes differ from canonical encoding"
        },
    );
    let recorded_id = value
        .get("capsule_id")
        .and_then(Value::as_str)
        .unwrap_or("")
        .to_string();
    let computed = id_over(value.clone());
    r.push(
        "capsule_id",
        computed == recorded_id,
        if computed == recorded_id {
            computed.clone()
        } else {
            format!("recorded {recorded_id}, computed {computed}")
        },
    );
    match serde_json::from_value::<Capsule>(value) {
        Ok(capsule) => content_checks(&capsule, &mut r),
        Err(e) => r.push("structure", false, e.to_string()),
    }
    r
}

/// Check an in-memory capsule by way of its file bytes.
pub fn verify(capsule: &Capsule) -> VerifyReport {
    verify_bytes(&capsule.to_bytes())
}

fn content_checks(c: &Capsule, r: &mut VerifyReport) {
    let snap = &c.case;
    let mut problems = Vec::new();
    if content_hash(&snap.case) != snap.case_hash {
        problems.push("case_hash does not match case".to_string());
    }
    if text_hashes(&snap.case) != snap.texts {
        problems.push("text hashes do not match case texts".to_string());
    }
    let all_texts = std::iter::once(&snap.case.contract_text)
        .chain(std::iter::once(&snap.case.clause))
        .chain(snap.case.legal_baseline.iter())
        .chain(snap.case.candidate_readings.iter().map(|x| &x.proposition))
        .chain(snap.case.evidence.iter().map(|e| &e.text));
    for t in all_texts {
        match sanitize_text(t.as_str().as_bytes()) {
            Ok(again) if again.as_str() == t.as_str() => {}
            _ => problems.push(format!("text {:?} is not in sanitized form", truncate(t.as_str()))),
        }
    }
    r.push(
        "case_hashes",
        problems.is_empty(),
        summarize(problems, "case snapshot consistent"),
    );

    let mut problems = Vec::new();
    for (hash, prompt) in &c.transcript.prompts {
        if sha256_hex(prompt.as_bytes()) != *hash {
            problems.push(format!("prompt {hash} does not hash to its key"));
        }
    }
    for (i, e) in c.transcript.entries.iter().enumerate() {
        if !c.transcript.prompts.contains_key(&e.prompt_hash) {
            problems.push(format!("entry {i} references missing prompt {}", e.prompt_hash));
        }
    }
    r.push(
        "prompt_hashes",
        problems.is_empty(),
        summarize(problems, format!("{} prompts", c.transcript.prompts.len())),
    );

    let mut problems = Vec::new();
    for (i, e) in c.transcript.entries.iter().enumerate() {
        if let Some(p) = c.transcript.prompt(e) {
            let h = e.recomputed_hash(p);
            if h != e.request_hash {
                problems.push(format!("entry {i}: recorded {}, computed {h}", e.request_hash));
            }
        }
    }
    r.push(
        "request_hashes",
        problems.is_empty(),
        summarize(problems, format!("{} requests", c.transcript.entries.len())),
    );

    let findings = scan_for_secrets(&String::from_utf8_lossy(&c.to_bytes()));
    r.push(
        "secrets",
        findings.is_empty(),
        summarize(
            findings.iter().map(|f| f.to_string()).collect(),
            "no key-shaped strings",
        ),
    );
}

fn truncate(s: &str) -> String {
    s.chars().take(40).collect()
}

fn summarize(problems: Vec<String>, ok: impl Into<String>) -> String {
    if problems.is_empty() {
        ok.into()
    } else {
        let n = problems.len();
        let mut shown: Vec<String> = problems.into_iter().take(3).collect();
        if n > 3 {
            shown.push(format!("and {} more", n - 3));
        }
        shown.join("; ")
    }
}
