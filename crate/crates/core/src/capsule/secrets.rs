//! Refuse to write anything that looks like a credential.

use std::sync::OnceLock;

use regex::Regex;

/// Environment variables whose values must never reach a capsule.
pub const KEY_ENV_PREFIX: &str = "GI_API_KEY_";

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct SecretFinding {
    pub pattern: String,
    /// Byte offset in the scanned text.
    pub offset: usize,
}

impl std::fmt::Display for SecretFinding {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "text matching {} at byte {}", self.pattern, self.offset)
    }
}

const PATTERNS: [(&str, &str); 6] = [
    ("openai-style key", r"\bsk-[A-Za-z0-9_\-]{20,}"),
    ("aws access key", r"\bAKIA[0-9A-Z]{16}\b"),
    ("google api key", r"\bAIza[0-9A-Za-z_\-]{35}\b"),
    ("bearer token", r"(?i)\bbearer\s+[A-Za-z0-9._\-]{20,}"),
    ("private key block", r"-----BEGIN [A-Z ]*PRIVATE KEY-----"),
    ("github token", r"\bgh[pousr]_[A-Za-z0-9]{30,}\b"),
];

/// Key-shaped strings and the values of any `GI_API_KEY_*` variables found
/// in `text`, in order of position.
pub fn scan_for_secrets(text: &str) -> Vec<SecretFinding> {
    static COMPILED: OnceLock<Vec<(&'static str, Regex)>> = OnceLock::new();
    let compiled = COMPILED.get_or_init(|| {
        PATTERNS
            .iter()
            .map(|(name, re)| (*name, Regex::new(re).expect("static regex")))
            .collect()
    });
    let mut found: Vec<SecretFinding> = compiled
        .iter()
        .filter_map(|(name, re)| {
            re.find(text).map(|m| SecretFinding {
                pattern: name.to_string(),
                offset: m.start(),
            })
        })
        .collect();
    for (var, value) in std::env::vars() {
        if var.starts_with(KEY_ENV_PREFIX) && value.len() >= 8 {
            if let Some(offset) = text.find(&value) {
                found.push(SecretFinding {
                    pattern: format!("value of ${var}"),
                    offset,
                });
            }
        }
    }
    found.sort_by_key(|f| f.offset);
    found
}
