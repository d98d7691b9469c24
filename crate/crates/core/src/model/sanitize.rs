//! Text sanitization: control/zero-width stripping, NFC, confusable warnings.

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::hashing::sha256_hex;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum SanitizeError {
    #[error("input is not valid UTF-8 (first bad byte at offset {offset})")]
    InvalidEncoding { offset: usize },
}

/// A character that renders like a Latin letter but is not one.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusableWarning {
    /// Index in `chars()` of the sanitized value.
    pub char_index: usize,
    pub found: char,
    pub looks_like: char,
}

/// Sanitized text plus the hash of the bytes it came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleanText {
    value: String,
    /// SHA-256 of the original, unsanitized bytes.
    provenance: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    warnings: Vec<ConfusableWarning>,
}

impl CleanText {
    pub fn as_str(&self) -> &str {
        &self.value
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    /// SHA-256 of the sanitized value.
    pub fn value_hash(&self) -> String {
        sha256_hex(self.value.as_bytes())
    }

    pub fn warnings(&self) -> &[ConfusableWarning] {
        &self.warnings
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    /// True when sanitization did not alter the original text.
    pub fn unchanged(&self) -> bool {
        self.value_hash() == self.provenance
    }

    /// Sanitize an already-decoded string.
    pub fn from_str_lossless(raw: &str) -> Self {
        sanitize_text(raw.as_bytes()).expect("&str is valid UTF-8")
    }

    pub fn into_string(self) -> String {
        self.value
    }
}

impl std::fmt::Display for CleanText {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.value)
    }
}

impl AsRef<str> for CleanText {
    fn as_ref(&self) -> &str {
        &self.value
    }
}

fn is_stripped(c: char) -> bool {
    match c {
        '\n' | '\t' => false,
        '\u{200B}'..='\u{200D}' | '\u{FEFF}' => true,
        c => c.is_control(),
    }
}

/// Decode, strip zero-width and control characters, then NFC-normalize.
///
/// Stripping runs before normalization so that removing a character can
/// never leave a composable sequence behind.
pub fn sanitize_text(raw: &[u8]) -> Result<CleanText, SanitizeError> {
    let decoded = std::str::from_utf8(raw).map_err(|e| SanitizeError::InvalidEncoding {
        offset: e.valid_up_to(),
    })?;
    let stripped: String = decoded.chars().filter(|c| !is_stripped(*c)).collect();
    let value: String = stripped.nfc().collect();
    let warnings = confusables(&value);
    Ok(CleanText {
        value,
        provenance: sha256_hex(raw),
        warnings,
    })
}

fn confusables(text: &str) -> Vec<ConfusableWarning> {
    text.chars()
        .enumerate()
        .filter_map(|(i, c)| {
            latin_lookalike(c).map(|l| ConfusableWarning {
                char_index: i,
                found: c,
                looks_like: l,
            })
        })
        .collect()
}

/// Common Cyrillic and Greek homoglyphs of Latin letters.
fn latin_lookalike(c: char) -> Option<char> {
    Some(match c {
        'а' => 'a',
        'е' => 'e',
        'о' => 'o',
        'р' => 'p',
        'с' => 'c',
        'у' => 'y',
        'х' => 'x',
        'і' => 'i',
        'ј' => 'j',
        'ѕ' => 's',
        'А' => 'A',
        'В' => 'B',
        'Е' => 'E',
        'К' => 'K',
        'М' => 'M',
        'Н' => 'H',
        'О' => 'O',
        'Р' => 'P',
        'С' => 'C',
        'Т' => 'T',
        'Х' => 'X',
        'ο' => 'o',
        'α' => 'a',
        'ν' => 'v',
        'Α' => 'A',
        'Β' => 'B',
        'Ε' => 'E',
        'Ο' => 'O',
        'Ρ' => 'P',
        'Τ' => 'T',
        _ => return None,
    })
}
