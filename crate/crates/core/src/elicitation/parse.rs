//! Turning raw model text into a verdict and a confidence.
//!
//! The scanner walks the text left to right and the first acceptable number
//! wins: a percentage in `[0, 100]` (optionally in parentheses) or a decimal
//! probability written `0.xx` or `1.0`. Numbers glued to letters, signs or
//! other digits ("Section 3", "-5%", "v2.1") are skipped. Qualitative
//! phrases without a number stay unparsed.

use serde::{Deserialize, Serialize};

use super::prompt::ResponseFormat;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Yes,
    No,
    Unparsed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParsedResponse {
    pub verdict: Verdict,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
    pub raw_text: String,
    pub parse_rule: String,
}

pub const RULE_PAREN_PERCENT: &str = "paren_percent";
pub const RULE_PERCENT: &str = "percent";
pub const RULE_DECIMAL: &str = "decimal";
pub const RULE_YES_NO_TOKEN: &str = "yes_no_token";
pub const RULE_NONE: &str = "none";
pub const RULE_FREE_TEXT: &str = "free_text";

#[derive(Debug, Clone, Copy, PartialEq)]
struct NumericMatch {
    value: f64,
    rule: &'static str,
}

fn is_glue(c: char) -> bool {
    c.is_alphanumeric() || c == '-' || c == '.' || c == '_'
}

fn scan_number(text: &str) -> Option<NumericMatch> {
    let bytes = text.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if !bytes[i].is_ascii_digit() {
            i += 1;
            continue;
        }
        let start = i;
        let glued = text[..start].chars().next_back().is_some_and(is_glue);
        while i < bytes.len() && bytes[i].is_ascii_digit() {
            i += 1;
        }
        let int_end = i;
        if i + 1 < bytes.len() && bytes[i] == b'.' && bytes[i + 1].is_ascii_digit() {
            i += 1;
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
        }
        let number = &text[start..i];
        let rest = &text[i..];
        let trailing_glue = rest.chars().next().is_some_and(|c| c.is_alphanumeric() || c == '_');
        if glued || trailing_glue {
            continue;
        }
        let after_ws = rest.trim_start_matches([' ', '\u{a0}']);
        if let Some(after_pct) = after_ws.strip_prefix('%') {
            // Shift the decimal point textually so the value is correctly
            // rounded ("33.33%" parses exactly like "0.3333").
            let value: f64 = match format!("{number}e-2").parse() {
                Ok(v) => v,
                Err(_) => continue,
            };
            if !(0.0..=1.0).contains(&value) {
                continue;
            }
            let before = text[..start].trim_end_matches([' ', '\u{a0}']);
            let paren = before.ends_with('(') && after_pct.trim_start().starts_with(')');
            let rule = if paren { RULE_PAREN_PERCENT } else { RULE_PERCENT };
            return Some(NumericMatch { value, rule });
        }
        let int_part = &text[start..int_end];
        let frac = &text[int_end..i];
        let decimal =
            !frac.is_empty() && (int_part == "0" || (int_part == "1" && frac[1..].bytes().all(|b| b == b'0')));
        if decimal {
            if let Ok(value) = number.parse::<f64>() {
                return Some(NumericMatch {
                    value,
                    rule: RULE_DECIMAL,
                });
            }
        }
    }
    None
}

fn leading_token(text: &str) -> Option<Verdict> {
    let word: String = text
        .trim_start_matches(|c: char| !c.is_alphanumeric())
        .chars()
        .take_while(|c| c.is_alphanumeric())
        .collect::<String>()
        .to_lowercase();
    match word.as_str() {
        "yes" => Some(Verdict::Yes),
        "no" => Some(Verdict::No),
        _ => None,
    }
}

fn threshold(c: f64) -> Verdict {
    if c >= 0.5 {
        Verdict::Yes
    } else {
        Verdict::No
    }
}

/// Parse a response to a percent-confidence prompt.
pub fn parse_confidence(raw: &str) -> ParsedResponse {
    parse_response(raw, ResponseFormat::PercentConfidence)
}

pub fn parse_response(raw: &str, format: ResponseFormat) -> ParsedResponse {
    let build = |verdict, confidence, rule: &str| ParsedResponse {
        verdict,
        confidence,
        raw_text: raw.to_string(),
        parse_rule: rule.to_string(),
    };
    if format == ResponseFormat::FreeText {
        return build(Verdict::Unparsed, None, RULE_FREE_TEXT);
    }
    let number = scan_number(raw);
    let token = (format == ResponseFormat::YesNo).then(|| leading_token(raw)).flatten();
    match (number, token) {
        (Some(m), Some(v)) => build(v, Some(m.value), m.rule),
        (Some(m), None) => build(threshold(m.value), Some(m.value), m.rule),
        (None, Some(v)) => build(v, None, RULE_YES_NO_TOKEN),
        (None, None) => build(Verdict::Unparsed, None, RULE_NONE),
    }
}

/// Canonical text form of a confidence; parsing it yields the same value.
pub fn render_confidence(c: f64) -> String {
    let s = c.to_string();
    if s.contains('.') {
        s
    } else {
        format!("{s}.0")
    }
}
