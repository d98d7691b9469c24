//! Measurement engine for model-assisted contract interpretation.
//!
//! The pipeline: load and sanitize an [`model::InterpretationCase`], query
//! chat/completion and embedding models through a [`backends::Backend`],
//! turn their answers into numbers ([`elicitation`], [`ladder`], [`lens`]),
//! summarize them ([`aggregate`]) and seal everything in a replayable
//! [`capsule`].

pub mod aggregate;
pub mod backends;
pub mod capsule;
pub mod elicitation;
pub mod fixtures;
pub mod hashing;
pub mod ladder;
pub mod lens;
pub mod model;
pub mod numeric;
pub mod pipeline;
pub mod transcript;

/// Version of the response-parsing rules. Recorded in every capsule; replay
/// under a different version may legitimately diverge.
pub const PARSE_RULES_VERSION: &str = "1";

pub const TOOL_NAME: &str = "verba";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
