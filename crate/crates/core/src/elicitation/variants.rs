//! Prompt variants for robustness sweeps.
//!
//! `templated_local` wraps the seed question, verbatim, in fixed framing
//! phrases, so every variant asks about the same proposition. Variant 0 is
//! always the seed itself. `model_generated` asks a generator model for
//! rephrasings and keeps only distinct ones whose negation count has the
//! same parity as the seed's, so that "yes" keeps affirming the same claim.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::backends::{Backend, CompletionRequest};
use crate::hashing::sha256_hex;
use crate::model::{CleanText, ModelSpec, SamplerSettings};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenerationMethod {
    TemplatedLocal,
    ModelGenerated,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Variant {
    pub variant_id: String,
    pub text: String,
    /// Identifier of the proposition a "yes" affirms; shared by all variants
    /// of one seed.
    pub proposition_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariantSet {
    pub seed_question: String,
    pub variants: Vec<Variant>,
    pub generation_method: GenerationMethod,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator_model: Option<ModelSpec>,
    /// The generator's verbatim reply, when a model produced the variants.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator_raw: Option<String>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum VariantError {
    #[error("variant generator failed: {0}")]
    GeneratorFailed(String),
    #[error("asked for {requested} distinct variants, only {available} available")]
    InsufficientDistinctVariants { requested: usize, available: usize },
    #[error("n must be at least 1")]
    ZeroRequested,
}

pub fn proposition_id(question: &str) -> String {
    sha256_hex(question.trim().as_bytes())[..16].to_string()
}

fn fold(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

const PREFIXES: [&str; 6] = [
    "",
    "Please answer the following question. ",
    "Consider the agreement carefully. ",
    "Reading the contract as an ordinary party would: ",
    "Based only on the contract language: ",
    "From the perspective of a reasonable reader: ",
];

const SUFFIXES: [&str; 5] = [
    "",
    " Answer based on the text of the agreement.",
    " Keep your answer brief.",
    " Be precise.",
    " Consider how the parties would have understood it.",
];

/// Number of distinct local frames.
pub const LOCAL_FRAME_COUNT: usize = PREFIXES.len() * SUFFIXES.len();

fn local_frame(k: usize) -> (usize, usize) {
    // k ↦ (k mod 6, (2·⌊k/6⌋ + k) mod 5) is a bijection on 0..30.
    (k % PREFIXES.len(), (k / PREFIXES.len() + k) % SUFFIXES.len())
}

fn variant_id(i: usize) -> String {
    format!("v{i:02}")
}

fn local_variants(seed: &str, n: usize) -> Result<Vec<String>, VariantError> {
    if n > LOCAL_FRAME_COUNT {
        return Err(VariantError::InsufficientDistinctVariants {
            requested: n,
            available: LOCAL_FRAME_COUNT,
        });
    }
    Ok((0..n)
        .map(|k| {
            let (p, s) = local_frame(k);
            format!("{}{}{}", PREFIXES[p], seed.trim(), SUFFIXES[s])
        })
        .collect())
}

const NEGATIONS: [&str; 9] = [
    "not", "no", "never", "none", "neither", "nor", "without", "cannot", "nothing",
];

/// Number of negating words.
pub fn negation_count(text: &str) -> usize {
    text.split(|c: char| !(c.is_alphanumeric() || c == '\''))
        .filter(|w| !w.is_empty())
        .map(|w| w.to_lowercase())
        .filter(|w| NEGATIONS.contains(&w.as_str()) || w.ends_with("n't"))
        .count()
}

pub fn same_polarity(seed: &str, variant: &str) -> bool {
    negation_count(seed) % 2 == negation_count(variant) % 2
}

fn strip_list_marker(line: &str) -> &str {
    let t = line.trim();
    let digits = t.bytes().take_while(u8::is_ascii_digit).count();
    let t = if digits > 0 && t[digits..].starts_with(['.', ')', ':']) {
        &t[digits + 1..]
    } else {
        t.strip_prefix(['-', '*', '•']).unwrap_or(t)
    };
    t.trim().trim_matches('"').trim()
}

/// Prompt sent to the generator model.
pub fn generator_prompt(seed: &str, n: usize, background: Option<&str>) -> String {
    let mut p = String::new();
    if let Some(b) = background.filter(|b| !b.trim().is_empty()) {
        p.push_str(&format!("Background:\n{}\n\n", b.trim()));
    }
    p.push_str(&format!(
        "Rewrite the question below in {n} different ways. Each rewrite must ask about exactly \
the same proposition, so that answering yes to any rewrite means the same thing as answering \
yes to the original. Do not add or remove negations. Return one rewrite per line, without \
numbering or commentary.\n\nQuestion: {}",
        seed.trim()
    ));
    p
}

/// Validate a generator reply into `n` variants.
pub fn variants_from_generator_reply(seed: &str, reply: &str, n: usize) -> Result<Vec<String>, VariantError> {
    let mut seen = HashSet::new();
    let kept: Vec<String> = reply
        .lines()
        .map(strip_list_marker)
        .filter(|l| !l.is_empty())
        .filter(|l| same_polarity(seed, l))
        .filter(|l| seen.insert(fold(l)))
        .map(str::to_string)
        .take(n)
        .collect();
    if kept.len() < n {
        return Err(VariantError::InsufficientDistinctVariants {
            requested: n,
            available: kept.len(),
        });
    }
    Ok(kept)
}

pub struct Generator<'a> {
    pub backend: &'a dyn Backend,
    pub model: &'a ModelSpec,
    pub background: Option<&'a str>,
}

pub fn generate_variants(
    seed_question: &str,
    n: usize,
    method: GenerationMethod,
    generator: Option<Generator<'_>>,
) -> Result<VariantSet, VariantError> {
    if n == 0 {
        return Err(VariantError::ZeroRequested);
    }
    let pid = proposition_id(seed_question);
    let (texts, generator_model, generator_raw) = match method {
        GenerationMethod::TemplatedLocal => (local_variants(seed_question, n)?, None, None),
        GenerationMethod::ModelGenerated => {
            let g = generator.ok_or_else(|| VariantError::GeneratorFailed("no generator model configured".into()))?;
            let prompt = generator_prompt(seed_question, n, g.background);
            let sampler = SamplerSettings {
                max_tokens: (64 * n as u32).max(256),
                ..Default::default()
            };
            let request = CompletionRequest::new(g.model.clone(), sampler, CleanText::from_str_lossless(&prompt));
            let reply = g
                .backend
                .complete(&request)
                .map_err(|e| VariantError::GeneratorFailed(e.to_string()))?;
            let texts = variants_from_generator_reply(seed_question, &reply.text, n)?;
            (texts, Some(g.model.clone()), Some(reply.text))
        }
    };
    let variants = texts
        .into_iter()
        .enumerate()
        .map(|(i, text)| Variant {
            variant_id: variant_id(i),
            text,
            proposition_id: pid.clone(),
        })
        .collect::<Vec<_>>();
    let mut folded = HashSet::new();
    if !variants.iter().all(|v| folded.insert(fold(&v.text))) {
        return Err(VariantError::InsufficientDistinctVariants {
            requested: n,
            available: folded.len(),
        });
    }
    Ok(VariantSet {
        seed_question: seed_question.to_string(),
        variants,
        generation_method: method,
        generator_model,
        generator_raw,
    })
}

/// A one-variant set holding just the question.
pub fn single(question: &str) -> VariantSet {
    generate_variants(question, 1, GenerationMethod::TemplatedLocal, None).expect("n = 1 always succeeds")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::{MockBackend, MockResponse, MockTable};
    use crate::model::Modality;
    use proptest::prelude::*;

    const SEED: &str = "Does the clause include future affiliates?";

    #[test]
    fn local_variants_keep_the_question() {
        let set = generate_variants(SEED, 3, GenerationMethod::TemplatedLocal, None).unwrap();
        assert_eq!(set.variants.len(), 3);
        let folded: HashSet<_> = set.variants.iter().map(|v| fold(&v.text)).collect();
        assert_eq!(folded.len(), 3);
        assert!(set.variants.iter().all(|v| v.text.contains("future affiliates")));
        assert_eq!(set.variants[0].text, SEED);
    }

    #[test]
    fn single_variant_is_the_seed() {
        let set = single(SEED);
        assert_eq!(set.variants.len(), 1);
        assert_eq!(set.variants[0].text, SEED);
    }

    #[test]
    fn local_frames_are_a_bijection() {
        let frames: HashSet<_> = (0..LOCAL_FRAME_COUNT).map(local_frame).collect();
        assert_eq!(frames.len(), LOCAL_FRAME_COUNT);
        assert!(generate_variants(SEED, LOCAL_FRAME_COUNT, GenerationMethod::TemplatedLocal, None).is_ok());
        assert!(matches!(
            generate_variants(SEED, LOCAL_FRAME_COUNT + 1, GenerationMethod::TemplatedLocal, None),
            Err(VariantError::InsufficientDistinctVariants { .. })
        ));
    }

    fn twenty_paraphrases() -> String {
        [
            "Does \"other affiliates\" cover affiliates created after signing?",
            "Would affiliates formed later fall under \"other affiliates\"?",
            "Is a company that became an affiliate after 1961 one of the \"other affiliates\"?",
            "Should \"other affiliates\" be read to include future affiliates?",
            "Do later-created affiliates count as \"other affiliates\"?",
            "Does the term \"other affiliates\" extend to affiliates that come into existence later?",
            "Are affiliates established after the agreement within \"other affiliates\"?",
            "Would a reasonable reader include future affiliates in \"other affiliates\"?",
            "Is the phrase \"other affiliates\" broad enough to reach affiliates formed after contracting?",
            "Can \"other affiliates\" include entities that became affiliates over time?",
            "Does \"other affiliates\" encompass affiliates acquired in later decades?",
            "Are newly created affiliates part of the \"other affiliates\" group?",
            "Does the agreement's reference to \"other affiliates\" include after-formed affiliates?",
            "Would the parties have meant \"other affiliates\" to include future affiliates?",
            "Is \"other affiliates\" open-ended as to when the affiliate was formed?",
            "Does the binding of \"other affiliates\" reach affiliates created after 1961?",
            "Are affiliates that arise after execution covered by \"other affiliates\"?",
            "Should future affiliates be treated as \"other affiliates\" under the agreement?",
            "Does \"other affiliates\" potentially encompass affiliates created over time?",
            "Is an affiliate formed after the contract date among the \"other affiliates\"?",
        ]
        .iter()
        .enumerate()
        .map(|(i, l)| format!("{}. {l}", i + 1))
        .collect::<Vec<_>>()
        .join("\n")
    }

    #[test]
    fn model_generated_twenty() {
        let model = ModelSpec::new("mock", "generator", Modality::Chat);
        let seed = "Does \"other affiliates\" include affiliates created after the contract?";
        let prompt = generator_prompt(seed, 20, None);
        let sampler = SamplerSettings {
            max_tokens: 1280,
            ..Default::default()
        };
        let req = CompletionRequest::new(model.clone(), sampler, CleanText::from_str_lossless(&prompt));
        let mut mock = MockBackend::table(MockTable::default());
        mock.insert(&req, MockResponse::text(&twenty_paraphrases()));
        let set = generate_variants(
            seed,
            20,
            GenerationMethod::ModelGenerated,
            Some(Generator {
                backend: &mock,
                model: &model,
                background: None,
            }),
        )
        .unwrap();
        assert_eq!(set.variants.len(), 20);
        assert!(set.variants.iter().all(|v| !v.text.starts_with(char::is_numeric)));
        assert_eq!(set.generator_model.as_ref(), Some(&model));
        assert!(set.generator_raw.is_some());
    }

    #[test]
    fn generator_reply_filters_duplicates_and_flipped_polarity() {
        let reply = "1. Is it monthly?\n2) is it   MONTHLY?\n- Is it not monthly?\n\nIs payment monthly?";
        let out = variants_from_generator_reply("Is it monthly?", reply, 2).unwrap();
        assert_eq!(out, vec!["Is it monthly?", "Is payment monthly?"]);
        assert!(matches!(
            variants_from_generator_reply("Is it monthly?", reply, 3),
            Err(VariantError::InsufficientDistinctVariants {
                requested: 3,
                available: 2
            })
        ));
    }

    #[test]
    fn generator_failure_propagates() {
        let model = ModelSpec::new("mock", "generator", Modality::Chat);
        let mock = MockBackend::table(MockTable::default());
        let r = generate_variants(
            SEED,
            3,
            GenerationMethod::ModelGenerated,
            Some(Generator {
                backend: &mock,
                model: &model,
                background: None,
            }),
        );
        assert!(matches!(r, Err(VariantError::GeneratorFailed(_))));
        assert!(matches!(
            generate_variants(SEED, 3, GenerationMethod::ModelGenerated, None),
            Err(VariantError::GeneratorFailed(_))
        ));
    }

    #[test]
    fn negations() {
        assert_eq!(negation_count("Isn't it not monthly?"), 2);
        assert_eq!(negation_count("Is it monthly?"), 0);
        assert!(same_polarity("Is it monthly?", "Isn't it not monthly?"));
    }

    proptest! {
        #[test]
        fn local_variants_share_proposition_and_polarity(n in 1usize..=LOCAL_FRAME_COUNT, q in "[A-Z][a-z ]{3,30}\\?") {
            let set = generate_variants(&q, n, GenerationMethod::TemplatedLocal, None).unwrap();
            prop_assert_eq!(set.variants.len(), n);
            for v in &set.variants {
                prop_assert_eq!(&v.proposition_id, &proposition_id(&q));
                prop_assert!(same_polarity(&q, &v.text));
                prop_assert!(v.text.contains(q.trim()));
            }
        }
    }
}
