//! Reference cases and canned model responses for offline runs.
//!
//! The responses reproduce published model outputs: three confidence
//! estimates about a burglary-only insurance policy, a two-model evidence
//! ladder on a construction payment dispute, and a next-token distribution
//! for a prenuptial agreement question. Replaying them through a
//! table-driven [`MockBackend`] must give those numbers back exactly.

use crate::backends::{CompletionRequest, MockBackend, MockResponse, MockTable, TokenLogprobs, TokenProb};
use crate::elicitation::RunPlan;
use crate::ladder::LadderPlan;
use crate::model::{parse_case, InterpretationCase, Modality, ModelSpec, SamplerSettings};

pub const STEWART_JSON: &str = include_str!("../fixtures/stewart.case.json");
pub const BURGLARY_JSON: &str = include_str!("../fixtures/burglary.case.json");
pub const FAMIGLIO_JSON: &str = include_str!("../fixtures/famiglio.case.json");

fn load(json: &str) -> InterpretationCase {
    parse_case(json.as_bytes()).expect("bundled fixture is valid")
}

/// Construction payment dispute: offer and acceptance letters, then a phone
/// call and an industry custom as evidence.
pub fn stewart_case() -> InterpretationCase {
    load(STEWART_JSON)
}

/// Burglary-only business insurance policy with three propositions about
/// what policyholders would expect.
pub fn burglary_case() -> InterpretationCase {
    load(BURGLARY_JSON)
}

/// Prenuptial agreement keyed to full years of marriage.
pub fn famiglio_case() -> InterpretationCase {
    load(FAMIGLIO_JSON)
}

pub const FAMIGLIO_QUESTION: &str = "A divorce petition is filed and then withdrawn, and some years later another \
petition is filed. Which filing fixes the number of full years of marriage, the first or the second?";

// Insurance policy: one response per proposition label.
pub const BURGLARY_RESPONSES: [(&str, &str, f64); 3] = [
    ("covers-proven-burglary", "Highly likely (90%)", 0.90),
    ("defines-inside-job", "Moderately likely (70%)", 0.70),
    ("requires-forced-entry", "Likely (80%)", 0.80),
];

pub fn gpt4() -> ModelSpec {
    ModelSpec::new("openai", "gpt-4", Modality::Chat).with_context_budget(32_768)
}

pub fn claude2() -> ModelSpec {
    ModelSpec::new("anthropic", "claude-2", Modality::Chat).with_context_budget(100_000)
}

pub fn davinci003() -> ModelSpec {
    ModelSpec::new("openai", "text-davinci-003", Modality::CompletionWithLogprobs).with_context_budget(4_097)
}

/// Temperature 0.7, top-p 1, 256 tokens.
pub fn chat_sampler() -> SamplerSettings {
    SamplerSettings::default()
}

/// Temperature 1, top-p 1, no penalties, best of 1.
pub fn full_spectrum_sampler() -> SamplerSettings {
    SamplerSettings {
        temperature: 1.0,
        top_p: 1.0,
        frequency_penalty: 0.0,
        presence_penalty: 0.0,
        best_of: 1,
        ..SamplerSettings::default()
    }
}

/// Table-driven mock answering each planned call with `respond`.
pub fn scripted_backend<'a, I, F>(calls: I, mut respond: F) -> MockBackend
where
    I: IntoIterator<Item = &'a CompletionRequest>,
    F: FnMut(&CompletionRequest) -> MockResponse,
{
    let mut table = MockTable::default();
    for req in calls {
        table.completions.insert(req.hash(), respond(req));
    }
    MockBackend::table(table)
}

/// Mock for an `elicit` plan over [`burglary_case`].
pub fn burglary_backend(plan: &RunPlan) -> MockBackend {
    let mut table = MockTable::default();
    for call in &plan.calls {
        let text = BURGLARY_RESPONSES
            .iter()
            .find(|(label, _, _)| *label == call.question_id)
            .map_or("No estimate.", |(_, text, _)| *text);
        table.completions.insert(call.request.hash(), MockResponse::text(text));
    }
    MockBackend::table(table)
}

/// Confidence in percent per rung (letters alone, plus the phone call, plus
/// the industry custom).
pub const STEWART_LADDER: [(&str, [u32; 3]); 2] = [("gpt-4", [10, 75, 95]), ("claude-2", [10, 20, 90])];

/// Mock for a ladder plan over [`stewart_case`] with [`gpt4`] and [`claude2`].
pub fn stewart_backend(plan: &LadderPlan) -> MockBackend {
    let mut table = MockTable::default();
    for call in &plan.calls {
        let pct = STEWART_LADDER
            .iter()
            .find(|(m, _)| *m == call.model_id)
            .and_then(|(_, row)| row.get(call.rung));
        let text = match pct {
            Some(p) => format!("({p}%)"),
            None => "No estimate.".to_string(),
        };
        table.completions.insert(call.request.hash(), MockResponse::text(&text));
    }
    MockBackend::table(table)
}

pub const FAMIGLIO_RESPONSE: &str = "The second filing would determine the number of full years of marriage";

/// Index of the decisive word in [`FAMIGLIO_RESPONSE`].
pub const FAMIGLIO_DECISIVE_POSITION: usize = 1;

pub const FAMIGLIO_ALTERNATIVES: [(&str, f64); 5] = [
    ("second", 0.9472),
    ("date", 0.0444),
    ("first", 0.0068),
    ("number", 0.0013),
    ("amount", 0.0001),
];

/// Per-token logprobs for [`FAMIGLIO_RESPONSE`]. Only the decisive position
/// carries alternatives; other positions were not reported. The list is
/// deliberately unsorted, as a provider might send it.
pub fn famiglio_logprobs() -> Vec<TokenLogprobs> {
    FAMIGLIO_RESPONSE
        .split(' ')
        .enumerate()
        .map(|(i, tok)| TokenLogprobs {
            token: if i == 0 { tok.to_string() } else { format!(" {tok}") },
            alternatives: if i == FAMIGLIO_DECISIVE_POSITION {
                let mut alts: Vec<TokenProb> = FAMIGLIO_ALTERNATIVES
                    .iter()
                    .map(|(t, p)| TokenProb {
                        token: t.to_string(),
                        probability: *p,
                    })
                    .collect();
                alts.reverse();
                alts
            } else {
                Vec::new()
            },
        })
        .collect()
}

/// The logprob request for the prenuptial question.
pub fn famiglio_request() -> CompletionRequest {
    let case = famiglio_case();
    let template = crate::elicitation::PromptTemplate::new(
        "famiglio-v1",
        "Contract:\n{contract}\n\n{evidence}Question: {question}\n\nAnswer:",
        crate::elicitation::ResponseFormat::FreeText,
    );
    let prompt = crate::elicitation::render_prompt(&template, &case, FAMIGLIO_QUESTION, &case.evidence)
        .expect("fixed template renders");
    CompletionRequest::new(davinci003(), full_spectrum_sampler(), prompt).with_logprobs(5)
}

pub fn famiglio_backend() -> MockBackend {
    let mut table = MockTable::default();
    table.completions.insert(
        famiglio_request().hash(),
        MockResponse {
            text: FAMIGLIO_RESPONSE.to_string(),
            token_logprobs: Some(famiglio_logprobs()),
        },
    );
    MockBackend::table(table)
}
