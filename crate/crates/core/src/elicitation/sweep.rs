//! Planning and running elicitation grids.
//!
//! A run is split into a pure plan (which requests, at which coordinates),
//! the fan-out that produces a [`Transcript`], and a pure derivation of
//! [`SampleSet`]s from plan plus transcript. Replay reuses the first and
//! last steps unchanged.

use serde::{Deserialize, Serialize};

use super::grid::{GridError, SweepGrid};
use super::parse::parse_response;
use super::prompt::{render_prompt, PromptTemplate, RenderError, ResponseFormat};
use super::variants::proposition_id;
use super::{Coordinate, Sample, SampleOutcome, SampleSet};
use crate::backends::{fan_out, Backend, CompletionRequest, FanOutPolicy};
use crate::model::{InterpretationCase, ModelSpec, SamplerError, SamplerSettings};
use crate::transcript::{CallOutcome, Transcript};

#[derive(Debug, Clone, PartialEq)]
pub struct PlannedCall {
    pub question_id: String,
    pub proposition_id: String,
    pub coordinate: Coordinate,
    pub request: CompletionRequest,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunPlan {
    pub case_id: String,
    pub response_format: ResponseFormat,
    pub calls: Vec<PlannedCall>,
}

impl RunPlan {
    pub fn requests(&self) -> Vec<CompletionRequest> {
        self.calls.iter().map(|c| c.request.clone()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SweepError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error("no models given")]
    NoModels,
    #[error("no questions given")]
    NoQuestions,
    #[error("repetitions must be at least 1")]
    ZeroRepetitions,
    #[error("all {attempted} calls failed; first error: {first_error}")]
    AllFailed { attempted: usize, first_error: String },
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DeriveError {
    #[error("transcript has {actual} entries, plan has {expected}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("transcript entry {index} has request hash {actual}, plan expects {expected}")]
    HashMismatch {
        index: usize,
        expected: String,
        actual: String,
    },
}

/// Requests for every (model, temperature, variant, repetition) cell, in
/// that nesting order.
pub fn plan_sweep(
    case: &InterpretationCase,
    template: &PromptTemplate,
    grid: &SweepGrid,
    sampler: &SamplerSettings,
) -> Result<RunPlan, SweepError> {
    grid.validate()?;
    sampler.validate()?;
    let question_id = proposition_id(&grid.variants.seed_question);
    let prompts = grid
        .variants
        .variants
        .iter()
        .map(|v| render_prompt(template, case, &v.text, &case.evidence))
        .collect::<Result<Vec<_>, _>>()?;
    let mut calls = Vec::with_capacity(grid.size());
    for model in &grid.models {
        for &t in &grid.temperatures {
            for (variant, prompt) in grid.variants.variants.iter().zip(&prompts) {
                for rep in 0..grid.repetitions {
                    let s = sampler.with_temperature(t).for_repetition(rep);
                    calls.push(PlannedCall {
                        question_id: question_id.clone(),
                        proposition_id: variant.proposition_id.clone(),
                        coordinate: Coordinate {
                            model_id: model.model_id.clone(),
                            temperature: t,
                            variant_id: variant.variant_id.clone(),
                            repetition: rep,
                        },
                        request: CompletionRequest::new(model.clone(), s, prompt.clone()),
                    });
                }
            }
        }
    }
    Ok(RunPlan {
        case_id: case.case_id.clone(),
        response_format: template.response_format,
        calls,
    })
}

/// One question scored by a set of models.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElicitQuestion {
    pub question_id: String,
    pub text: String,
}

impl ElicitQuestion {
    pub fn from_readings(case: &InterpretationCase) -> Vec<Self> {
        case.candidate_readings
            .iter()
            .map(|r| Self {
                question_id: r.label.clone(),
                text: r.proposition.as_str().to_string(),
            })
            .collect()
    }
}

/// Requests for question × model × repetition at the sampler's temperature,
/// with all case evidence in context.
pub fn plan_elicit(
    case: &InterpretationCase,
    template: &PromptTemplate,
    questions: &[ElicitQuestion],
    models: &[ModelSpec],
    sampler: &SamplerSettings,
    repetitions: u32,
) -> Result<RunPlan, SweepError> {
    if questions.is_empty() {
        return Err(SweepError::NoQuestions);
    }
    if models.is_empty() {
        return Err(SweepError::NoModels);
    }
    if repetitions == 0 {
        return Err(SweepError::ZeroRepetitions);
    }
    sampler.validate()?;
    let mut calls = Vec::new();
    for q in questions {
        let prompt = render_prompt(template, case, &q.text, &case.evidence)?;
        for model in models {
            for rep in 0..repetitions {
                calls.push(PlannedCall {
                    question_id: q.question_id.clone(),
                    proposition_id: proposition_id(&q.text),
                    coordinate: Coordinate {
                        model_id: model.model_id.clone(),
                        temperature: sampler.temperature,
                        variant_id: "v00".into(),
                        repetition: rep,
                    },
                    request: CompletionRequest::new(model.clone(), sampler.for_repetition(rep), prompt.clone()),
                });
            }
        }
    }
    Ok(RunPlan {
        case_id: case.case_id.clone(),
        response_format: template.response_format,
        calls,
    })
}

/// Parse a transcript into one [`SampleSet`] per question, in plan order.
pub fn derive_sample_sets(
    plan: &RunPlan,
    transcript: &Transcript,
    created_at: &str,
) -> Result<Vec<SampleSet>, DeriveError> {
    if plan.calls.len() != transcript.entries.len() {
        return Err(DeriveError::LengthMismatch {
            expected: plan.calls.len(),
            actual: transcript.entries.len(),
        });
    }
    let mut sets: Vec<SampleSet> = Vec::new();
    for (index, (call, entry)) in plan.calls.iter().zip(&transcript.entries).enumerate() {
        let expected = call.request.hash();
        if entry.request_hash != expected {
            return Err(DeriveError::HashMismatch {
                index,
                expected,
                actual: entry.request_hash.clone(),
            });
        }
        let outcome = match &entry.outcome {
            CallOutcome::Ok { text, .. } => SampleOutcome::Parsed(parse_response(text, plan.response_format)),
            CallOutcome::Error { error, .. } => SampleOutcome::Error {
                message: error.to_string(),
            },
        };
        let sample = Sample {
            coordinate: call.coordinate.clone(),
            proposition_id: call.proposition_id.clone(),
            request_hash: entry.request_hash.clone(),
            outcome,
        };
        match sets.iter_mut().find(|s| s.question_id == call.question_id) {
            Some(set) => set.samples.push(sample),
            None => sets.push(SampleSet {
                case_id: plan.case_id.clone(),
                question_id: call.question_id.clone(),
                created_at: created_at.to_string(),
                samples: vec![sample],
            }),
        }
    }
    Ok(sets)
}

fn execute(plan: &RunPlan, backend: &dyn Backend, policy: &FanOutPolicy) -> Result<Transcript, SweepError> {
    let requests = plan.requests();
    let items = fan_out(backend, &requests, policy);
    let transcript = Transcript::from_fan_out(&requests, items);
    if transcript.successes() == 0 {
        let first_error = transcript
            .entries
            .iter()
            .find_map(|e| match &e.outcome {
                CallOutcome::Error { error, .. } => Some(error.to_string()),
                CallOutcome::Ok { .. } => None,
            })
            .unwrap_or_default();
        return Err(SweepError::AllFailed {
            attempted: requests.len(),
            first_error,
        });
    }
    Ok(transcript)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRun {
    pub samples: SampleSet,
    pub transcript: Transcript,
}

#[allow(clippy::too_many_arguments)]
pub fn run_sweep(
    case: &InterpretationCase,
    template: &PromptTemplate,
    grid: &SweepGrid,
    sampler: &SamplerSettings,
    backend: &dyn Backend,
    policy: &FanOutPolicy,
    created_at: &str,
) -> Result<SweepRun, SweepError> {
    let plan = plan_sweep(case, template, grid, sampler)?;
    let transcript = execute(&plan, backend, policy)?;
    let mut sets = derive_sample_sets(&plan, &transcript, created_at).expect("transcript built from this plan");
    Ok(SweepRun {
        samples: sets.remove(0),
        transcript,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ElicitRun {
    pub sample_sets: Vec<SampleSet>,
    pub transcript: Transcript,
}

#[allow(clippy::too_many_arguments)]
pub fn elicit(
    case: &InterpretationCase,
    template: &PromptTemplate,
    questions: &[ElicitQuestion],
    models: &[ModelSpec],
    sampler: &SamplerSettings,
    repetitions: u32,
    backend: &dyn Backend,
    policy: &FanOutPolicy,
    created_at: &str,
) -> Result<ElicitRun, SweepError> {
    let plan = plan_elicit(case, template, questions, models, sampler, repetitions)?;
    let transcript = execute(&plan, backend, policy)?;
    let sample_sets = derive_sample_sets(&plan, &transcript, created_at).expect("transcript built from this plan");
    Ok(ElicitRun {
        sample_sets,
        transcript,
    })
}
