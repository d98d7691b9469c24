//! Run a [`RunSpec`] end to end: plan, call providers, derive, record.

use crate::backends::{fan_out, Backend, CompletionRequest, FanOutPolicy};
use crate::capsule::{derive, record, Capsule, CapsuleError, Derived, RecordInput, RunSpec};
use crate::elicitation::{plan_elicit, plan_sweep};
use crate::ladder::plan_ladder;
use crate::lens::{probe_distances, EmbeddingCall};
use crate::model::InterpretationCase;
use crate::transcript::{CallOutcome, Transcript};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    /// The request cannot be planned; nothing was sent.
    #[error("{0}")]
    Invalid(String),
    /// Every provider call failed.
    #[error("all {attempted} provider calls failed; first error: {first_error}")]
    AllFailed { attempted: usize, first_error: String },
    #[error(transparent)]
    Capsule(#[from] CapsuleError),
}

impl PipelineError {
    pub fn is_provider_failure(&self) -> bool {
        matches!(self, PipelineError::AllFailed { .. })
    }
}

fn invalid(e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Invalid(e.to_string())
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunArtifacts {
    pub transcript: Transcript,
    pub embedding_calls: Vec<EmbeddingCall>,
    pub derived: Derived,
}

/// Requests a completion-based run will send, in transcript order.
pub fn planned_requests(run: &RunSpec, case: &InterpretationCase) -> Result<Vec<CompletionRequest>, PipelineError> {
    Ok(match run {
        RunSpec::Elicit {
            template,
            questions,
            models,
            sampler,
            repetitions,
        } => plan_elicit(case, template, questions, models, sampler, *repetitions)
            .map_err(invalid)?
            .requests(),
        RunSpec::Sweep {
            template,
            grid,
            sampler,
        } => plan_sweep(case, template, grid, sampler).map_err(invalid)?.requests(),
        RunSpec::Ladder { proposition, config } => {
            let reading = case
                .reading(proposition)
                .ok_or_else(|| invalid(format!("no reading labelled {proposition:?}")))?;
            plan_ladder(case, reading, config).map_err(invalid)?.requests()
        }
        RunSpec::Probe { .. } => Vec::new(),
    })
}

pub fn execute(
    run: &RunSpec,
    case: &InterpretationCase,
    backend: &dyn Backend,
    policy: &FanOutPolicy,
    created_at: &str,
) -> Result<RunArtifacts, PipelineError> {
    let (transcript, embedding_calls) = match run {
        RunSpec::Probe { spec } => {
            let run = probe_distances(spec, backend, policy).map_err(invalid)?;
            if run.calls.iter().all(|c| c.values.is_none()) {
                return Err(PipelineError::AllFailed {
                    attempted: run.calls.len(),
                    first_error: run.calls.iter().find_map(|c| c.error.clone()).unwrap_or_default(),
                });
            }
            (Transcript::default(), run.calls)
        }
        _ => {
            let requests = planned_requests(run, case)?;
            let transcript = Transcript::from_fan_out(&requests, fan_out(backend, &requests, policy));
            if transcript.successes() == 0 {
                let first_error = transcript
                    .entries
                    .iter()
                    .find_map(|e| match &e.outcome {
                        CallOutcome::Error { error, .. } => Some(error.to_string()),
                        CallOutcome::Ok { .. } => None,
                    })
                    .unwrap_or_default();
                return Err(PipelineError::AllFailed {
                    attempted: requests.len(),
                    first_error,
                });
            }
            (transcript, Vec::new())
        }
    };
    let derived = derive(run, case, &transcript, &embedding_calls, created_at)?;
    Ok(RunArtifacts {
        transcript,
        embedding_calls,
        derived,
    })
}

/// [`execute`] then [`record`]; `finished_at` is read after the run.
pub fn execute_and_record(
    run: &RunSpec,
    case: &InterpretationCase,
    backend: &dyn Backend,
    policy: &FanOutPolicy,
    started_at: &str,
    finished_at: impl FnOnce() -> String,
) -> Result<Capsule, PipelineError> {
    let artifacts = execute(run, case, backend, policy, started_at)?;
    Ok(record(RecordInput {
        case: case.clone(),
        run: run.clone(),
        transcript: artifacts.transcript,
        embedding_calls: artifacts.embedding_calls,
        derived: artifacts.derived,
        started_at: started_at.to_string(),
        finished_at: finished_at(),
    })?)
}
