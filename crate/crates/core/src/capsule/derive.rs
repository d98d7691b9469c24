//! The derivation pipeline shared by recording and replay.

use super::{CapsuleError, Derived, RunSpec};
use crate::aggregate::{ElicitReport, Report, SweepReport};
use crate::elicitation::{derive_sample_sets, plan_elicit, plan_sweep};
use crate::ladder::{derive_ladder, plan_ladder, LadderError};
use crate::lens::{complete_models, matrix_from_calls, normalize_matrix, rank_probes, EmbeddingCall};
use crate::model::InterpretationCase;
use crate::transcript::Transcript;

fn fail(e: impl std::fmt::Display) -> CapsuleError {
    CapsuleError::Derivation(e.to_string())
}

/// Reports for `run` computed from recorded responses only.
pub fn derive(
    run: &RunSpec,
    case: &InterpretationCase,
    transcript: &Transcript,
    embedding_calls: &[EmbeddingCall],
    created_at: &str,
) -> Result<Derived, CapsuleError> {
    match run {
        RunSpec::Elicit {
            template,
            questions,
            models,
            sampler,
            repetitions,
        } => {
            let plan = plan_elicit(case, template, questions, models, sampler, *repetitions).map_err(fail)?;
            let sets = derive_sample_sets(&plan, transcript, created_at).map_err(fail)?;
            Ok(Derived {
                report: Report::Elicit(ElicitReport::from_sets(&case.case_id, &sets)),
                sample_sets: sets,
                distance_matrix: None,
            })
        }
        RunSpec::Sweep {
            template,
            grid,
            sampler,
        } => {
            let plan = plan_sweep(case, template, grid, sampler).map_err(fail)?;
            let sets = derive_sample_sets(&plan, transcript, created_at).map_err(fail)?;
            let set = sets.first().ok_or_else(|| fail("sweep produced no samples"))?;
            Ok(Derived {
                report: Report::Sweep(SweepReport::from_samples(set)),
                sample_sets: sets,
                distance_matrix: None,
            })
        }
        RunSpec::Ladder { proposition, config } => {
            let reading = case
                .reading(proposition)
                .ok_or_else(|| fail(LadderError::UnknownProposition(proposition.clone())))?;
            let plan = plan_ladder(case, reading, config).map_err(fail)?;
            let result = derive_ladder(case, reading, config, &plan, transcript).map_err(fail)?;
            Ok(Derived {
                sample_sets: Vec::new(),
                distance_matrix: None,
                report: Report::Ladder(result),
            })
        }
        RunSpec::Probe { spec } => {
            let matrix = matrix_from_calls(spec, embedding_calls).map_err(fail)?;
            let ranking = rank_probes(&normalize_matrix(&complete_models(&matrix).map_err(fail)?).map_err(fail)?)
                .map_err(fail)?;
            Ok(Derived {
                sample_sets: Vec::new(),
                distance_matrix: Some(matrix),
                report: Report::Ranking(ranking),
            })
        }
    }
}
