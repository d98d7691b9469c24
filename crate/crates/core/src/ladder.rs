//! Evidence ladders: confidence in one proposition as evidence items are
//! added cumulatively, and the marginal change each item causes.
//!
//! Confidences are held as integer parts per million so that the per-item
//! deltas sum to exactly `final - baseline`.

use serde::{Deserialize, Serialize};

use crate::backends::{estimate_tokens, fan_out, Backend, CompletionRequest, FanOutPolicy};
use crate::elicitation::{
    parse_response, render_evidence_section, render_prompt, PromptTemplate, RenderError, ResponseFormat,
};
use crate::model::{CleanText, EvidenceItem, InterpretationCase, ModelSpec, Reading, SamplerError, SamplerSettings};
use crate::numeric::exact_sum;
use crate::transcript::{CallOutcome, Transcript};

/// One step of the ladder: the first `index` evidence items in context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rung {
    pub index: usize,
    pub included_evidence: Vec<EvidenceItem>,
    pub rendered_context: CleanText,
}

impl Rung {
    /// Id of the item this rung adds; `None` for the baseline.
    pub fn added_evidence_id(&self) -> Option<&str> {
        self.included_evidence.last().map(|e| e.evidence_id.as_str())
    }
}

fn render_context(case: &InterpretationCase, evidence: &[EvidenceItem]) -> CleanText {
    let mut s = String::new();
    if let Some(b) = case.legal_baseline.as_ref().filter(|b| !b.as_str().trim().is_empty()) {
        s.push_str(&format!(
            "Assume this default legal rule applies: {}\n\n",
            b.as_str().trim_end()
        ));
    }
    s.push_str(&format!(
        "Contract:\n{}\n\nDisputed language:\n{}\n\n",
        case.contract_text.as_str(),
        case.clause.as_str()
    ));
    s.push_str(&render_evidence_section(evidence));
    CleanText::from_str_lossless(&s)
}

/// `n + 1` rungs for `n` evidence items, baseline first.
pub fn build_rungs(case: &InterpretationCase) -> Vec<Rung> {
    (0..=case.evidence.len())
        .map(|i| {
            let included = case.evidence[..i].to_vec();
            Rung {
                index: i,
                rendered_context: render_context(case, &included),
                included_evidence: included,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    #[default]
    Mean,
    Median,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LadderError {
    #[error("rung {rung} needs about {needed} tokens but {model_id} allows {budget}")]
    ContextOverflow {
        rung: usize,
        model_id: String,
        needed: usize,
        budget: usize,
    },
    #[error("proposition {0:?} is not a reading of this case")]
    UnknownProposition(String),
    #[error("permutation is not a bijection on the {0} evidence items")]
    BadPermutation(usize),
    #[error("no models given")]
    NoModels,
    #[error("repetitions must be at least 1")]
    ZeroRepetitions,
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error("all {attempted} calls failed; first error: {first_error}")]
    AllFailed { attempted: usize, first_error: String },
    #[error("transcript does not match the ladder plan: {0}")]
    TranscriptMismatch(String),
}

/// Everything that determines a ladder's requests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderConfig {
    pub models: Vec<ModelSpec>,
    pub sampler: SamplerSettings,
    pub repetitions: u32,
    pub template: PromptTemplate,
    #[serde(default)]
    pub aggregation: Aggregation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LadderCall {
    pub rung: usize,
    pub model_id: String,
    pub repetition: u32,
    pub request: CompletionRequest,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LadderPlan {
    pub rungs: Vec<Rung>,
    pub calls: Vec<LadderCall>,
}

impl LadderPlan {
    pub fn requests(&self) -> Vec<CompletionRequest> {
        self.calls.iter().map(|c| c.request.clone()).collect()
    }
}

/// Requests in rung × model × repetition order. Fails before any call if a
/// rung does not fit a model's context budget.
pub fn plan_ladder(
    case: &InterpretationCase,
    proposition: &Reading,
    config: &LadderConfig,
) -> Result<LadderPlan, LadderError> {
    if config.models.is_empty() {
        return Err(LadderError::NoModels);
    }
    if config.repetitions == 0 {
        return Err(LadderError::ZeroRepetitions);
    }
    config.sampler.validate()?;
    let rungs = build_rungs(case);
    let mut calls = Vec::new();
    for rung in &rungs {
        let prompt = render_prompt(
            &config.template,
            case,
            proposition.proposition.as_str(),
            &rung.included_evidence,
        )?;
        let needed = estimate_tokens(prompt.as_str());
        for model in &config.models {
            if needed > model.context_budget {
                return Err(LadderError::ContextOverflow {
                    rung: rung.index,
                    model_id: model.model_id.clone(),
                    needed,
                    budget: model.context_budget,
                });
            }
            for rep in 0..config.repetitions {
                calls.push(LadderCall {
                    rung: rung.index,
                    model_id: model.model_id.clone(),
                    repetition: rep,
                    request: CompletionRequest::new(model.clone(), config.sampler.for_repetition(rep), prompt.clone()),
                });
            }
        }
    }
    Ok(LadderPlan { rungs, calls })
}

/// Parts per million in a unit: confidences are stored as integers.
pub const PPM: i64 = 1_000_000;

pub fn to_ppm(x: f64) -> i64 {
    (x * PPM as f64).round() as i64
}

pub fn from_ppm(ppm: i64) -> f64 {
    ppm as f64 / PPM as f64
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RungPoint {
    pub rung: usize,
    /// Aggregated confidence; absent when no response at this rung parsed.
    pub confidence_ppm: Option<i64>,
    /// Responses received (parsed or not).
    pub n: usize,
    pub unparsed: usize,
    /// Calls that failed terminally.
    pub errors: usize,
}

impl RungPoint {
    pub fn confidence(&self) -> Option<f64> {
        self.confidence_ppm.map(from_ppm)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Delta {
    pub evidence_id: String,
    /// `None` when either neighbouring rung has no confidence.
    pub delta_ppm: Option<i64>,
}

impl Delta {
    pub fn value(&self) -> Option<f64> {
        self.delta_ppm.map(from_ppm)
    }

    pub fn direction(&self) -> Option<std::cmp::Ordering> {
        self.delta_ppm.map(|d| d.cmp(&0))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trajectory {
    pub model_id: String,
    /// False when some rung had no parsed response; such a trajectory is
    /// reported as-is, never interpolated.
    pub valid: bool,
    pub points: Vec<RungPoint>,
    pub deltas: Vec<Delta>,
}

impl Trajectory {
    pub fn confidences(&self) -> Vec<Option<f64>> {
        self.points.iter().map(RungPoint::confidence).collect()
    }

    pub fn delta_values(&self) -> Vec<Option<f64>> {
        self.deltas.iter().map(Delta::value).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LadderResult {
    pub case_id: String,
    pub proposition: Reading,
    pub evidence_ids: Vec<String>,
    pub aggregation: Aggregation,
    pub trajectories: Vec<Trajectory>,
    /// Delta magnitudes are weak evidence; read their sign.
    pub direction_only_caveat: bool,
}

impl LadderResult {
    pub fn trajectory(&self, model_id: &str) -> Option<&Trajectory> {
        self.trajectories.iter().find(|t| t.model_id == model_id)
    }
}

fn aggregate_ppm(values: &mut [f64], how: Aggregation) -> Option<i64> {
    if values.is_empty() {
        return None;
    }
    let x = match how {
        Aggregation::Mean => exact_sum(values.iter().copied()) / values.len() as f64,
        Aggregation::Median => {
            values.sort_by(f64::total_cmp);
            let n = values.len();
            if n % 2 == 1 {
                values[n / 2]
            } else {
                (values[n / 2 - 1] + values[n / 2]) / 2.0
            }
        }
    };
    Some(to_ppm(x))
}

/// Pure derivation of a [`LadderResult`] from a plan and its transcript.
pub fn derive_ladder(
    case: &InterpretationCase,
    proposition: &Reading,
    config: &LadderConfig,
    plan: &LadderPlan,
    transcript: &Transcript,
) -> Result<LadderResult, LadderError> {
    if plan.calls.len() != transcript.entries.len() {
        return Err(LadderError::TranscriptMismatch(format!(
            "{} entries for {} planned calls",
            transcript.entries.len(),
            plan.calls.len()
        )));
    }
    let format: ResponseFormat = config.template.response_format;
    let rung_count = plan.rungs.len();
    let mut trajectories = Vec::new();
    for model in &config.models {
        let mut points = Vec::with_capacity(rung_count);
        for rung in 0..rung_count {
            let mut confidences = Vec::new();
            let (mut n, mut unparsed, mut errors) = (0, 0, 0);
            for (i, (call, entry)) in plan.calls.iter().zip(&transcript.entries).enumerate() {
                if call.rung != rung || call.model_id != model.model_id {
                    continue;
                }
                if entry.request_hash != call.request.hash() {
                    return Err(LadderError::TranscriptMismatch(format!(
                        "request hash differs at entry {i}"
                    )));
                }
                match &entry.outcome {
                    CallOutcome::Ok { text, .. } => {
                        n += 1;
                        match parse_response(text, format).confidence {
                            Some(c) => confidences.push(c),
                            None => unparsed += 1,
                        }
                    }
                    CallOutcome::Error { .. } => errors += 1,
                }
            }
            points.push(RungPoint {
                rung,
                confidence_ppm: aggregate_ppm(&mut confidences, config.aggregation),
                n,
                unparsed,
                errors,
            });
        }
        let deltas = plan.rungs[1..]
            .iter()
            .map(|r| Delta {
                evidence_id: r.added_evidence_id().unwrap_or_default().to_string(),
                delta_ppm: match (points[r.index - 1].confidence_ppm, points[r.index].confidence_ppm) {
                    (Some(a), Some(b)) => Some(b - a),
                    _ => None,
                },
            })
            .collect();
        trajectories.push(Trajectory {
            model_id: model.model_id.clone(),
            valid: points.iter().all(|p| p.confidence_ppm.is_some()),
            points,
            deltas,
        });
    }
    Ok(LadderResult {
        case_id: case.case_id.clone(),
        proposition: proposition.clone(),
        evidence_ids: case.evidence.iter().map(|e| e.evidence_id.clone()).collect(),
        aggregation: config.aggregation,
        trajectories,
        direction_only_caveat: true,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LadderRun {
    pub result: LadderResult,
    pub transcript: Transcript,
}

pub fn run_ladder(
    case: &InterpretationCase,
    proposition: &Reading,
    config: &LadderConfig,
    backend: &dyn Backend,
    policy: &FanOutPolicy,
) -> Result<LadderRun, LadderError> {
    let plan = plan_ladder(case, proposition, config)?;
    let requests = plan.requests();
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
        return Err(LadderError::AllFailed {
            attempted: requests.len(),
            first_error,
        });
    }
    let result = derive_ladder(case, proposition, config, &plan, &transcript)?;
    Ok(LadderRun { result, transcript })
}

/// Both orderings of the same evidence, for side-by-side comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct ReorderComparison {
    pub permutation: Vec<usize>,
    pub original: LadderRun,
    pub reordered: LadderRun,
}

pub fn reorder_and_rerun(
    case: &InterpretationCase,
    permutation: &[usize],
    proposition: &Reading,
    config: &LadderConfig,
    backend: &dyn Backend,
    policy: &FanOutPolicy,
) -> Result<ReorderComparison, LadderError> {
    let permuted = case
        .permuted(permutation)
        .ok_or(LadderError::BadPermutation(case.evidence.len()))?;
    Ok(ReorderComparison {
        permutation: permutation.to_vec(),
        original: run_ladder(case, proposition, config, backend, policy)?,
        reordered: run_ladder(&permuted, proposition, config, backend, policy)?,
    })
}
