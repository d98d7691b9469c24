//! Analysis subcommands: build a run, execute it, write the capsule and
//! print the report.

use std::io::Write;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use verba_core::aggregate::{export, Format, Report};
use verba_core::capsule::{replay_bytes, verify_bytes, Capsule, CapsuleError, CapsuleStore, RunSpec};
use verba_core::elicitation::{
    generate_variants, proposition_id, temperature_grid, ElicitQuestion, GenerationMethod, Generator, PromptTemplate,
    SweepGrid, DEFAULT_REPETITIONS,
};
use verba_core::ladder::{Aggregation, LadderConfig};
use verba_core::lens::ProbeSpec;
use verba_core::model::{load_case, InterpretationCase, Modality};
use verba_core::pipeline::{execute, execute_and_record};
use verba_core::transcript::Transcript;

use crate::args::{
    AggregationChoice, ElicitArgs, LadderArgs, OutputFormat, ProbeArgs, ReportArgs, SweepArgs, TemplateChoice,
};
use crate::config::{parse_model, Resolved};

/// Marker for failures on the provider side (exit code 2).
#[derive(Debug)]
pub struct ProviderFailure(pub String);

impl std::fmt::Display for ProviderFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ProviderFailure {}

pub fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

pub fn core_format(f: OutputFormat) -> Format {
    match f {
        OutputFormat::Csv => Format::Csv,
        OutputFormat::Json => Format::Json,
        OutputFormat::Svg => Format::Svg,
    }
}

pub fn template_for(choice: TemplateChoice) -> PromptTemplate {
    match choice {
        TemplateChoice::Confidence => PromptTemplate::confidence(),
        TemplateChoice::YesNo => PromptTemplate::yes_no(),
    }
}

fn load(path: &Path) -> Result<InterpretationCase> {
    load_case(path).with_context(|| format!("case {}", path.display()))
}

fn emit(report: &Report, format: OutputFormat) -> Result<()> {
    let bytes = export(report, core_format(format))?;
    let mut out = std::io::stdout().lock();
    out.write_all(&bytes)?;
    out.flush()?;
    Ok(())
}

fn note_failures(transcript: &Transcript, embedding_errors: usize) {
    let failed = transcript.entries.len() - transcript.successes() + embedding_errors;
    let total = transcript.entries.len().max(embedding_errors);
    if failed > 0 {
        eprintln!("warning: {failed} provider call(s) failed and are recorded as error markers (of {total})");
    }
}

/// Execute `run`, write its capsule unless disabled, print the report.
fn run_and_emit(r: &Resolved, run: RunSpec, case: &InterpretationCase) -> Result<()> {
    let backend = r.backend()?;
    let policy = r.policy();
    let started = now();
    let (report, transcript, embedding_errors) = if r.no_capsule {
        let a = execute(&run, case, backend.as_ref(), &policy, &started)?;
        let errors = a.embedding_calls.iter().filter(|c| c.values.is_none()).count();
        (a.derived.report, a.transcript, errors)
    } else {
        let capsule = execute_and_record(&run, case, backend.as_ref(), &policy, &started, now)?;
        let path = CapsuleStore::new(&r.capsule_dir).put(&capsule)?;
        eprintln!("capsule {} written to {}", capsule.capsule_id, path.display());
        let errors = capsule.embedding_calls.iter().filter(|c| c.values.is_none()).count();
        (capsule.derived.report, capsule.transcript, errors)
    };
    note_failures(&transcript, embedding_errors);
    emit(&report, r.format)
}

pub fn probe(a: &ProbeArgs) -> Result<()> {
    let r = Resolved::new(&a.common)?;
    let case = load(&a.common.case)?;
    let bytes = std::fs::read(&a.probes).with_context(|| format!("cannot read probes {}", a.probes.display()))?;
    let mut spec: ProbeSpec =
        serde_json::from_slice(&bytes).with_context(|| format!("invalid probe spec {}", a.probes.display()))?;
    if spec.reference.is_none() {
        spec.reference = Some(case.clause.as_str().to_string());
    }
    if spec.models.is_empty() {
        spec.models = a
            .common
            .models
            .iter()
            .map(|m| parse_model(m, Modality::Embedding))
            .collect::<Result<_>>()?;
    }
    if spec.models.is_empty() && r.mock {
        spec.models.push(parse_model("mock:mock-embed", Modality::Embedding)?);
    }
    spec.validate()?;
    run_and_emit(&r, RunSpec::Probe { spec }, &case)
}

pub fn elicit(a: &ElicitArgs) -> Result<()> {
    let r = Resolved::new(&a.common)?;
    let case = load(&a.common.case)?;
    let mut questions: Vec<ElicitQuestion> = a
        .questions
        .iter()
        .map(|q| ElicitQuestion {
            question_id: proposition_id(q),
            text: q.clone(),
        })
        .collect();
    for label in &a.propositions {
        let reading = case
            .reading(label)
            .ok_or_else(|| anyhow!("the case has no reading labelled {label:?}"))?;
        questions.push(ElicitQuestion {
            question_id: reading.label.clone(),
            text: reading.proposition.as_str().to_string(),
        });
    }
    if questions.is_empty() {
        questions = ElicitQuestion::from_readings(&case);
    }
    let run = RunSpec::Elicit {
        template: template_for(r.template(a.template)?),
        questions,
        models: r.require_models()?.to_vec(),
        sampler: r.sampler.clone(),
        repetitions: a.reps.or(r.config.reps).unwrap_or(DEFAULT_REPETITIONS),
    };
    run_and_emit(&r, run, &case)
}

pub fn sweep(a: &SweepArgs) -> Result<()> {
    let r = Resolved::new(&a.common)?;
    let case = load(&a.common.case)?;
    let question = match &a.question {
        Some(q) => q.clone(),
        None => case
            .candidate_readings
            .first()
            .map(|rd| rd.proposition.as_str().to_string())
            .ok_or_else(|| anyhow!("no --question given and the case has no readings"))?,
    };
    let lo = a.temp_lo.or(r.config.temp_lo).unwrap_or(0.01);
    let hi = a.temp_hi.or(r.config.temp_hi).unwrap_or(1.0);
    let steps = a.temp_steps.or(r.config.temp_steps).unwrap_or(10);
    let temperatures = temperature_grid(lo, hi, steps)?;
    let n_variants = a.variants.or(r.config.variants).unwrap_or(20);
    let generator = a.generator.clone().or_else(|| r.config.generator.clone());
    let variants = match generator {
        None => generate_variants(&question, n_variants, GenerationMethod::TemplatedLocal, None)?,
        Some(g) => {
            let model = parse_model(&g, Modality::Chat)?;
            let backend = r.backend()?;
            generate_variants(
                &question,
                n_variants,
                GenerationMethod::ModelGenerated,
                Some(Generator {
                    backend: backend.as_ref(),
                    model: &model,
                    background: Some(case.clause.as_str()),
                }),
            )
            .map_err(|e| ProviderFailure(format!("variant generation failed: {e}")))?
        }
    };
    let grid = SweepGrid {
        models: r.require_models()?.to_vec(),
        temperatures,
        variants,
        repetitions: a.reps.or(r.config.reps).unwrap_or(DEFAULT_REPETITIONS),
    };
    grid.validate()?;
    let run = RunSpec::Sweep {
        template: template_for(r.template(a.template)?),
        grid,
        sampler: r.sampler.clone(),
    };
    run_and_emit(&r, run, &case)
}

pub fn ladder(a: &LadderArgs) -> Result<()> {
    let r = Resolved::new(&a.common)?;
    let case = load(&a.common.case)?;
    let proposition = match &a.proposition {
        Some(p) => {
            case.reading(p)
                .ok_or_else(|| anyhow!("the case has no reading labelled {p:?}"))?;
            p.clone()
        }
        None => case
            .candidate_readings
            .first()
            .map(|rd| rd.label.clone())
            .ok_or_else(|| anyhow!("the case has no readings"))?,
    };
    let config = LadderConfig {
        models: r.require_models()?.to_vec(),
        sampler: r.sampler.clone(),
        repetitions: a.reps.or(r.config.reps).unwrap_or(DEFAULT_REPETITIONS),
        template: template_for(TemplateChoice::Confidence),
        aggregation: match r.aggregation(a.aggregation)? {
            AggregationChoice::Mean => Aggregation::Mean,
            AggregationChoice::Median => Aggregation::Median,
        },
    };
    run_and_emit(&r, RunSpec::Ladder { proposition, config }, &case)
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).with_context(|| format!("cannot read {}", path.display()))
}

pub fn capsule_verify(path: &Path) -> Result<()> {
    let report = verify_bytes(&read(path)?);
    println!("{}", serde_json::to_string_pretty(&report)?);
    for c in &report.checks {
        eprintln!("{} {}: {}", if c.passed { "ok  " } else { "FAIL" }, c.name, c.detail);
    }
    if !report.passed() {
        bail!("{} failed verification", path.display());
    }
    Ok(())
}

pub fn capsule_replay(path: &Path, format: Option<OutputFormat>) -> Result<()> {
    match replay_bytes(&read(path)?) {
        Ok((capsule, derived)) => {
            eprintln!("replay of {} matches the recorded reports", capsule.capsule_id);
            emit(&derived.report, format.unwrap_or(OutputFormat::Json))
        }
        Err(CapsuleError::DivergenceDetected(diffs)) => {
            for d in &diffs {
                eprintln!(
                    "diverges at {}: recorded {} recomputed {}",
                    d.path, d.recorded, d.recomputed
                );
            }
            bail!("replay of {} diverges at {} field(s)", path.display(), diffs.len())
        }
        Err(e) => Err(e.into()),
    }
}

pub fn report(a: &ReportArgs) -> Result<()> {
    let bytes = read(&a.file)?;
    let check = verify_bytes(&bytes);
    if !check.passed() {
        bail!("{} failed verification: {check}", a.file.display());
    }
    let capsule = Capsule::from_bytes(&bytes)?;
    emit(&capsule.derived.report, a.format.unwrap_or(OutputFormat::Csv))
}
