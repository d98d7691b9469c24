//! Fixture runs shared by the integration suites.
#![allow(dead_code)]

use verba_core::backends::{Backend, FanOutPolicy, MockBackend};
use verba_core::capsule::{Capsule, RunSpec};
use verba_core::elicitation::{
    generate_variants, plan_elicit, temperature_grid, ElicitQuestion, GenerationMethod, PromptTemplate, SweepGrid,
};
use verba_core::fixtures;
use verba_core::ladder::{plan_ladder, Aggregation, LadderConfig};
use verba_core::lens::ProbeSpec;
use verba_core::model::{InterpretationCase, Modality, ModelSpec, SamplerSettings};
use verba_core::pipeline::execute_and_record;

pub const STARTED: &str = "2026-01-01T00:00:00Z";
pub const FINISHED: &str = "2026-01-01T00:00:01Z";

pub fn record_with(run: &RunSpec, case: &InterpretationCase, backend: &dyn Backend) -> Capsule {
    execute_and_record(run, case, backend, &FanOutPolicy::immediate(8), STARTED, || {
        FINISHED.to_string()
    })
    .expect("fixture run records")
}

pub fn burglary_spec() -> RunSpec {
    let case = fixtures::burglary_case();
    RunSpec::Elicit {
        template: PromptTemplate::confidence(),
        questions: ElicitQuestion::from_readings(&case),
        models: vec![fixtures::gpt4()],
        sampler: fixtures::chat_sampler(),
        repetitions: 1,
    }
}

pub fn burglary_mock() -> MockBackend {
    let RunSpec::Elicit {
        template,
        questions,
        models,
        sampler,
        repetitions,
    } = burglary_spec()
    else {
        unreachable!()
    };
    let plan = plan_elicit(
        &fixtures::burglary_case(),
        &template,
        &questions,
        &models,
        &sampler,
        repetitions,
    )
    .expect("plan");
    fixtures::burglary_backend(&plan)
}

pub fn burglary_capsule() -> Capsule {
    record_with(&burglary_spec(), &fixtures::burglary_case(), &burglary_mock())
}

pub fn stewart_ladder_config() -> LadderConfig {
    LadderConfig {
        models: vec![fixtures::gpt4(), fixtures::claude2()],
        sampler: fixtures::chat_sampler(),
        repetitions: 1,
        template: PromptTemplate::confidence(),
        aggregation: Aggregation::Mean,
    }
}

pub fn stewart_ladder_spec() -> RunSpec {
    RunSpec::Ladder {
        proposition: "monthly".into(),
        config: stewart_ladder_config(),
    }
}

pub fn stewart_mock() -> MockBackend {
    let case = fixtures::stewart_case();
    let plan = plan_ladder(&case, case.reading("monthly").expect("reading"), &stewart_ladder_config()).expect("plan");
    fixtures::stewart_backend(&plan)
}

pub fn stewart_ladder_capsule() -> Capsule {
    record_with(&stewart_ladder_spec(), &fixtures::stewart_case(), &stewart_mock())
}

pub fn mock_models(n: usize) -> Vec<ModelSpec> {
    (0..n)
        .map(|i| ModelSpec::new("mock", &format!("mock-{i}"), Modality::Chat))
        .collect()
}

pub fn sweep_spec(models: usize, temps: usize, variants: usize, reps: u32) -> RunSpec {
    let question = "Are the monthly royalty statements owed for the life of the agreement?";
    RunSpec::Sweep {
        template: PromptTemplate::yes_no(),
        grid: SweepGrid {
            models: mock_models(models),
            temperatures: temperature_grid(0.01, 1.0, temps).expect("grid"),
            variants: generate_variants(question, variants, GenerationMethod::TemplatedLocal, None).expect("variants"),
            repetitions: reps,
        },
        sampler: SamplerSettings {
            seed: Some(11),
            ..Default::default()
        },
    }
}

pub fn sweep_capsule() -> Capsule {
    record_with(
        &sweep_spec(2, 3, 2, 2),
        &fixtures::stewart_case(),
        &MockBackend::hash_seeded(),
    )
}

pub fn probe_spec() -> RunSpec {
    RunSpec::Probe {
        spec: ProbeSpec {
            anchor_template: "flood caused by {X}".into(),
            reference: Some("flood caused by water".into()),
            probes: vec!["rainfall".into(), "a burst pipe".into(), "joy".into()],
            models: (0..3)
                .map(|i| ModelSpec::new("mock", &format!("embed-{i}"), Modality::Embedding))
                .collect(),
            variant_templates: vec!["damage from a flood caused by {X}".into()],
        },
    }
}

pub fn probe_capsule() -> Capsule {
    record_with(
        &probe_spec(),
        &fixtures::famiglio_case(),
        &MockBackend::hash_seeded().with_embedding_dimension(16),
    )
}

pub fn famiglio_capsule() -> Capsule {
    let case = fixtures::famiglio_case();
    let run = RunSpec::Elicit {
        template: PromptTemplate::confidence(),
        questions: ElicitQuestion::from_readings(&case),
        models: mock_models(2),
        sampler: fixtures::full_spectrum_sampler(),
        repetitions: 3,
    };
    record_with(&run, &case, &MockBackend::hash_seeded())
}

/// Every fixture capsule with a label.
pub fn all_fixture_capsules() -> Vec<(&'static str, Capsule)> {
    vec![
        ("burglary-elicit", burglary_capsule()),
        ("stewart-ladder", stewart_ladder_capsule()),
        ("stewart-sweep", sweep_capsule()),
        ("famiglio-elicit", famiglio_capsule()),
        ("flood-probe", probe_capsule()),
    ]
}
