//! Acceptance suite: one PASS/FAIL line per headline criterion.

mod common;

use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;
use verba_core::aggregate::{export, histogram_of, minority_mass, Format, Report, SweepReport};
use verba_core::backends::{FanOutPolicy, MockBackend, Schedule};
use verba_core::capsule::{replay, replay_bytes, verify, verify_bytes, Capsule, RunSpec};
use verba_core::elicitation::{
    parse_confidence, plan_sweep, render_confidence, run_sweep, temperature_grid, top_tokens, SampleSet,
};
use verba_core::fixtures;
use verba_core::hashing::canonical_json;
use verba_core::ladder::{from_ppm, run_ladder};
use verba_core::lens::{matrix_from_calls, normalize_matrix, rank_probes, EmbeddingCall, ProbeSpec};
use verba_core::model::{sanitize_text, Modality, ModelSpec};
use verba_core::pipeline::execute;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    check(elapsed < limit, format!("took {elapsed:?}, limit {limit:?}"))
}

fn burglary_elicitation() -> Outcome {
    let t = Instant::now();
    let case = fixtures::burglary_case();
    let spec = burglary_spec();
    let backend = burglary_mock();
    let run = execute(&spec, &case, &backend, &FanOutPolicy::immediate(8), STARTED).map_err(|e| e.to_string())?;
    let got: Vec<Option<f64>> = run
        .derived
        .sample_sets
        .iter()
        .map(|s| s.samples[0].confidence())
        .collect();
    check(
        got == vec![Some(0.90), Some(0.70), Some(0.80)],
        format!("parsed {got:?}"),
    )?;
    let capsule = burglary_capsule();
    let bytes = capsule.to_bytes();
    let (_, replayed) = replay_bytes(&bytes).map_err(|e| e.to_string())?;
    let recorded = export(&capsule.derived.report, Format::Json).map_err(|e| e.to_string())?;
    let again = export(&replayed.report, Format::Json).map_err(|e| e.to_string())?;
    check(recorded == again, "replayed report bytes differ")?;
    check(
        canonical_json(&replayed) == canonical_json(&capsule.derived),
        "replayed derived bytes differ",
    )?;
    within(t.elapsed(), Duration::from_secs(1))?;
    Ok(format!("confidences {got:?}, replay byte-identical, {:?}", t.elapsed()))
}

fn evidence_ladder() -> Outcome {
    let t = Instant::now();
    let case = fixtures::stewart_case();
    let reading = case.reading("monthly").ok_or("no reading")?;
    let run = run_ladder(
        &case,
        reading,
        &stewart_ladder_config(),
        &stewart_mock(),
        &FanOutPolicy::immediate(8),
    )
    .map_err(|e| e.to_string())?;
    let expect = [
        ("gpt-4", [0.10, 0.75, 0.95], [0.65, 0.20]),
        ("claude-2", [0.10, 0.20, 0.90], [0.10, 0.70]),
    ];
    for (model, traj, deltas) in expect {
        let tr = run
            .result
            .trajectories
            .iter()
            .find(|t| t.model_id == model)
            .ok_or("missing model")?;
        let pts: Vec<f64> = tr
            .points
            .iter()
            .map(|p| p.confidence_ppm.map_or(f64::NAN, from_ppm))
            .collect();
        check(pts == traj, format!("{model} trajectory {pts:?}"))?;
        let ds: Vec<f64> = tr.deltas.iter().map(|d| d.value().unwrap_or(f64::NAN)).collect();
        check(ds == deltas, format!("{model} deltas {ds:?}"))?;
        let sum: i64 = tr.deltas.iter().filter_map(|d| d.delta_ppm).sum();
        let span = tr.points[2].confidence_ppm.unwrap() - tr.points[0].confidence_ppm.unwrap();
        check(sum == span, format!("{model} deltas sum {sum} != {span}"))?;
    }
    check(run.result.direction_only_caveat, "caveat flag missing")?;
    within(t.elapsed(), Duration::from_secs(1))?;
    Ok(format!(
        "trajectories and deltas exact, telescoping exact, {:?}",
        t.elapsed()
    ))
}

fn next_token_distribution() -> Outcome {
    let backend = fixtures::famiglio_backend();
    let result =
        verba_core::backends::Backend::complete(&backend, &fixtures::famiglio_request()).map_err(|e| e.to_string())?;
    check(
        result.text.starts_with("The second filing would determine"),
        "response text",
    )?;
    let dist = top_tokens(&result, fixtures::FAMIGLIO_DECISIVE_POSITION).map_err(|e| e.to_string())?;
    let got: Vec<(String, f64)> = dist
        .alternatives
        .iter()
        .map(|a| (a.token.clone(), a.probability))
        .collect();
    let want: Vec<(String, f64)> = fixtures::FAMIGLIO_ALTERNATIVES
        .iter()
        .map(|(t, p)| (t.to_string(), *p))
        .collect();
    check(got == want, format!("alternatives {got:?}"))?;
    check(got.windows(2).all(|w| w[0].1 >= w[1].1), "not descending")?;
    let total = dist.total();
    check((total - 0.9998).abs() < 1e-12 && total <= 1.0, format!("sum {total}"))?;
    Ok(format!("5 alternatives descending, sum {total:.4}"))
}

fn temperature() -> Outcome {
    let g = temperature_grid(0.01, 1.0, 10).map_err(|e| e.to_string())?;
    check(g.len() == 10, "length")?;
    check(g[0] == 0.01 && g[9] == 1.0, format!("endpoints {} {}", g[0], g[9]))?;
    check(g.windows(2).all(|w| w[0] < w[1]), "not strictly increasing")?;
    let step = (1.0 - 0.01) / 9.0;
    let worst = g.windows(2).map(|w| (w[1] - w[0] - step).abs()).fold(0.0, f64::max);
    check(worst <= 1e-12, format!("spacing error {worst:e}"))?;
    Ok(format!("10 points, spacing error {worst:.1e}"))
}

fn random_unit_vec(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        if v.iter().any(|x| x.abs() > 1e-3) {
            return v;
        }
    }
}

/// Direct recomputation: cosine, per-model min-max, column mean, sort.
fn oracle(spec: &ProbeSpec, vecs: &dyn Fn(&str, &str) -> Vec<f64>) -> Vec<(String, f64)> {
    let mut norm_rows = Vec::new();
    for m in &spec.models {
        let r = vecs(&m.model_id, spec.reference_text());
        let mut row = Vec::new();
        for p in &spec.probes {
            let sents = spec.sentences(p);
            let mut avg = vec![0.0; r.len()];
            for s in &sents {
                for (a, x) in avg.iter_mut().zip(vecs(&m.model_id, s)) {
                    *a += x;
                }
            }
            for a in avg.iter_mut() {
                *a /= sents.len() as f64;
            }
            let mut dot = 0.0;
            let mut na = 0.0;
            let mut nb = 0.0;
            for i in 0..r.len() {
                dot += avg[i] * r[i];
                na += avg[i] * avg[i];
                nb += r[i] * r[i];
            }
            row.push(1.0 - dot / (na.sqrt() * nb.sqrt()));
        }
        let lo = row.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        norm_rows.push(
            row.iter()
                .map(|x| if hi > lo { (x - lo) / (hi - lo) } else { 0.0 })
                .collect::<Vec<_>>(),
        );
    }
    let mut out: Vec<(String, f64)> = spec
        .probes
        .iter()
        .enumerate()
        .map(|(j, p)| {
            (
                p.clone(),
                norm_rows.iter().map(|r| r[j]).sum::<f64>() / norm_rows.len() as f64,
            )
        })
        .collect();
    out.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then_with(|| a.0.cmp(&b.0)));
    out
}

fn random_spec(rng: &mut ChaCha8Rng) -> ProbeSpec {
    let n_models = rng.gen_range(1..=6);
    let n_probes = rng.gen_range(2..=8);
    let n_variants = rng.gen_range(0..=2);
    ProbeSpec {
        anchor_template: "loss caused by {X}".into(),
        reference: Some("loss caused by water".into()),
        probes: (0..n_probes).map(|i| format!("probe {i}")).collect(),
        models: (0..n_models)
            .map(|i| ModelSpec::new("mock", &format!("embed-{i}"), Modality::Embedding))
            .collect(),
        variant_templates: (0..n_variants)
            .map(|i| format!("variant {i}: damage from {{X}}"))
            .collect(),
    }
}

fn lens() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut worst: f64 = 0.0;
    for trial in 0..200 {
        let spec = random_spec(&mut rng);
        let dim = rng.gen_range(2..=16);
        let calls: Vec<EmbeddingCall> = spec
            .embedding_jobs()
            .into_iter()
            .map(|(m, text)| EmbeddingCall {
                model_id: m.model_id,
                text,
                values: Some(random_unit_vec(&mut rng, dim)),
                error: None,
            })
            .collect();
        let lookup = |model: &str, text: &str| -> Vec<f64> {
            calls
                .iter()
                .find(|c| c.model_id == model && c.text == text)
                .and_then(|c| c.values.clone())
                .expect("vector present")
        };
        let matrix = matrix_from_calls(&spec, &calls).map_err(|e| e.to_string())?;
        let ranking = rank_probes(&normalize_matrix(&matrix).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        let expected = oracle(&spec, &lookup);
        for (e, (probe, mean)) in ranking.entries.iter().zip(&expected) {
            worst = worst.max((e.mean - mean).abs());
            check(
                (e.mean - mean).abs() <= 1e-9,
                format!("trial {trial}: {} mean {} vs {mean}", e.probe, e.mean),
            )?;
            // Means within 1e-9 may legitimately swap places.
            if e.probe != *probe {
                let other = ranking
                    .entries
                    .iter()
                    .find(|x| x.probe == *probe)
                    .ok_or("missing probe")?;
                check(
                    (other.mean - e.mean).abs() <= 1e-9,
                    format!("trial {trial}: rank order differs at {}", e.probe),
                )?;
            }
        }
    }

    for trial in 0..100 {
        let n_models = rng.gen_range(1..=5);
        let n_probes = rng.gen_range(2..=8);
        let rows: Vec<Vec<f64>> = (0..n_models)
            .map(|_| (0..n_probes).map(|_| rng.gen_range(0.0..2.0)).collect())
            .collect();
        let transformed: Vec<Vec<f64>> = rows
            .iter()
            .map(|row| {
                let a = rng.gen_range(0.1..5.0);
                let b = rng.gen_range(-1.0..1.0);
                let k = rng.gen_range(0..3);
                row.iter()
                    .map(|&x| match k {
                        0 => a * x + b,
                        1 => (x * a).exp() + b,
                        _ => x.powi(3) * a + x + b,
                    })
                    .collect()
            })
            .collect();
        let labels: Vec<String> = (0..n_probes).map(|i| format!("p{i}")).collect();
        let ids: Vec<String> = (0..n_models).map(|i| format!("m{i}")).collect();
        let m1 = verba_core::lens::DistanceMatrix::from_rows(ids.clone(), labels.clone(), rows.clone());
        let m2 = verba_core::lens::DistanceMatrix::from_rows(ids, labels.clone(), transformed);
        let n1 = normalize_matrix(&m1)
            .map_err(|e| e.to_string())?
            .complete_rows()
            .map_err(|e| e.to_string())?;
        let n2 = normalize_matrix(&m2)
            .map_err(|e| e.to_string())?
            .complete_rows()
            .map_err(|e| e.to_string())?;
        for (r1, r2) in n1.iter().zip(&n2) {
            let argsort = |r: &Vec<f64>| {
                let mut idx: Vec<usize> = (0..r.len()).collect();
                idx.sort_by(|&i, &j| r[i].total_cmp(&r[j]).then(i.cmp(&j)));
                idx
            };
            check(
                argsort(r1) == argsort(r2),
                format!("trial {trial}: per-model order changed"),
            )?;
        }
        if n_models == 1 {
            let a = rank_probes(&normalize_matrix(&m1).unwrap()).unwrap();
            let b = rank_probes(&normalize_matrix(&m2).unwrap()).unwrap();
            let order =
                |r: &verba_core::lens::ProbeRanking| r.entries.iter().map(|e| e.probe.clone()).collect::<Vec<_>>();
            check(order(&a) == order(&b), format!("trial {trial}: ensemble order changed"))?;
        }
    }
    Ok(format!("200 oracle trials (max error {worst:.1e}), 100 argsort trials"))
}

fn sweep_sets(schedule: Schedule) -> Result<(SampleSet, Vec<u8>, Vec<u8>), String> {
    let RunSpec::Sweep {
        template,
        grid,
        sampler,
    } = sweep_spec(4, 10, 20, 5)
    else {
        unreachable!()
    };
    let policy = FanOutPolicy {
        schedule,
        ..FanOutPolicy::immediate(8)
    };
    let run = run_sweep(
        &fixtures::stewart_case(),
        &template,
        &grid,
        &sampler,
        &MockBackend::hash_seeded(),
        &policy,
        STARTED,
    )
    .map_err(|e| e.to_string())?;
    let report = Report::Sweep(SweepReport::from_samples(&run.samples));
    let csv = export(&report, Format::Csv).map_err(|e| e.to_string())?;
    let json = export(&report, Format::Json).map_err(|e| e.to_string())?;
    Ok((run.samples, csv, json))
}

fn sweep() -> Outcome {
    let t = Instant::now();
    let RunSpec::Sweep {
        template,
        grid,
        sampler,
    } = sweep_spec(4, 10, 20, 5)
    else {
        unreachable!()
    };
    let plan = plan_sweep(&fixtures::stewart_case(), &template, &grid, &sampler).map_err(|e| e.to_string())?;
    check(plan.calls.len() == 4000, format!("{} coordinates", plan.calls.len()))?;
    let base = sweep_sets(Schedule::InOrder)?;
    check(base.0.samples.len() == 4000, "sample count")?;
    check(!base.0.has_duplicate_coordinates(), "duplicate coordinates")?;
    for schedule in [
        Schedule::InOrder,
        Schedule::InOrder,
        Schedule::Shuffled(1),
        Schedule::Shuffled(99),
    ] {
        let other = sweep_sets(schedule)?;
        check(other.0 == base.0, format!("{schedule:?}: sample sets differ"))?;
        check(
            other.1 == base.1 && other.2 == base.2,
            format!("{schedule:?}: export bytes differ"),
        )?;
    }
    within(t.elapsed(), Duration::from_secs(30))?;
    Ok(format!(
        "4000 coordinates, 5 runs identical (2 shuffled), {:?}",
        t.elapsed()
    ))
}

fn capsules() -> Outcome {
    let all = all_fixture_capsules();
    let mut flips = 0usize;
    for (name, c) in &all {
        check(verify(c).passed(), format!("{name}: {}", verify(c)))?;
        let derived = replay(c).map_err(|e| format!("{name}: {e}"))?;
        check(derived == c.derived, format!("{name}: replay differs"))?;
        let bytes = c.to_bytes();
        check(
            Capsule::from_bytes(&bytes).map(|d| d.to_bytes()).ok() == Some(bytes.clone()),
            format!("{name}: reload differs"),
        )?;
        let mut rng = ChaCha8Rng::seed_from_u64(bytes.len() as u64);
        for _ in 0..300 {
            let i = rng.gen_range(0..bytes.len());
            let mut t = bytes.clone();
            t[i] ^= 1 << rng.gen_range(0..8);
            check(!verify_bytes(&t).passed(), format!("{name}: flip at {i} undetected"))?;
            flips += 1;
        }
    }
    Ok(format!(
        "{} fixtures fixed under record/verify/replay, {flips} byte flips detected, offline",
        all.len()
    ))
}

fn property<S: Strategy>(
    name: &str,
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<(), String> {
    let mut runner = TestRunner::new(Config {
        failure_persistence: None,
        ..Config::with_cases(1000)
    });
    runner.run(&strategy, test).map_err(|e| format!("{name}: {e}"))
}

fn properties() -> Outcome {
    property(
        "sanitize idempotence",
        "\\PC*|[a\u{200B}\u{0301}\u{FEFF}e\r\n\u{0085}é]{0,24}",
        |s| {
            let once = sanitize_text(s.as_bytes()).map_err(|e| TestCaseError::fail(e.to_string()))?;
            let twice = sanitize_text(once.as_str().as_bytes()).map_err(|e| TestCaseError::fail(e.to_string()))?;
            prop_assert_eq!(once.as_str(), twice.as_str());
            Ok(())
        },
    )?;
    property("parse round-trip", 0u32..=10_000, |n| {
        let c = n as f64 / 10_000.0;
        let rendered = format!("Likely ({}%)", n as f64 / 100.0);
        prop_assert_eq!(parse_confidence(&rendered).confidence, Some(c));
        prop_assert_eq!(parse_confidence(&render_confidence(c)).confidence, Some(c));
        Ok(())
    })?;
    let unit = prop_oneof![0.0f64..=1.0, Just(0.5), (0u32..=100).prop_map(|p| p as f64 / 100.0)];
    property(
        "histogram conservation",
        (prop::collection::vec(unit.clone(), 0..200), 1usize..40),
        |(v, bins)| {
            prop_assert_eq!(histogram_of(&v, bins).unwrap().total(), v.len());
            Ok(())
        },
    )?;
    property(
        "minority-mass mirror symmetry",
        prop::collection::vec(unit, 1..100),
        |v| {
            let mirrored: Vec<f64> = v.iter().map(|c| 1.0 - c).collect();
            prop_assert_eq!(minority_mass(&v), minority_mass(&mirrored));
            Ok(())
        },
    )?;
    let case = fixtures::stewart_case();
    property(
        "grid completeness",
        (1usize..4, 1usize..4, 1usize..4, 1u32..3),
        |(m, t, v, r)| {
            let RunSpec::Sweep {
                template,
                mut grid,
                sampler,
            } = sweep_spec(m, t.max(2), v, r)
            else {
                unreachable!()
            };
            if t == 1 {
                grid.temperatures = vec![0.5];
            }
            let plan = plan_sweep(&case, &template, &grid, &sampler).unwrap();
            prop_assert_eq!(plan.calls.len(), m * t * v * r as usize);
            let keys: std::collections::HashSet<_> = plan.calls.iter().map(|c| c.coordinate.key()).collect();
            prop_assert_eq!(keys.len(), plan.calls.len());
            Ok(())
        },
    )?;
    Ok("5 suites x 1000 cases".into())
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("burglary elicitation fixture", burglary_elicitation),
        ("evidence ladder fixture", evidence_ladder),
        ("next-token distribution fixture", next_token_distribution),
        ("temperature grid", temperature),
        ("embedding lens oracle and argsort invariance", lens),
        ("sweep determinism", sweep),
        ("capsule suite", capsules),
        ("property suites", properties),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        match std::panic::catch_unwind(f) {
            Ok(Ok(detail)) => println!("PASS {name}: {detail}"),
            Ok(Err(why)) => {
                failed += 1;
                println!("FAIL {name}: {why}");
            }
            Err(_) => {
                failed += 1;
                println!("FAIL {name}: panicked");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
