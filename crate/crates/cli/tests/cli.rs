use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use verba_core::backends::MockTable;
use verba_core::capsule::verify_bytes;
use verba_core::elicitation::{plan_elicit, ElicitQuestion, PromptTemplate};
use verba_core::fixtures;

fn verba(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_verba"))
        .args(args)
        .current_dir(dir)
        .env_remove("GI_API_KEY_OPENAI")
        .env("GI_BASE_URL_OPENAI", "http://127.0.0.1:9")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn capsules_in(dir: &Path) -> Vec<PathBuf> {
    let Ok(entries) = std::fs::read_dir(dir) else {
        return Vec::new();
    };
    let mut v: Vec<PathBuf> = entries
        .map(|e| e.unwrap().path())
        .filter(|p| p.to_string_lossy().ends_with(".capsule.json"))
        .collect();
    v.sort();
    v
}

const PROBES: &str = r#"{
  "anchor_template": "flood caused by {X}",
  "reference": "flood caused by water",
  "probes": ["rainfall", "a burst pipe", "joy"],
  "models": [
    {"provider": "mock", "model_id": "embed-a", "modality": "embedding"},
    {"provider": "mock", "model_id": "embed-b", "modality": "embedding"}
  ]
}"#;

#[test]
fn probe_writes_ranking_csv_and_capsule() {
    let tmp = tempfile::tempdir().unwrap();
    write(tmp.path(), "c.json", fixtures::FAMIGLIO_JSON);
    write(tmp.path(), "p.json", PROBES);
    let o = verba(
        &["probe", "--case", "c.json", "--probes", "p.json", "--mock"],
        tmp.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    let mut lines = out.lines();
    assert_eq!(lines.next(), Some("# schema_version=1 report=ranking"));
    assert_eq!(lines.next(), Some("probe,mean,dispersion,rank"));
    assert_eq!(lines.count(), 3);
    let files = capsules_in(&tmp.path().join("capsules"));
    assert_eq!(files.len(), 1);
    assert!(stderr(&o).contains("capsule "));

    let file = files[0].to_string_lossy().into_owned();
    let v = verba(&["capsule", "verify", &file], tmp.path());
    assert_eq!(v.status.code(), Some(0), "{}", stderr(&v));
    let report: serde_json::Value = serde_json::from_str(&stdout(&v)).unwrap();
    assert!(report["checks"].as_array().unwrap().iter().all(|c| c["passed"] == true));

    let again = verba(
        &["probe", "--case", "c.json", "--probes", "p.json", "--mock"],
        tmp.path(),
    );
    assert_eq!(stdout(&again), out);
    assert_eq!(
        capsules_in(&tmp.path().join("capsules")).len(),
        2,
        "timestamps differ, so ids differ"
    );
}

#[test]
fn tampered_capsule_fails_verification() {
    let tmp = tempfile::tempdir().unwrap();
    write(tmp.path(), "c.json", fixtures::STEWART_JSON);
    let o = verba(&["ladder", "--case", "c.json", "--mock", "--reps", "2"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let file = capsules_in(&tmp.path().join("capsules")).remove(0);
    let text = std::fs::read_to_string(&file).unwrap();
    let tampered = write(tmp.path(), "t.capsule.json", &text.replacen("phone", "Phone", 1));
    let v = verba(&["capsule", "verify", &tampered.to_string_lossy()], tmp.path());
    assert_eq!(v.status.code(), Some(1));
    assert!(stderr(&v).contains("FAIL"));
}

#[test]
fn unknown_subcommand_prints_usage_and_exits_1() {
    let tmp = tempfile::tempdir().unwrap();
    let o = verba(&["frobnicate"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("Usage"), "{}", stderr(&o));
    let o = verba(&["elicit"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--case"));
    let o = verba(&["--help"], tmp.path());
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn bad_input_exits_1() {
    let tmp = tempfile::tempdir().unwrap();
    let o = verba(&["elicit", "--case", "missing.json", "--mock"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("missing.json"));
    write(tmp.path(), "c.json", fixtures::STEWART_JSON);
    let o = verba(
        &["ladder", "--case", "c.json", "--mock", "--proposition", "nope"],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(1));
    let o = verba(&["elicit", "--case", "c.json"], tmp.path());
    assert_eq!(o.status.code(), Some(1), "no models");
}

#[test]
fn table_driven_elicit_reproduces_fixture_confidences() {
    let tmp = tempfile::tempdir().unwrap();
    write(tmp.path(), "c.json", fixtures::BURGLARY_JSON);
    let case = fixtures::burglary_case();
    let plan = plan_elicit(
        &case,
        &PromptTemplate::confidence(),
        &ElicitQuestion::from_readings(&case),
        &[fixtures::gpt4()],
        &fixtures::chat_sampler(),
        1,
    )
    .unwrap();
    let table: MockTable = fixtures::burglary_backend(&plan).table_entries().clone();
    write(tmp.path(), "table.json", &serde_json::to_string(&table).unwrap());
    let o = verba(
        &[
            "elicit",
            "--case",
            "c.json",
            "--mock-table",
            "table.json",
            "--model",
            "openai:gpt-4",
            "--reps",
            "1",
        ],
        tmp.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    for (label, _, p) in fixtures::BURGLARY_RESPONSES {
        let row = out.lines().find(|l| l.starts_with(&format!("{label},*,"))).unwrap();
        let mean: f64 = row.split(',').nth(5).unwrap().parse().unwrap();
        assert_eq!(mean, p, "{row}");
    }
    let file = capsules_in(&tmp.path().join("capsules")).remove(0);
    assert!(verify_bytes(&std::fs::read(&file).unwrap()).passed());

    let r = verba(&["report", &file.to_string_lossy()], tmp.path());
    assert_eq!(stdout(&r), out, "report re-exports the same bytes");
    let r = verba(
        &["capsule", "replay", &file.to_string_lossy(), "--format", "csv"],
        tmp.path(),
    );
    assert!(r.status.success(), "{}", stderr(&r));
    assert_eq!(stdout(&r), out);
}

#[test]
fn no_capsule_writes_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    write(tmp.path(), "c.json", fixtures::STEWART_JSON);
    let o = verba(
        &[
            "ladder",
            "--case",
            "c.json",
            "--mock",
            "--no-capsule",
            "--format",
            "json",
        ],
        tmp.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["report_type"], "ladder");
    assert!(!tmp.path().join("capsules").exists());
}

#[test]
fn provider_failure_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    write(tmp.path(), "c.json", fixtures::STEWART_JSON);
    let o = verba(
        &["elicit", "--case", "c.json", "--model", "openai:gpt-4", "--reps", "1"],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(capsules_in(&tmp.path().join("capsules")).is_empty());
}

#[test]
fn sweep_and_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    write(tmp.path(), "c.json", fixtures::STEWART_JSON);
    write(
        tmp.path(),
        "cfg.json",
        r#"{"models": ["mock:a", "mock:b"], "temp_lo": 0.2, "temp_hi": 0.8, "temp_steps": 3, "variants": 2, "reps": 2,
            "template": "yes-no", "capsule_dir": "out", "mock": true}"#,
    );
    let o = verba(&["sweep", "--case", "c.json", "--config", "cfg.json"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert_eq!(
        out.lines().nth(1),
        Some("model,temperature,variant_id,repetition,status,verdict,confidence,parse_rule")
    );
    assert_eq!(out.lines().count(), 2 + 2 * 3 * 2 * 2);
    assert!(out.contains("\na,0.2,v00,0,"));
    assert_eq!(capsules_in(&tmp.path().join("out")).len(), 1);

    let o = verba(
        &[
            "sweep", "--case", "c.json", "--config", "cfg.json", "--reps", "1", "--format", "svg",
        ],
        tmp.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("<?xml") || stdout(&o).starts_with("<svg"));

    write(tmp.path(), "bad.json", r#"{"modles": []}"#);
    let o = verba(&["sweep", "--case", "c.json", "--config", "bad.json"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
}
