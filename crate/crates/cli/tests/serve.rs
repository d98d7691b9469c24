use std::io::{BufRead, BufReader};
use std::process::{Child, Command, Stdio};
use std::time::{Duration, Instant};

use serde_json::{json, Value};
use verba_core::capsule::verify_bytes;
use verba_core::fixtures;

struct Server {
    child: Child,
    base: String,
    _dir: tempfile::TempDir,
}

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

fn start() -> Server {
    let dir = tempfile::tempdir().unwrap();
    let mut child = Command::new(env!("CARGO_BIN_EXE_verba"))
        .args([
            "serve",
            "--mock",
            "--port",
            "0",
            "--reps",
            "2",
            "--model",
            "mock:alpha",
            "--model",
            "mock:beta",
        ])
        .arg("--capsule-dir")
        .arg(dir.path())
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap())
        .read_line(&mut line)
        .unwrap();
    assert!(line.starts_with("http://127.0.0.1:"), "{line}");
    Server {
        child,
        base: line.trim().to_string(),
        _dir: dir,
    }
}

fn call(method: &str, url: &str, body: Option<Value>, request_id: Option<&str>) -> (u16, Value) {
    let mut req = ureq::request(method, url);
    if let Some(id) = request_id {
        req = req.set("X-Request-Id", id);
    }
    let res = match body {
        Some(b) => req.set("Content-Type", "application/json").send_string(&b.to_string()),
        None => req.call(),
    };
    let resp = match res {
        Ok(r) => r,
        Err(ureq::Error::Status(_, r)) => r,
        Err(e) => panic!("{e}"),
    };
    let status = resp.status();
    let text = resp.into_string().unwrap();
    (status, serde_json::from_str(&text).unwrap_or(Value::Null))
}

fn case_body() -> Value {
    json!({ "case": serde_json::from_str::<Value>(fixtures::STEWART_JSON).unwrap() })
}

fn wait_job(s: &Server, job: &str) -> Value {
    let deadline = Instant::now() + Duration::from_secs(20);
    loop {
        let (code, j) = call("GET", &format!("{}/jobs/{job}", s.base), None, None);
        assert_eq!(code, 200);
        if j["status"] != "running" {
            return j;
        }
        assert!(Instant::now() < deadline, "job {job} did not finish");
        std::thread::sleep(Duration::from_millis(20));
    }
}

fn rungs(ladder: &Value) -> Vec<usize> {
    ladder["ladders"][0]["result"]["trajectories"]
        .as_array()
        .unwrap()
        .iter()
        .map(|t| t["points"].as_array().unwrap().len())
        .collect()
}

fn new_session(s: &Server) -> String {
    let (code, v) = call("POST", &format!("{}/sessions", s.base), Some(case_body()), None);
    assert_eq!(code, 201, "{v}");
    v["session_id"].as_str().unwrap().to_string()
}

#[test]
fn session_ladder_grows_with_evidence() {
    let s = start();
    let id = new_session(&s);
    let (code, v) = call("GET", &format!("{}/sessions/{id}", s.base), None, None);
    assert_eq!(code, 200);
    assert_eq!(v["case"]["evidence"].as_array().unwrap().len(), 2);
    assert_eq!(v["models"].as_array().unwrap().len(), 2);

    let (code, job) = call("POST", &format!("{}/sessions/{id}/ladder", s.base), None, None);
    assert_eq!(code, 202, "{job}");
    let done = wait_job(&s, job["job_id"].as_str().unwrap());
    assert_eq!(done["status"], "succeeded", "{done}");
    let (_, ladder) = call("GET", &format!("{}/sessions/{id}/ladder", s.base), None, None);
    assert_eq!(rungs(&ladder), vec![3, 3]);

    let capsule_id = ladder["ladders"][0]["capsule_id"].as_str().unwrap();
    let bytes = ureq::get(&format!("{}/capsules/{capsule_id}", s.base))
        .call()
        .unwrap()
        .into_string()
        .unwrap();
    assert!(verify_bytes(bytes.as_bytes()).passed());

    let item = json!({"evidence_id": "prior-dealing", "kind": "course_of_dealing",
                      "text": "On two earlier projects the owner paid the contractor monthly."});
    let (code, v) = call("POST", &format!("{}/sessions/{id}/evidence", s.base), Some(item), None);
    assert_eq!(code, 202, "{v}");
    let done = wait_job(&s, v["job_id"].as_str().unwrap());
    assert_eq!(done["status"], "succeeded");
    let (_, ladder) = call("GET", &format!("{}/sessions/{id}/ladder", s.base), None, None);
    assert_eq!(rungs(&ladder), vec![4, 4]);
    assert_eq!(ladder["previous"][0]["capsule_id"], capsule_id);
    assert_eq!(ladder["pending_job"], Value::Null);

    let (code, v) = call(
        "DELETE",
        &format!("{}/sessions/{id}/evidence/phone-call", s.base),
        None,
        None,
    );
    assert_eq!(code, 202);
    wait_job(&s, v["job_id"].as_str().unwrap());
    let (_, ladder) = call("GET", &format!("{}/sessions/{id}/ladder", s.base), None, None);
    assert_eq!(rungs(&ladder), vec![3, 3]);
    assert_eq!(
        ladder["ladders"][0]["evidence_order"],
        json!(["industry-norm", "prior-dealing"])
    );

    let (_, v) = call("GET", &format!("{}/sessions/{id}", s.base), None, None);
    assert_eq!(v["capsule_ids"].as_array().unwrap().len(), 3);
    assert_eq!(v["revision"], 2);
}

#[test]
fn reorder_identity_is_a_no_op() {
    let s = start();
    let id = new_session(&s);
    let (code, v) = call(
        "POST",
        &format!("{}/sessions/{id}/reorder", s.base),
        Some(json!({"order": ["phone-call", "industry-norm"]})),
        None,
    );
    assert_eq!(code, 200, "{v}");
    assert_eq!(v["job_id"], Value::Null);
    assert_eq!(v["session"]["revision"], 0);

    let (code, v) = call(
        "POST",
        &format!("{}/sessions/{id}/reorder", s.base),
        Some(json!({"permutation": [1, 0]})),
        None,
    );
    assert_eq!(code, 202);
    wait_job(&s, v["job_id"].as_str().unwrap());
    let (_, ladder) = call("GET", &format!("{}/sessions/{id}/ladder", s.base), None, None);
    assert_eq!(
        ladder["ladders"][0]["evidence_order"],
        json!(["industry-norm", "phone-call"])
    );

    let (code, _) = call(
        "POST",
        &format!("{}/sessions/{id}/reorder", s.base),
        Some(json!({"permutation": [0, 0]})),
        None,
    );
    assert_eq!(code, 400);
}

#[test]
fn request_ids_make_mutations_idempotent() {
    let s = start();
    let (code, a) = call(
        "POST",
        &format!("{}/sessions", s.base),
        Some(case_body()),
        Some("create-1"),
    );
    assert_eq!(code, 201);
    let (code, b) = call(
        "POST",
        &format!("{}/sessions", s.base),
        Some(case_body()),
        Some("create-1"),
    );
    assert_eq!(code, 201);
    assert_eq!(a["session_id"], b["session_id"]);
    let id = a["session_id"].as_str().unwrap();

    let item = json!({"evidence_id": "memo", "kind": "other", "text": "An internal memo mentions monthly invoices."});
    let url = format!("{}/sessions/{id}/evidence", s.base);
    let (code, first) = call("POST", &url, Some(item.clone()), Some("add-memo"));
    assert_eq!(code, 202);
    let (code, second) = call("POST", &url, Some(item), Some("add-memo"));
    assert_eq!(code, 202);
    assert_eq!(first["job_id"], second["job_id"]);
    wait_job(&s, first["job_id"].as_str().unwrap());
    let (_, v) = call("GET", &format!("{}/sessions/{id}", s.base), None, None);
    assert_eq!(v["case"]["evidence"].as_array().unwrap().len(), 3);
    assert_eq!(v["revision"], 1);
}

#[test]
fn not_found_and_bad_requests() {
    let s = start();
    let (code, _) = call("GET", &format!("{}/capsules/{}", s.base, "ab".repeat(32)), None, None);
    assert_eq!(code, 404);
    let (code, _) = call("GET", &format!("{}/capsules/not-an-id", s.base), None, None);
    assert_eq!(code, 404);
    let (code, _) = call("GET", &format!("{}/sessions/nope", s.base), None, None);
    assert_eq!(code, 404);
    let (code, _) = call("GET", &format!("{}/jobs/nope", s.base), None, None);
    assert_eq!(code, 404);
    let (code, _) = call(
        "POST",
        &format!("{}/sessions", s.base),
        Some(json!({"case": {"clause": ""}})),
        None,
    );
    assert_eq!(code, 400);
    let id = new_session(&s);
    let (code, _) = call("DELETE", &format!("{}/sessions/{id}/evidence/none", s.base), None, None);
    assert_eq!(code, 404);
    let (code, _) = call(
        "POST",
        &format!("{}/sessions/{id}/ladder", s.base),
        Some(json!({"proposition": "nope"})),
        None,
    );
    assert_eq!(code, 404);
    let dup = json!({"evidence_id": "phone-call", "kind": "other", "text": "again"});
    let (code, _) = call("POST", &format!("{}/sessions/{id}/evidence", s.base), Some(dup), None);
    assert_eq!(code, 422);
}
