//! The live HTTP backend against a local test double.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;

use verba_core::backends::{
    fan_out, Backend, BackendError, CompletionRequest, FanOutPolicy, HttpBackend, ProviderEndpoint,
};
use verba_core::model::{CleanText, Modality, ModelSpec, SamplerSettings};

#[derive(Debug, Clone)]
struct Seen {
    path: String,
    headers: Vec<(String, String)>,
    body: String,
}

impl Seen {
    fn header(&self, name: &str) -> Option<&str> {
        self.headers.iter().find(|(k, _)| k == name).map(|(_, v)| v.as_str())
    }
}

/// Serves canned `(status, body)` replies in order, one per connection.
fn serve(replies: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<Seen>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = Arc::clone(&seen);
    thread::spawn(move || {
        for (status, body) in replies {
            let (mut stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut line = String::new();
            reader.read_line(&mut line).unwrap();
            let path = line.split_whitespace().nth(1).unwrap_or("").to_string();
            let mut headers = Vec::new();
            loop {
                let mut h = String::new();
                reader.read_line(&mut h).unwrap();
                let h = h.trim_end();
                if h.is_empty() {
                    break;
                }
                let (k, v) = h.split_once(':').unwrap();
                headers.push((k.trim().to_ascii_lowercase(), v.trim().to_string()));
            }
            let len: usize = headers
                .iter()
                .find(|(k, _)| k == "content-length")
                .map_or(0, |(_, v)| v.parse().unwrap());
            let mut buf = vec![0; len];
            reader.read_exact(&mut buf).unwrap();
            log.lock().unwrap().push(Seen {
                path,
                headers,
                body: String::from_utf8(buf).unwrap(),
            });
            let resp = format!(
                "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                body.len()
            );
            stream.write_all(resp.as_bytes()).unwrap();
        }
    });
    (format!("http://{addr}/v1"), seen)
}

fn backend(provider: &str, base: &str, key: Option<&str>) -> HttpBackend {
    HttpBackend::new().with_endpoint(
        provider,
        ProviderEndpoint {
            base_url: base.to_string(),
            api_key: key.map(str::to_string),
        },
    )
}

fn chat_request(provider: &str) -> CompletionRequest {
    CompletionRequest::new(
        ModelSpec::new(provider, "gpt-test", Modality::Chat),
        SamplerSettings {
            seed: Some(1),
            ..Default::default()
        },
        CleanText::from_str_lossless("Is the duty to pay monthly?"),
    )
}

#[test]
fn chat_completion_round_trip() {
    let reply = r#"{"choices":[{"message":{"role":"assistant","content":"Likely (80%)"}}]}"#;
    let (base, seen) = serve(vec![(200, reply.into())]);
    let r = backend("openai", &base, Some("test-key"))
        .complete(&chat_request("openai"))
        .unwrap();
    assert_eq!(r.text, "Likely (80%)");
    let wire = r.wire.unwrap();
    assert_eq!(wire.response_body, reply);
    let seen = seen.lock().unwrap()[0].clone();
    assert_eq!(seen.path, "/v1/chat/completions");
    assert_eq!(seen.header("authorization"), Some("Bearer test-key"));
    assert_eq!(seen.body, wire.request_body);
    let body: serde_json::Value = serde_json::from_str(&seen.body).unwrap();
    assert_eq!(body["temperature"], 0.7);
    assert_eq!(body["max_tokens"], 256);
    assert_eq!(body["messages"][0]["content"], "Is the duty to pay monthly?");
    assert!(!wire.request_body.contains("test-key"));
}

#[test]
fn transient_failure_is_retried() {
    let ok = r#"{"choices":[{"message":{"content":"(55%)"}}]}"#;
    let (base, seen) = serve(vec![(503, "{}".into()), (200, ok.into())]);
    let b = backend("openai", &base, None);
    let items = fan_out(&b, &[chat_request("openai")], &FanOutPolicy::immediate(1));
    let r = items[0].result.as_ref().unwrap();
    assert_eq!(r.text, "(55%)");
    assert_eq!(r.attempt_count, 2);
    assert_eq!(seen.lock().unwrap().len(), 2);
}

#[test]
fn client_error_is_not_retried() {
    let (base, _) = serve(vec![(400, r#"{"error":"bad"}"#.into())]);
    let items = fan_out(
        &backend("openai", &base, None),
        &[chat_request("openai")],
        &FanOutPolicy::immediate(1),
    );
    let err = items[0].result.as_ref().unwrap_err();
    assert_eq!(err.attempts, 1);
    assert!(matches!(err.error, BackendError::ProviderRejected { status: 400, .. }));
}

#[test]
fn completion_logprobs_from_the_wire() {
    let reply = r#"{"choices":[{"text":"The second","logprobs":{"tokens":["The"," second"],
        "top_logprobs":[{"The":-0.01},{" first":-4.99," second":-0.0543}]}}]}"#;
    let (base, seen) = serve(vec![(200, reply.into())]);
    let req = CompletionRequest::new(
        ModelSpec::new("openai", "davinci-test", Modality::CompletionWithLogprobs),
        SamplerSettings {
            temperature: 1.0,
            ..Default::default()
        },
        CleanText::from_str_lossless("Which filing?"),
    )
    .with_logprobs(5);
    let r = backend("openai", &base, None).complete(&req).unwrap();
    let lp = r.token_logprobs.unwrap();
    assert_eq!(lp[1].alternatives[0].token, " second");
    assert!((lp[1].alternatives[0].probability - (-0.0543f64).exp()).abs() < 1e-15);
    let seen = seen.lock().unwrap()[0].clone();
    assert_eq!(seen.path, "/v1/completions");
    let body: serde_json::Value = serde_json::from_str(&seen.body).unwrap();
    assert_eq!(body["logprobs"], 5);
    assert_eq!(body["best_of"], 1);
}

#[test]
fn anthropic_messages() {
    let reply = r#"{"content":[{"type":"text","text":"Unlikely (20%)"}]}"#;
    let (base, seen) = serve(vec![(200, reply.into())]);
    let mut req = chat_request("anthropic");
    req.model.model_id = "claude-test".into();
    let r = backend("anthropic", &base, Some("ak")).complete(&req).unwrap();
    assert_eq!(r.text, "Unlikely (20%)");
    let seen = seen.lock().unwrap()[0].clone();
    assert_eq!(seen.path, "/v1/messages");
    assert_eq!(seen.header("x-api-key"), Some("ak"));
    assert_eq!(seen.header("anthropic-version"), Some("2023-06-01"));
    let err = backend("anthropic", &base, None)
        .complete(&req.with_logprobs(3))
        .unwrap_err();
    assert!(matches!(err, BackendError::LogprobsUnsupported { .. }));
}

#[test]
fn embeddings_and_env_override() {
    let reply = r#"{"data":[{"embedding":[0.6,0.8,0.0]}]}"#;
    let (base, seen) = serve(vec![(200, reply.into())]);
    std::env::set_var("GI_BASE_URL_DOUBLE_EMBED", &base);
    let model = ModelSpec::new("double-embed", "embed-test", Modality::Embedding);
    let v = HttpBackend::new()
        .embed(&CleanText::from_str_lossless("flood caused by rainfall"), &model)
        .unwrap();
    assert_eq!(v.values, vec![0.6, 0.8, 0.0]);
    assert_eq!(v.dimension, 3);
    assert_eq!(seen.lock().unwrap()[0].path, "/v1/embeddings");
}

#[test]
fn missing_credentials_named() {
    let b = HttpBackend::new();
    let err = b.endpoint("no-such-provider-xyz").unwrap_err();
    assert_eq!(
        err,
        BackendError::MissingCredentials {
            env_var: "GI_BASE_URL_NO_SUCH_PROVIDER_XYZ".into()
        }
    );
}
