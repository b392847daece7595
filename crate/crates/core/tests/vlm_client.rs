mod common;

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use vista_core::vlm::*;

use common::fake_pairs;

/// Minimal HTTP/1.1 server answering with a scripted (status, body) sequence;
/// the last entry repeats.
struct MockServer {
    url: String,
    requests: Arc<Mutex<Vec<(String, String)>>>,
}

impl MockServer {
    fn start(script: Vec<(u16, String)>) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/v1/generate", listener.local_addr().unwrap());
        let requests = Arc::new(Mutex::new(Vec::new()));
        let seen = requests.clone();
        std::thread::spawn(move || {
            for (n, stream) in listener.incoming().enumerate() {
                let Ok(mut stream) = stream else { break };
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut len = 0usize;
                let mut auth = String::new();
                loop {
                    let mut line = String::new();
                    if reader.read_line(&mut line).unwrap_or(0) == 0 {
                        break;
                    }
                    let l = line.trim_end().to_string();
                    if l.is_empty() {
                        break;
                    }
                    let lower = l.to_ascii_lowercase();
                    if let Some(v) = lower.strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap();
                    }
                    if lower.starts_with("authorization:") {
                        auth = l["authorization:".len()..].trim().to_string();
                    }
                }
                let mut body = vec![0; len];
                reader.read_exact(&mut body).unwrap();
                seen.lock().unwrap().push((auth, String::from_utf8(body).unwrap()));
                let (status, resp) = &script[n.min(script.len() - 1)];
                let reply = format!(
                    "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{resp}",
                    resp.len()
                );
                let _ = stream.write_all(reply.as_bytes());
            }
        });
        Self { url, requests }
    }

    fn count(&self) -> usize {
        self.requests.lock().unwrap().len()
    }
}

fn text_body(text: &str) -> String {
    serde_json::json!({ "text": text }).to_string()
}

struct Fixture {
    _tmp: tempfile::TempDir,
    root: std::path::PathBuf,
    pair: vista_core::keyframe::ScoredFramePair,
    sleeps: Arc<Mutex<Vec<Duration>>>,
}

fn fixture() -> Fixture {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path().join("assets");
    let pair = fake_pairs(&root, &[("v1", 1)]).remove(0);
    Fixture { _tmp: tmp, root, pair, sleeps: Arc::new(Mutex::new(Vec::new())) }
}

fn client(f: &Fixture, server: &MockServer) -> VlmClient {
    let t = HttpTransport::new(&server.url, "secret", "mock-model", Duration::from_secs(10)).unwrap();
    let sleeps = f.sleeps.clone();
    VlmClient::new(Arc::new(t), &f.root).with_sleeper(Arc::new(move |d| sleeps.lock().unwrap().push(d)))
}

#[test]
fn caption_prompt_contents() {
    let f = fixture();
    let p = build_caption_prompt(&f.pair, &f.root).unwrap();
    for n in 1..=4 {
        assert!(p.text.contains(&format!("Sentence {n}:")));
    }
    assert!(p.text.contains("exactly four sentences"));
    assert!(!p.text.contains('{'));
    assert_eq!(p.images.len(), 4);
    assert_eq!(p, build_caption_prompt(&f.pair, &f.root).unwrap());
    let z = build_zero_shot_prompt(&f.pair, &f.root).unwrap();
    assert_eq!(z.images.len(), 1);
    std::fs::remove_file(f.root.join(&f.pair.gaze_t1.path)).unwrap();
    assert!(matches!(build_caption_prompt(&f.pair, &f.root), Err(VlmError::AssetNotFound { .. })));
}

#[test]
fn unbound_placeholder_is_rejected() {
    let t = PromptTemplate { name: "x".into(), instruction_text: "a {missing} b".into(), kind: TemplateKind::CaptionDraft };
    assert!(matches!(t.bind(&[]), Err(VlmError::UnboundPlaceholder(_))));
    assert_eq!(t.bind(&[("missing", "1")]).unwrap(), "a 1 b");
}

#[test]
fn happy_path_single_attempt() {
    let f = fixture();
    let server = MockServer::start(vec![(200, text_body("Four sentences."))]);
    let c = client(&f, &server);
    let r = c.request_draft(&build_caption_prompt(&f.pair, &f.root).unwrap()).unwrap();
    assert_eq!(r.attempt, 1);
    assert_eq!(r.raw_text, "Four sentences.");
    assert_eq!(r.model_id, "mock-model");
    let (auth, body) = server.requests.lock().unwrap()[0].clone();
    assert_eq!(auth, "Bearer secret");
    let v: serde_json::Value = serde_json::from_str(&body).unwrap();
    assert_eq!(v["model"], "mock-model");
    assert_eq!(v["images"].as_array().unwrap().len(), 4);
    assert!(v["instruction"].as_str().unwrap().contains("Sentence 3"));
}

#[test]
fn retries_twice_then_succeeds() {
    let f = fixture();
    let server = MockServer::start(vec![(500, "{}".into()), (503, "{}".into()), (200, text_body("ok"))]);
    let r = client(&f, &server).request_draft(&build_caption_prompt(&f.pair, &f.root).unwrap()).unwrap();
    assert_eq!(r.attempt, 3);
    assert_eq!(*f.sleeps.lock().unwrap(), vec![Duration::from_secs(1), Duration::from_secs(2)]);
}

#[test]
fn always_500_exhausts_after_five() {
    let f = fixture();
    let server = MockServer::start(vec![(500, "{}".into())]);
    let err = client(&f, &server).request_draft(&build_caption_prompt(&f.pair, &f.root).unwrap()).unwrap_err();
    assert!(matches!(err, VlmError::Transport { attempts: 5, .. }));
    assert_eq!(server.count(), 5);
    let secs: Vec<u64> = f.sleeps.lock().unwrap().iter().map(|d| d.as_secs()).collect();
    assert_eq!(secs, vec![1, 2, 4, 8]);
}

#[test]
fn client_errors_are_not_retried() {
    let f = fixture();
    let server = MockServer::start(vec![(400, "{}".into())]);
    let err = client(&f, &server).request_draft(&build_caption_prompt(&f.pair, &f.root).unwrap()).unwrap_err();
    assert!(matches!(err, VlmError::Transport { attempts: 1, .. }));
}

#[test]
fn malformed_body_keeps_raw_text() {
    let f = fixture();
    let server = MockServer::start(vec![(200, "not json".into())]);
    match client(&f, &server).request_draft(&build_caption_prompt(&f.pair, &f.root).unwrap()) {
        Err(VlmError::MalformedResponse { raw_body, .. }) => assert_eq!(raw_body, "not json"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn audit_log_and_no_duplicate_success() {
    let f = fixture();
    let server = MockServer::start(vec![(500, "{}".into()), (200, text_body("first")), (200, text_body("second"))]);
    let log = f.root.join("audit.jsonl");
    let c = client(&f, &server).with_audit(AuditLog::open(&log).unwrap()).unwrap();
    let p = build_caption_prompt(&f.pair, &f.root).unwrap();
    assert_eq!(c.request_draft(&p).unwrap().raw_text, "first");
    assert_eq!(c.request_draft(&p).unwrap().raw_text, "first");
    assert_eq!(server.count(), 2);
    let audit = AuditLog::open(&log).unwrap();
    let entries = audit.entries().unwrap();
    let kinds: Vec<&str> = entries
        .iter()
        .map(|e| match e {
            AuditEntry::Request { .. } => "req",
            AuditEntry::Response { .. } => "resp",
            AuditEntry::Accepted { .. } => "acc",
        })
        .collect();
    assert_eq!(kinds, ["req", "resp", "req", "resp", "acc"]);
    // a fresh client primed from the log does not call again
    let c2 = client(&f, &server).with_audit(audit).unwrap();
    assert_eq!(c2.request_draft(&p).unwrap().raw_text, "first");
    assert_eq!(server.count(), 2);
}

#[test]
fn probe_arity_and_alignment() {
    let f = fixture();
    let qs = default_probe_questions().to_vec();
    let five = "1. a car\n2. a red light\n3. a cyclist\n4. rain\n5. the crosswalk";
    let server = MockServer::start(vec![(200, text_body(five))]);
    let c = client(&f, &server);
    let set = c.request_probe_answers(&f.pair, &qs).unwrap();
    assert_eq!(set.answers, ["a car", "a red light", "a cyclist", "rain", "the crosswalk"]);
    assert_eq!(set.questions, qs);
    assert!(matches!(c.request_probe_answers(&f.pair, &qs[..4]), Err(VlmError::InvalidProbeSet(4))));

    let f2 = fixture();
    let six = format!("{five}\n6. extra");
    let server = MockServer::start(vec![(200, text_body(&six))]);
    assert!(matches!(client(&f2, &server).request_probe_answers(&f2.pair, &qs), Err(VlmError::MalformedResponse { .. })));
}

#[test]
fn replay_transport_reads_canned_files() {
    let f = fixture();
    let dir = f.root.join("replay");
    let t = ReplayTransport::new(&dir);
    std::fs::create_dir_all(t.path_for("v1:0", "caption_draft").parent().unwrap()).unwrap();
    std::fs::write(t.path_for("v1:0", "caption_draft"), "Canned text.\n").unwrap();
    let c = VlmClient::new(Arc::new(t), &f.root);
    let r = c.request_draft(&build_caption_prompt(&f.pair, &f.root).unwrap()).unwrap();
    assert_eq!(r.raw_text, "Canned text.");
    assert_eq!(r.attempt, 1);
    let z = build_zero_shot_prompt(&f.pair, &f.root).unwrap();
    assert!(matches!(c.request_draft(&z), Err(VlmError::Transport { attempts: 1, .. })));
}

#[test]
fn missing_key_fails_before_network() {
    // single test touching these variables
    std::env::set_var(ENV_URL, "http://127.0.0.1:9/unused");
    std::env::remove_var(ENV_KEY);
    assert!(matches!(HttpTransport::from_env(), Err(VlmError::Config(m)) if m.contains(ENV_KEY)));
}

#[test]
fn concurrent_requests_keep_order() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path().join("assets");
    let pairs = fake_pairs(&root, &[("a", 3), ("b", 3)]);
    let dir = root.join("replay");
    let t = ReplayTransport::new(&dir);
    for p in &pairs {
        let path = t.path_for(&p.sample_id(), "caption_draft");
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(path, p.sample_id()).unwrap();
    }
    let c = VlmClient::new(Arc::new(t), &root).with_max_in_flight(4).with_rate_limit(Duration::from_millis(1));
    let prompts: Vec<_> = pairs.iter().map(|p| build_caption_prompt(p, &root).unwrap()).collect();
    let out = c.request_drafts(&prompts);
    for (p, r) in pairs.iter().zip(out) {
        assert_eq!(r.unwrap().raw_text, p.sample_id());
    }
}
