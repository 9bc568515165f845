//! The remote backend against a scripted local HTTP server.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use vector_core::clients::{
    CallStage, ClientError, FrameRef, ModelBackend, ModelRequest, RemoteConfig, RemoteHttpBackend, VisualPayload,
    CONDITION_ORIGINAL,
};
use vector_core::frames::FramePolicy;
use vector_core::rng::SeededRng;
use vector_core::synth::{GenSpec, Level, TaskInstance};
use vector_core::testkit::fixture_catalog;

struct Seen {
    headers: Vec<String>,
    body: serde_json::Value,
}

struct Reply {
    status: u16,
    extra: &'static str,
    body: String,
}

fn ok(text: &str) -> Reply {
    Reply {
        status: 200,
        extra: "",
        body: serde_json::json!({
            "choices": [{"message": {"role": "assistant", "content": text}}],
            "usage": {"prompt_tokens": 11, "completion_tokens": 3}
        })
        .to_string(),
    }
}

fn status(status: u16, extra: &'static str) -> Reply {
    Reply { status, extra, body: "{\"error\":\"scripted\"}".into() }
}

/// Serves `replies` in order, one per connection, and records each request.
fn serve(replies: Vec<Reply>) -> (String, Arc<Mutex<Vec<Seen>>>, JoinHandle<()>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = seen.clone();
    let handle = std::thread::spawn(move || {
        for reply in replies {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut headers = Vec::new();
            let mut len = 0usize;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let line = line.trim_end().to_owned();
                if line.is_empty() {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
                headers.push(line);
            }
            let mut body = vec![0; len];
            reader.read_exact(&mut body).unwrap();
            log.lock().unwrap().push(Seen { headers, body: serde_json::from_slice(&body).unwrap() });
            let mut stream = stream;
            write!(
                stream,
                "HTTP/1.1 {} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n{}\r\n{}",
                reply.status,
                reply.body.len(),
                reply.extra,
                reply.body
            )
            .unwrap();
            stream.flush().unwrap();
        }
    });
    (url, seen, handle)
}

fn instance() -> TaskInstance {
    GenSpec::Sequencing { level: Level::L1 }
        .generate(&fixture_catalog(), &mut SeededRng::new(0, "remote", 0))
        .unwrap()
}

fn media() -> VisualPayload {
    VisualPayload::Media { uri: "file:///videos/x.mp4".into(), boundaries: None }
}

fn call(backend: &RemoteHttpBackend, inst: &TaskInstance, payload: &VisualPayload) -> Result<String, ClientError> {
    backend
        .complete(&ModelRequest {
            instance: Some(inst),
            video: &inst.video,
            prompt: "order?",
            payload,
            stage: CallStage::Answer,
            condition: CONDITION_ORIGINAL,
        })
        .map(|c| c.text)
}

type Sleeps = Arc<Mutex<Vec<Duration>>>;

fn backend(url: &str, retries: u32) -> (RemoteHttpBackend, Sleeps) {
    let mut cfg = RemoteConfig::new(url, "test-model");
    cfg.max_retries = retries;
    cfg.timeout_s = 10;
    let sleeps: Sleeps = Arc::default();
    let s = sleeps.clone();
    let b = RemoteHttpBackend::new("test-model", cfg).unwrap().with_sleeper(move |d| s.lock().unwrap().push(d));
    (b, sleeps)
}

#[test]
fn rate_limit_then_success_honours_retry_after() {
    let (url, seen, h) = serve(vec![status(429, "Retry-After: 2\r\n"), status(503, ""), ok("a, b, c, d")]);
    let (b, sleeps) = backend(&url, 5);
    let inst = instance();
    assert_eq!(call(&b, &inst, &media()).unwrap(), "a, b, c, d");
    h.join().unwrap();
    // Retry-After first, then the exponential schedule for the 503.
    assert_eq!(*sleeps.lock().unwrap(), vec![Duration::from_secs(2), Duration::from_millis(1000)]);

    let seen = seen.lock().unwrap();
    assert_eq!(seen.len(), 3);
    let body = &seen[0].body;
    assert_eq!(body["model"], "test-model");
    assert_eq!(body["temperature"], 0.0);
    assert_eq!(body["messages"][0]["content"][0]["text"], "order?");
    assert_eq!(body["messages"][0]["content"][1]["video_url"]["url"], "file:///videos/x.mp4");
}

#[test]
fn auth_and_payload_errors_are_not_retried() {
    let (url, seen, h) = serve(vec![status(401, ""), status(413, "")]);
    let (b, sleeps) = backend(&url, 5);
    let inst = instance();
    assert!(matches!(call(&b, &inst, &media()), Err(ClientError::Auth { status: 401 })));
    assert!(matches!(call(&b, &inst, &media()), Err(ClientError::PayloadTooLarge { .. })));
    h.join().unwrap();
    assert_eq!(seen.lock().unwrap().len(), 2);
    assert!(sleeps.lock().unwrap().is_empty());
}

#[test]
fn server_errors_exhaust_the_retry_budget() {
    let (url, seen, h) = serve(vec![status(500, ""), status(502, ""), status(500, "")]);
    let (b, sleeps) = backend(&url, 2);
    let err = call(&b, &instance(), &media()).unwrap_err();
    h.join().unwrap();
    assert!(matches!(err, ClientError::Http { status: 500, .. }), "{err}");
    assert_eq!(seen.lock().unwrap().len(), 3);
    assert_eq!(*sleeps.lock().unwrap(), vec![Duration::from_millis(500), Duration::from_millis(1000)]);
}

#[test]
fn persistent_rate_limiting_reports_attempts() {
    let (url, _, h) = serve(vec![status(429, ""), status(429, "")]);
    let (b, _) = backend(&url, 1);
    let err = call(&b, &instance(), &media()).unwrap_err();
    h.join().unwrap();
    assert!(matches!(err, ClientError::RateLimited { attempts: 2 }), "{err}");
}

#[test]
fn transport_failure_is_retried_then_reported() {
    // Bind then drop so nothing listens on the port.
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let (b, sleeps) = backend(&format!("http://127.0.0.1:{port}/v1/chat/completions"), 1);
    let err = call(&b, &instance(), &media()).unwrap_err();
    assert!(matches!(err, ClientError::Transport { attempts: 2, .. }), "{err}");
    assert_eq!(sleeps.lock().unwrap().len(), 1);
}

#[test]
fn frames_go_out_as_inline_images_with_bearer_key() {
    let dir = tempfile::tempdir().unwrap();
    let inst = instance();
    let VisualPayload::Frames { policy, mut frames, .. } = VisualPayload::frames_for(&inst.video, FramePolicy::new(3, Default::default())).unwrap()
    else {
        unreachable!()
    };
    for (i, f) in frames.iter_mut().enumerate() {
        let p = dir.path().join(format!("f{i}.png"));
        std::fs::write(&p, [i as u8; 4]).unwrap();
        f.image = Some(p);
    }
    let payload = VisualPayload::Frames { policy, frames: frames.clone(), shuffled: false };

    std::env::set_var("VECTOR_REMOTE_TEST_KEY", "sekret");
    let (url, seen, h) = serve(vec![ok("done")]);
    let mut cfg = RemoteConfig::new(&url, "m");
    cfg.api_key_env = Some("VECTOR_REMOTE_TEST_KEY".into());
    cfg.max_tokens = Some(64);
    let b = RemoteHttpBackend::new("m", cfg).unwrap();
    assert_eq!(call(&b, &inst, &payload).unwrap(), "done");
    h.join().unwrap();

    let seen = seen.lock().unwrap();
    assert!(seen[0].headers.iter().any(|h| h.eq_ignore_ascii_case("authorization: Bearer sekret")));
    let content = seen[0].body["messages"][0]["content"].as_array().unwrap();
    assert_eq!(content.len(), 4);
    assert_eq!(content[1]["image_url"]["url"], "data:image/png;base64,AAAAAA==");
    assert_eq!(content[3]["image_url"]["url"], "data:image/png;base64,AgICAg==");
    assert_eq!(seen[0].body["max_tokens"], 64);

    // Frames without extracted images cannot be sent.
    let bare: Vec<FrameRef> = frames.into_iter().map(|f| FrameRef { image: None, ..f }).collect();
    let bare = VisualPayload::Frames { policy, frames: bare, shuffled: false };
    assert!(matches!(call(&b, &inst, &bare), Err(ClientError::Config(_))));
}

#[test]
fn oversized_payload_is_rejected_before_sending() {
    let mut cfg = RemoteConfig::new("http://127.0.0.1:9/never", "m");
    cfg.max_payload_bytes = Some(10);
    let b = RemoteHttpBackend::new("m", cfg).unwrap();
    assert!(matches!(call(&b, &instance(), &media()), Err(ClientError::PayloadTooLarge { .. })));
}
