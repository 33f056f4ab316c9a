use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use hevo_evo::gateway::{
    complete_many, read_transcript, ChatBackend, ChatRequest, LiveBackend, LiveConfig,
    RecordBackend, ReplayBackend, ScriptedBackend,
};
use hevo_evo::prompts::Message;
use hevo_evo::EvoError;

fn req(text: &str, tag: &str) -> ChatRequest {
    ChatRequest {
        messages: vec![Message::system("sys"), Message::user(text)],
        temperature: 1.0,
        model: "m".into(),
        tag: tag.into(),
    }
}

struct Seen {
    auth: Option<String>,
    body: String,
}

/// Serves one canned (status, body) per connection, in order, then repeats
/// the last one.
fn mock_server(replies: Vec<(u16, String)>) -> (String, Arc<AtomicUsize>, Arc<Mutex<Vec<Seen>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1", listener.local_addr().unwrap());
    let hits = Arc::new(AtomicUsize::new(0));
    let seen = Arc::new(Mutex::new(Vec::new()));
    let (h, s) = (hits.clone(), seen.clone());
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(stream) = stream else { break };
            let k = h.fetch_add(1, Ordering::SeqCst);
            let (status, body) = replies[k.min(replies.len() - 1)].clone();
            serve(stream, status, &body, &s);
        }
    });
    (url, hits, seen)
}

fn serve(mut stream: TcpStream, status: u16, body: &str, seen: &Mutex<Vec<Seen>>) {
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut len = 0;
    let mut auth = None;
    loop {
        let mut line = String::new();
        reader.read_line(&mut line).unwrap();
        let l = line.trim_end();
        if l.is_empty() {
            break;
        }
        let lower = l.to_ascii_lowercase();
        if let Some(v) = lower.strip_prefix("content-length:") {
            len = v.trim().parse().unwrap();
        }
        if lower.starts_with("authorization:") {
            auth = Some(l["authorization:".len()..].trim().to_string());
        }
    }
    let mut buf = vec![0; len];
    reader.read_exact(&mut buf).unwrap();
    seen.lock().unwrap().push(Seen {
        auth,
        body: String::from_utf8(buf).unwrap(),
    });
    let resp = format!(
        "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    );
    stream.write_all(resp.as_bytes()).unwrap();
}

fn ok_body(text: &str) -> String {
    serde_json::json!({"choices": [{"message": {"role": "assistant", "content": text}}]})
        .to_string()
}

fn live(url: &str) -> LiveBackend {
    LiveBackend::with_key(
        LiveConfig {
            base_url: url.into(),
            max_retries: 3,
            backoff_ms: 5,
            timeout_s: 10.0,
            ..LiveConfig::default()
        },
        Some("secret".into()),
    )
}

#[test]
fn live_backend_sends_wire_format_and_reads_content() {
    let (url, hits, seen) = mock_server(vec![(200, ok_body("hello"))]);
    let out = live(&url).complete(&req("hi", "t")).unwrap();
    assert_eq!(out, "hello");
    assert_eq!(hits.load(Ordering::SeqCst), 1);
    let seen = seen.lock().unwrap();
    assert_eq!(seen[0].auth.as_deref(), Some("Bearer secret"));
    let body: serde_json::Value = serde_json::from_str(&seen[0].body).unwrap();
    assert_eq!(body["model"], "m");
    assert_eq!(body["temperature"], 1.0);
    assert_eq!(body["messages"][1]["role"], "user");
    assert_eq!(body["messages"][1]["content"], "hi");
}

#[test]
fn transient_failures_are_retried() {
    let (url, hits, _) = mock_server(vec![
        (500, "{}".into()),
        (429, "{}".into()),
        (200, ok_body("done")),
    ]);
    assert_eq!(live(&url).complete(&req("x", "t")).unwrap(), "done");
    assert_eq!(hits.load(Ordering::SeqCst), 3);
}

#[test]
fn client_errors_are_not_retried() {
    let (url, hits, _) = mock_server(vec![(400, "{\"error\":\"bad\"}".into())]);
    let err = live(&url).complete(&req("x", "t")).unwrap_err();
    assert!(
        matches!(err, EvoError::Backend(ref m) if m.contains("400")),
        "{err}"
    );
    assert_eq!(hits.load(Ordering::SeqCst), 1);
}

#[test]
fn persistent_server_errors_exhaust_retries() {
    let (url, hits, _) = mock_server(vec![(503, "{}".into())]);
    let err = live(&url).complete(&req("x", "t")).unwrap_err();
    assert_eq!(hits.load(Ordering::SeqCst), 4);
    assert!(matches!(
        err,
        EvoError::BackendUnreachable { attempts: 4, .. }
    ));
}

#[test]
fn unreachable_host_is_reported_after_retries() {
    let port = TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .port();
    let err = live(&format!("http://127.0.0.1:{port}/v1"))
        .complete(&req("x", "t"))
        .unwrap_err();
    assert!(
        matches!(err, EvoError::BackendUnreachable { attempts: 4, .. }),
        "{err}"
    );
}

#[test]
fn malformed_response_is_fatal() {
    let (url, hits, _) = mock_server(vec![(200, "{\"choices\": []}".into())]);
    assert!(matches!(
        live(&url).complete(&req("x", "t")),
        Err(EvoError::Backend(_))
    ));
    assert_eq!(hits.load(Ordering::SeqCst), 1);
}

#[test]
fn in_flight_requests_are_capped() {
    let b = ScriptedBackend::new(|r| Ok(r.user_text().to_uppercase()))
        .with_delay(Duration::from_millis(40));
    let reqs: Vec<_> = (0..16)
        .map(|i| req(&format!("q{i}"), &format!("{i:02}")))
        .collect();
    let out = complete_many(&b, &reqs, 4);
    assert_eq!(b.peak_in_flight(), 4);
    assert_eq!(b.calls(), 16);
    for (i, r) in out.into_iter().enumerate() {
        assert_eq!(r.unwrap(), format!("Q{i}"));
    }
}

#[test]
fn empty_batch_makes_no_calls() {
    let b = ScriptedBackend::new(|_| Ok(String::new()));
    assert!(complete_many(&b, &[], 4).is_empty());
    assert_eq!(b.calls(), 0);
}

#[test]
fn replay_reproduces_a_recording_and_reports_misses() {
    let rec =
        RecordBackend::in_memory(ScriptedBackend::new(|r| Ok(format!("<{}>", r.user_text()))));
    let reqs: Vec<_> = (0..10)
        .map(|i| req(&format!("q{i}"), &format!("a.{i:03}")))
        .collect();
    let first: Vec<String> = complete_many(&rec, &reqs, 3)
        .into_iter()
        .map(Result::unwrap)
        .collect();
    let replay = ReplayBackend::new(rec.entries());
    let mut again = reqs.clone();
    again[6].messages[1].content = "changed".into();
    let out = complete_many(&replay, &again, 3);
    for (i, r) in out.into_iter().enumerate() {
        if i == 6 {
            assert!(matches!(r, Err(EvoError::ReplayMiss { ref tag, .. }) if tag == "a.006"));
        } else {
            assert_eq!(r.unwrap(), first[i]);
        }
    }
    assert_eq!(replay.remaining(), 1);
}

#[test]
fn duplicate_prompts_replay_by_tag() {
    let n = AtomicUsize::new(0);
    let rec = RecordBackend::in_memory(ScriptedBackend::new(move |_| {
        Ok(format!("r{}", n.fetch_add(1, Ordering::SeqCst)))
    }));
    let a = rec.complete(&req("same", "x.1")).unwrap();
    let b = rec.complete(&req("same", "x.2")).unwrap();
    let replay = ReplayBackend::new(rec.entries());
    assert_eq!(replay.complete(&req("same", "x.2")).unwrap(), b);
    assert_eq!(replay.complete(&req("same", "x.1")).unwrap(), a);
    assert!(replay.complete(&req("same", "x.3")).is_err());
}

#[test]
fn transcript_file_round_trip_is_sorted_by_tag() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("transcript.jsonl");
    let rec = RecordBackend::to_file(ScriptedBackend::new(|r| Ok(r.tag.clone())), &path).unwrap();
    for t in ["c", "a", "b"] {
        rec.complete(&req(t, t)).unwrap();
    }
    rec.finish().unwrap();
    let entries = read_transcript(&path).unwrap();
    let tags: Vec<_> = entries.iter().map(|e| e.tag.as_str()).collect();
    assert_eq!(tags, ["a", "b", "c"]);
    assert_eq!(entries[0].digest, req("a", "zzz").digest());
    let replay = ReplayBackend::from_file(&path).unwrap();
    assert_eq!(replay.complete(&req("b", "b")).unwrap(), "b");
}
