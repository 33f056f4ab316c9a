//! Chat-completion backends: live HTTP, record (live plus transcript) and
//! replay (transcript only).
//!
//! Transcripts are JSON lines, one [`TranscriptEntry`] per call. Replay looks
//! requests up by digest (sha256 over model, temperature and messages); when a
//! digest occurs more than once the entry with the same tag wins, otherwise
//! the earliest unused one.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{EvoError, Result};
use crate::prompts::{Message, Role};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub messages: Vec<Message>,
    pub temperature: f64,
    pub model: String,
    /// Engine phase, generation and index; not part of the digest.
    pub tag: String,
}

impl ChatRequest {
    pub fn digest(&self) -> String {
        #[derive(Serialize)]
        struct Keyed<'a> {
            model: &'a str,
            temperature: f64,
            messages: &'a [Message],
        }
        let body = serde_json::to_vec(&Keyed {
            model: &self.model,
            temperature: self.temperature,
            messages: &self.messages,
        })
        .expect("request serializes");
        hex::encode(Sha256::digest(body))
    }

    /// Content of the last user message.
    pub fn user_text(&self) -> &str {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == Role::User)
            .map_or("", |m| m.content.as_str())
    }
}

pub trait ChatBackend: Send + Sync {
    /// Response text and latency in milliseconds.
    fn complete_timed(&self, request: &ChatRequest) -> Result<(String, u64)>;

    fn complete(&self, request: &ChatRequest) -> Result<String> {
        self.complete_timed(request).map(|(text, _)| text)
    }
}

impl<B: ChatBackend + ?Sized> ChatBackend for Arc<B> {
    fn complete_timed(&self, request: &ChatRequest) -> Result<(String, u64)> {
        (**self).complete_timed(request)
    }
}

/// Runs `requests` with at most `max_in_flight` concurrent calls. Results
/// come back in request order; one failure does not affect the others.
pub fn complete_many(
    backend: &dyn ChatBackend,
    requests: &[ChatRequest],
    max_in_flight: usize,
) -> Vec<Result<String>> {
    if requests.is_empty() {
        return Vec::new();
    }
    let workers = max_in_flight.max(1).min(requests.len());
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Result<String>>>> =
        requests.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= requests.len() {
                    break;
                }
                let r = backend.complete(&requests[i]);
                *slots[i].lock().expect("slot") = Some(r);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| m.into_inner().expect("slot").expect("every request ran"))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub digest: String,
    pub tag: String,
    pub model: String,
    pub temperature: f64,
    pub messages: Vec<Message>,
    pub response: String,
    pub latency_ms: u64,
}

impl TranscriptEntry {
    pub fn new(request: &ChatRequest, response: String, latency_ms: u64) -> Self {
        TranscriptEntry {
            digest: request.digest(),
            tag: request.tag.clone(),
            model: request.model.clone(),
            temperature: request.temperature,
            messages: request.messages.clone(),
            response,
            latency_ms,
        }
    }
}

pub fn read_transcript(path: &Path) -> Result<Vec<TranscriptEntry>> {
    let file =
        File::open(path).map_err(|e| EvoError::Transcript(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (k, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: TranscriptEntry = serde_json::from_str(&line)
            .map_err(|e| EvoError::Transcript(format!("{} line {}: {e}", path.display(), k + 1)))?;
        out.push(entry);
    }
    Ok(out)
}

pub fn transcript_to_jsonl(entries: &[TranscriptEntry]) -> String {
    let mut s = String::new();
    for e in entries {
        s.push_str(&serde_json::to_string(e).expect("entry serializes"));
        s.push('\n');
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiveConfig {
    pub base_url: String,
    pub model: String,
    /// Name of the environment variable holding the bearer token.
    pub api_key_env: String,
    pub timeout_s: f64,
    pub max_retries: u32,
    pub backoff_ms: u64,
    pub max_in_flight: usize,
}

impl Default for LiveConfig {
    fn default() -> Self {
        LiveConfig {
            base_url: "https://api.openai.com/v1".into(),
            model: "gpt-3.5-turbo".into(),
            api_key_env: "HEVO_API_KEY".into(),
            timeout_s: 120.0,
            max_retries: 3,
            backoff_ms: 1000,
            max_in_flight: 8,
        }
    }
}

/// Chat-completions over HTTP with exponential backoff on transient failures
/// (transport errors, 429 and 5xx).
pub struct LiveBackend {
    config: LiveConfig,
    api_key: Option<String>,
    agent: ureq::Agent,
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    messages: &'a [Message],
    temperature: f64,
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireMessage,
}

#[derive(Deserialize)]
struct WireMessage {
    content: Option<String>,
}

enum Attempt {
    Transient(String),
    Fatal(String),
}

impl LiveBackend {
    pub fn new(config: LiveConfig) -> Self {
        let api_key = std::env::var(&config.api_key_env)
            .ok()
            .filter(|k| !k.is_empty());
        Self::with_key(config, api_key)
    }

    pub fn with_key(config: LiveConfig, api_key: Option<String>) -> Self {
        let agent_config = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(config.timeout_s.max(0.001))))
            .http_status_as_error(false)
            .build();
        LiveBackend {
            agent: ureq::Agent::new_with_config(agent_config),
            config,
            api_key,
        }
    }

    pub fn config(&self) -> &LiveConfig {
        &self.config
    }

    fn attempt(&self, request: &ChatRequest) -> std::result::Result<String, Attempt> {
        let url = format!(
            "{}/chat/completions",
            self.config.base_url.trim_end_matches('/')
        );
        let mut call = self
            .agent
            .post(&url)
            .header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            call = call.header("Authorization", &format!("Bearer {key}"));
        }
        let body = WireRequest {
            model: &request.model,
            messages: &request.messages,
            temperature: request.temperature,
        };
        let mut resp = call
            .send_json(&body)
            .map_err(|e| Attempt::Transient(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| Attempt::Transient(e.to_string()))?;
        if status == 429 || status >= 500 {
            return Err(Attempt::Transient(format!(
                "HTTP {status}: {}",
                clip(&text)
            )));
        }
        if status >= 400 {
            return Err(Attempt::Fatal(format!("HTTP {status}: {}", clip(&text))));
        }
        let parsed: WireResponse = serde_json::from_str(&text)
            .map_err(|e| Attempt::Fatal(format!("malformed response: {e}")))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| Attempt::Fatal("response has no message content".into()))
    }
}

fn clip(s: &str) -> &str {
    let mut end = s.len().min(300);
    while !s.is_char_boundary(end) {
        end -= 1;
    }
    &s[..end]
}

impl ChatBackend for LiveBackend {
    fn complete_timed(&self, request: &ChatRequest) -> Result<(String, u64)> {
        let start = Instant::now();
        let mut last = String::new();
        let attempts = self.config.max_retries + 1;
        for k in 0..attempts {
            if k > 0 {
                std::thread::sleep(Duration::from_millis(self.config.backoff_ms << (k - 1)));
            }
            match self.attempt(request) {
                Ok(text) => return Ok((text, start.elapsed().as_millis() as u64)),
                Err(Attempt::Transient(m)) => last = m,
                Err(Attempt::Fatal(m)) => return Err(EvoError::Backend(m)),
            }
        }
        Err(EvoError::BackendUnreachable {
            attempts,
            message: last,
        })
    }
}

/// Wraps another backend and appends every completed call to a transcript.
pub struct RecordBackend<B> {
    inner: B,
    entries: Mutex<Vec<TranscriptEntry>>,
    file: Option<Mutex<File>>,
    path: Option<PathBuf>,
}

impl<B: ChatBackend> RecordBackend<B> {
    pub fn in_memory(inner: B) -> Self {
        RecordBackend {
            inner,
            entries: Mutex::new(Vec::new()),
            file: None,
            path: None,
        }
    }

    /// Appends to `path` as calls complete.
    pub fn to_file(inner: B, path: &Path) -> Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(RecordBackend {
            inner,
            entries: Mutex::new(Vec::new()),
            file: Some(Mutex::new(file)),
            path: Some(path.to_path_buf()),
        })
    }

    pub fn entries(&self) -> Vec<TranscriptEntry> {
        self.entries.lock().expect("entries").clone()
    }

    /// Rewrites the file sorted by tag so concurrent completion order does
    /// not leak into it.
    pub fn finish(&self) -> Result<()> {
        if let Some(path) = &self.path {
            let mut entries = self.entries();
            entries.sort_by(|a, b| a.tag.cmp(&b.tag));
            std::fs::write(path, transcript_to_jsonl(&entries))?;
        }
        Ok(())
    }
}

impl<B: ChatBackend> ChatBackend for RecordBackend<B> {
    fn complete_timed(&self, request: &ChatRequest) -> Result<(String, u64)> {
        let (text, latency) = self.inner.complete_timed(request)?;
        let entry = TranscriptEntry::new(request, text.clone(), latency);
        if let Some(file) = &self.file {
            let line = serde_json::to_string(&entry).expect("entry serializes");
            let mut f = file.lock().expect("transcript file");
            writeln!(f, "{line}")?;
            f.flush()?;
        }
        self.entries.lock().expect("entries").push(entry);
        Ok((text, latency))
    }
}

/// Answers from a transcript only.
pub struct ReplayBackend {
    entries: Vec<TranscriptEntry>,
    used: Mutex<Vec<bool>>,
}

impl ReplayBackend {
    pub fn new(entries: Vec<TranscriptEntry>) -> Self {
        let used = Mutex::new(vec![false; entries.len()]);
        ReplayBackend { entries, used }
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Ok(Self::new(read_transcript(path)?))
    }

    pub fn remaining(&self) -> usize {
        self.used
            .lock()
            .expect("used")
            .iter()
            .filter(|u| !**u)
            .count()
    }
}

impl ChatBackend for ReplayBackend {
    fn complete_timed(&self, request: &ChatRequest) -> Result<(String, u64)> {
        let digest = request.digest();
        let mut used = self.used.lock().expect("used");
        let candidates = || {
            self.entries
                .iter()
                .enumerate()
                .filter(|(i, e)| !used[*i] && e.digest == digest)
        };
        let pick = candidates()
            .find(|(_, e)| e.tag == request.tag)
            .or_else(|| candidates().next())
            .map(|(i, _)| i);
        let Some(i) = pick else {
            return Err(EvoError::ReplayMiss {
                tag: request.tag.clone(),
                digest,
            });
        };
        used[i] = true;
        Ok((self.entries[i].response.clone(), self.entries[i].latency_ms))
    }
}

type Script = dyn Fn(&ChatRequest) -> Result<String> + Send + Sync;

/// Answers with a closure; counts calls and the peak number in flight.
pub struct ScriptedBackend {
    script: Box<Script>,
    calls: AtomicUsize,
    in_flight: AtomicUsize,
    peak: AtomicUsize,
    delay: Duration,
}

impl ScriptedBackend {
    pub fn new(script: impl Fn(&ChatRequest) -> Result<String> + Send + Sync + 'static) -> Self {
        ScriptedBackend {
            script: Box::new(script),
            calls: AtomicUsize::new(0),
            in_flight: AtomicUsize::new(0),
            peak: AtomicUsize::new(0),
            delay: Duration::ZERO,
        }
    }

    /// Holds every call for `delay` so concurrency becomes observable.
    pub fn with_delay(mut self, delay: Duration) -> Self {
        self.delay = delay;
        self
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn peak_in_flight(&self) -> usize {
        self.peak.load(Ordering::SeqCst)
    }
}

impl ChatBackend for ScriptedBackend {
    fn complete_timed(&self, request: &ChatRequest) -> Result<(String, u64)> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak.fetch_max(now, Ordering::SeqCst);
        if !self.delay.is_zero() {
            std::thread::sleep(self.delay);
        }
        let out = (self.script)(request);
        self.in_flight.fetch_sub(1, Ordering::SeqCst);
        out.map(|t| (t, 0))
    }
}
