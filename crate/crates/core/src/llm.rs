//! Chat-completion gateway: an OpenAI-compatible HTTP backend, a replay
//! backend over recorded sessions, and the recorder that produces them.
//!
//! Replay keys are SHA-256 digests of a canonical request serialization
//! (sorted keys, whitespace runs collapsed to one space), so reformatting a
//! prompt's whitespace does not orphan its recording.

use std::collections::{HashMap, VecDeque};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("authentication rejected: {0}")]
    Auth(String),
    #[error("rate limited after retries: {0}")]
    RateLimited(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("backend refused the request: {0}")]
    Refusal(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("recording store {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub role: Role,
    pub text: String,
}

impl Turn {
    pub fn new(role: Role, text: impl Into<String>) -> Self {
        Self {
            role,
            text: text.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub system: String,
    pub turns: Vec<Turn>,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl ChatRequest {
    pub fn single(system: impl Into<String>, user: impl Into<String>) -> Self {
        Self {
            system: system.into(),
            turns: vec![Turn::new(Role::User, user)],
            temperature: 0.0,
            max_tokens: 512,
        }
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        match self.turns.last() {
            None => Err(LlmError::InvalidRequest("request has no turns".into())),
            Some(t) if t.role != Role::User => Err(LlmError::InvalidRequest("last turn must be from the user".into())),
            _ if self.temperature.is_nan() || self.temperature < 0.0 => {
                Err(LlmError::InvalidRequest("temperature must be >= 0".into()))
            }
            _ if self.max_tokens == 0 => Err(LlmError::InvalidRequest("max_tokens must be positive".into())),
            _ => Ok(()),
        }
    }

    pub fn last_user_text(&self) -> &str {
        self.turns.last().map(|t| t.text.as_str()).unwrap_or("")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    pub backend_id: String,
    pub latency_ms: u64,
}

pub trait ChatBackend: Send + Sync {
    fn id(&self) -> &str;
    fn send(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError>;
}

impl<B: ChatBackend + ?Sized> ChatBackend for Box<B> {
    fn id(&self) -> &str {
        (**self).id()
    }

    fn send(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        (**self).send(request)
    }
}

/// Validates the request and forwards it to the backend.
pub fn complete(request: &ChatRequest, backend: &dyn ChatBackend) -> Result<ChatResponse, LlmError> {
    request.validate()?;
    backend.send(request)
}

fn squeeze_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn canonical_value(request: &ChatRequest) -> Value {
    json!({
        "system": squeeze_ws(&request.system),
        "turns": request.turns.iter().map(|t| json!({"role": t.role, "text": squeeze_ws(&t.text)})).collect::<Vec<_>>(),
        "temperature": request.temperature,
        "max_tokens": request.max_tokens,
    })
}

pub fn request_hash(request: &ChatRequest) -> String {
    // serde_json's default map is ordered, so keys serialize sorted.
    let canon = serde_json::to_string(&canonical_value(request)).expect("request serializes");
    hex::encode(Sha256::digest(canon.as_bytes()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordEntry {
    pub request_hash: String,
    pub request: ChatRequest,
    pub response: String,
}

fn store_io(path: &Path) -> impl FnOnce(std::io::Error) -> LlmError + '_ {
    move |source| LlmError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Serves recorded responses. Repeated requests with the same key walk
/// through their recordings in order and then stay on the last one.
pub struct ReplayBackend {
    entries: HashMap<String, Vec<String>>,
    cursors: Mutex<HashMap<String, usize>>,
}

impl ReplayBackend {
    pub fn from_entries(entries: impl IntoIterator<Item = RecordEntry>) -> Self {
        let mut map: HashMap<String, Vec<String>> = HashMap::new();
        for e in entries {
            map.entry(e.request_hash).or_default().push(e.response);
        }
        Self {
            entries: map,
            cursors: Mutex::new(HashMap::new()),
        }
    }

    pub fn open(store: &Path) -> Result<Self, LlmError> {
        let file = File::open(store).map_err(store_io(store))?;
        let mut entries = Vec::new();
        for (lineno, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(store_io(store))?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: RecordEntry = serde_json::from_str(&line)
                .map_err(|e| LlmError::Transport(format!("{}:{}: bad recording: {e}", store.display(), lineno + 1)))?;
            entries.push(entry);
        }
        Ok(Self::from_entries(entries))
    }

    pub fn len(&self) -> usize {
        self.entries.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl ChatBackend for ReplayBackend {
    fn id(&self) -> &str {
        "replay"
    }

    fn send(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        let hash = request_hash(request);
        let Some(recorded) = self.entries.get(&hash) else {
            return Err(LlmError::Transport(format!("no recording for request {hash}")));
        };
        let mut cursors = self.cursors.lock().expect("cursor lock");
        let cursor = cursors.entry(hash).or_insert(0);
        let text = recorded[(*cursor).min(recorded.len() - 1)].clone();
        *cursor += 1;
        Ok(ChatResponse {
            text,
            backend_id: "replay".into(),
            latency_ms: 0,
        })
    }
}

/// Wraps a backend and appends every successful exchange to a JSONL store.
pub struct RecordingBackend<B> {
    inner: B,
    path: PathBuf,
    file: Mutex<File>,
}

impl<B: ChatBackend> RecordingBackend<B> {
    pub fn new(inner: B, store: &Path) -> Result<Self, LlmError> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(store)
            .map_err(store_io(store))?;
        Ok(Self {
            inner,
            path: store.to_path_buf(),
            file: Mutex::new(file),
        })
    }
}

impl<B: ChatBackend> ChatBackend for RecordingBackend<B> {
    fn id(&self) -> &str {
        self.inner.id()
    }

    fn send(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        let response = self.inner.send(request)?;
        let entry = RecordEntry {
            request_hash: request_hash(request),
            request: request.clone(),
            response: response.text.clone(),
        };
        let mut line = serde_json::to_string(&entry).expect("entry serializes");
        line.push('\n');
        let mut file = self.file.lock().expect("store lock");
        file.write_all(line.as_bytes())
            .and_then(|_| file.flush())
            .map_err(store_io(&self.path))?;
        Ok(response)
    }
}

/// Sends each request through `backend` and appends the exchanges to `store`.
/// Returns the number of recorded entries.
pub fn record_session<I, B>(requests: I, backend: B, store: &Path) -> Result<usize, LlmError>
where
    I: IntoIterator<Item = ChatRequest>,
    B: ChatBackend,
{
    let recorder = RecordingBackend::new(backend, store)?;
    let mut n = 0;
    for request in requests {
        complete(&request, &recorder)?;
        n += 1;
    }
    Ok(n)
}

/// Global admission control: at most `max_in_flight` concurrent calls and at
/// most `per_minute` call starts in any sliding 60 s window.
pub struct RateLimiter {
    max_in_flight: usize,
    per_minute: usize,
    state: Mutex<LimiterState>,
    freed: Condvar,
}

struct LimiterState {
    in_flight: usize,
    starts: VecDeque<Instant>,
}

pub struct Permit<'a> {
    limiter: &'a RateLimiter,
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut st = self.limiter.state.lock().expect("limiter lock");
        st.in_flight -= 1;
        self.limiter.freed.notify_one();
    }
}

impl RateLimiter {
    pub fn new(max_in_flight: usize, per_minute: usize) -> Self {
        Self {
            max_in_flight: max_in_flight.max(1),
            per_minute: per_minute.max(1),
            state: Mutex::new(LimiterState {
                in_flight: 0,
                starts: VecDeque::new(),
            }),
            freed: Condvar::new(),
        }
    }

    pub fn acquire(&self) -> Permit<'_> {
        let window = Duration::from_secs(60);
        let mut st = self.state.lock().expect("limiter lock");
        loop {
            let now = Instant::now();
            while st.starts.front().is_some_and(|t| now.duration_since(*t) >= window) {
                st.starts.pop_front();
            }
            if st.in_flight < self.max_in_flight && st.starts.len() < self.per_minute {
                st.in_flight += 1;
                st.starts.push_back(now);
                return Permit { limiter: self };
            }
            let wait = if st.starts.len() >= self.per_minute {
                window.saturating_sub(now.duration_since(st.starts[0]))
            } else {
                Duration::from_millis(250)
            };
            st = self.freed.wait_timeout(st, wait).expect("limiter lock").0;
        }
    }

    pub fn in_flight(&self) -> usize {
        self.state.lock().expect("limiter lock").in_flight
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpConfig {
    pub base_url: String,
    #[serde(skip_serializing)]
    pub api_key: String,
    pub model: String,
    pub max_retries: u32,
    pub backoff_base_ms: u64,
    pub timeout_secs: u64,
    pub max_in_flight: usize,
    pub requests_per_minute: usize,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Default for HttpConfig {
    fn default() -> Self {
        Self {
            base_url: "https://api.openai.com/v1".into(),
            api_key: String::new(),
            model: "gpt-3.5-turbo".into(),
            max_retries: 4,
            backoff_base_ms: 500,
            timeout_secs: 120,
            max_in_flight: 8,
            requests_per_minute: 600,
            temperature: 0.7,
            max_tokens: 1024,
        }
    }
}

impl HttpConfig {
    /// Overlays `LLM_BASE_URL` and `LLM_API_KEY` when set.
    pub fn with_env(mut self) -> Self {
        if let Ok(url) = std::env::var("LLM_BASE_URL") {
            self.base_url = url;
        }
        if let Ok(key) = std::env::var("LLM_API_KEY") {
            self.api_key = key;
        }
        self
    }
}

pub struct HttpBackend {
    config: HttpConfig,
    agent: ureq::Agent,
    limiter: RateLimiter,
}

enum Attempt {
    Done(ChatResponse),
    Retry(LlmError),
    Fail(LlmError),
}

impl HttpBackend {
    pub fn new(config: HttpConfig) -> Self {
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build();
        let limiter = RateLimiter::new(config.max_in_flight, config.requests_per_minute);
        Self { config, agent, limiter }
    }

    fn body(&self, request: &ChatRequest) -> Value {
        let mut messages = vec![json!({"role": "system", "content": request.system})];
        messages.extend(request.turns.iter().map(|t| json!({"role": t.role, "content": t.text})));
        json!({
            "model": self.config.model,
            "messages": messages,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        })
    }

    fn attempt(&self, body: &Value) -> Attempt {
        let url = format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'));
        let started = Instant::now();
        let result = {
            let _permit = self.limiter.acquire();
            self.agent
                .post(&url)
                .set("Authorization", &format!("Bearer {}", self.config.api_key))
                .send_json(body.clone())
        };
        match result {
            Ok(resp) => match resp.into_json::<Value>() {
                Ok(v) => parse_completion(&v, started.elapsed()),
                Err(e) => Attempt::Retry(LlmError::Transport(format!("unreadable response body: {e}"))),
            },
            Err(ureq::Error::Status(code, resp)) => {
                let detail = resp.into_string().unwrap_or_default();
                match code {
                    401 | 403 => Attempt::Fail(LlmError::Auth(format!("HTTP {code}: {detail}"))),
                    429 => Attempt::Retry(LlmError::RateLimited(format!("HTTP 429: {detail}"))),
                    500..=599 => Attempt::Retry(LlmError::Transport(format!("HTTP {code}: {detail}"))),
                    _ => Attempt::Fail(LlmError::Transport(format!("HTTP {code}: {detail}"))),
                }
            }
            Err(ureq::Error::Transport(t)) => Attempt::Retry(LlmError::Transport(t.to_string())),
        }
    }
}

fn parse_completion(v: &Value, elapsed: Duration) -> Attempt {
    let choice = &v["choices"][0];
    if choice["finish_reason"] == "content_filter" || choice["message"]["refusal"].is_string() {
        let why = choice["message"]["refusal"]
            .as_str()
            .unwrap_or("content filter")
            .to_string();
        return Attempt::Fail(LlmError::Refusal(why));
    }
    match choice["message"]["content"].as_str() {
        Some(text) => Attempt::Done(ChatResponse {
            text: text.to_string(),
            backend_id: "http".into(),
            latency_ms: elapsed.as_millis() as u64,
        }),
        None => Attempt::Retry(LlmError::Transport("response has no message content".into())),
    }
}

impl ChatBackend for HttpBackend {
    fn id(&self) -> &str {
        "http"
    }

    fn send(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        let body = self.body(request);
        let mut last = None;
        for attempt in 0..=self.config.max_retries {
            if attempt > 0 {
                let delay = self.config.backoff_base_ms.saturating_mul(1 << (attempt - 1).min(16));
                thread::sleep(Duration::from_millis(delay));
            }
            match self.attempt(&body) {
                Attempt::Done(r) => return Ok(r),
                Attempt::Fail(e) => return Err(e),
                Attempt::Retry(e) => {
                    tracing::warn!(attempt, error = %e, "retrying chat completion");
                    last = Some(e);
                }
            }
        }
        Err(last.unwrap_or_else(|| LlmError::Transport("no attempts made".into())))
    }
}

pub fn read_store(path: &Path) -> Result<Vec<RecordEntry>, LlmError> {
    let text = fs::read_to_string(path).map_err(store_io(path))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| LlmError::Transport(format!("bad recording: {e}"))))
        .collect()
}
