//! Completion backends: a live OpenAI-compatible chat client and a scripted
//! replay backend used by tests and offline runs.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

/// Environment variable holding the API key for live backends.
pub const API_KEY_ENV: &str = "PLANCODE_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub system_text: Option<String>,
    pub user_text: String,
    pub temperature: f64,
    pub max_tokens: Option<u32>,
}

impl CompletionRequest {
    pub fn new(user_text: impl Into<String>, temperature: f64) -> Self {
        CompletionRequest {
            system_text: None,
            user_text: user_text.into(),
            temperature,
            max_tokens: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletionResult {
    pub text: String,
    pub tokens_in: u64,
    pub tokens_out: u64,
    pub latency_ms: u64,
    /// Token counts are `ceil(chars / 4)` estimates.
    pub tokens_estimated: bool,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BackendError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("rate limited after {attempts} attempts")]
    RateLimited { attempts: u32 },
    #[error("scripted backend has no response left (after {calls} calls)")]
    ScriptExhausted { calls: usize },
    #[error("transport error: {0}")]
    Transport(String),
}

impl BackendError {
    /// Failures worth retrying.
    fn is_transient(&self) -> bool {
        matches!(
            self,
            BackendError::Transport(_) | BackendError::RateLimited { .. }
        )
    }
}

/// A uniform completion interface. Implementations must be shareable across
/// threads evaluating different problems.
pub trait LlmBackend: Send + Sync {
    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResult, BackendError>;
}

impl<B: LlmBackend + ?Sized> LlmBackend for Arc<B> {
    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResult, BackendError> {
        (**self).complete(req)
    }
}

impl<B: LlmBackend + ?Sized> LlmBackend for &B {
    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResult, BackendError> {
        (**self).complete(req)
    }
}

pub fn estimate_tokens(text: &str) -> u64 {
    (text.chars().count() as u64).div_ceil(4)
}

fn check_request(req: &CompletionRequest) -> Result<(), BackendError> {
    if req.user_text.trim().is_empty() {
        return Err(BackendError::InvalidRequest("user_text is empty".into()));
    }
    Ok(())
}

/// Replays a fixed list of responses in order.
#[derive(Debug, Default)]
pub struct ScriptedBackend {
    responses: Mutex<VecDeque<String>>,
    prompts: Mutex<Vec<String>>,
    calls: AtomicUsize,
}

pub fn make_scripted<I, S>(responses: I) -> ScriptedBackend
where
    I: IntoIterator<Item = S>,
    S: Into<String>,
{
    ScriptedBackend::new(responses)
}

impl ScriptedBackend {
    pub fn new<I, S>(responses: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        ScriptedBackend {
            responses: Mutex::new(responses.into_iter().map(Into::into).collect()),
            prompts: Mutex::new(Vec::new()),
            calls: AtomicUsize::new(0),
        }
    }

    /// Number of responses handed out so far.
    pub fn call_count(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn remaining(&self) -> usize {
        self.responses.lock().unwrap().len()
    }

    /// User texts of every successful call, in order.
    pub fn prompts(&self) -> Vec<String> {
        self.prompts.lock().unwrap().clone()
    }
}

impl LlmBackend for ScriptedBackend {
    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResult, BackendError> {
        check_request(req)?;
        // one lock for pop + record keeps replay order well-defined
        let mut queue = self.responses.lock().unwrap();
        let Some(text) = queue.pop_front() else {
            return Err(BackendError::ScriptExhausted {
                calls: self.call_count(),
            });
        };
        self.prompts.lock().unwrap().push(req.user_text.clone());
        self.calls.fetch_add(1, Ordering::SeqCst);
        drop(queue);
        let prompt_len = req.system_text.as_deref().map_or(0, estimate_tokens)
            + estimate_tokens(&req.user_text);
        Ok(CompletionResult {
            tokens_in: prompt_len,
            tokens_out: estimate_tokens(&text),
            text,
            latency_ms: 0,
            tokens_estimated: true,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    /// Total attempts including the first.
    pub max_attempts: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 3,
            base_delay: Duration::from_secs(1),
        }
    }
}

impl RetryPolicy {
    /// Delay before retry number `retry` (1-based): base, 2·base, 4·base, ...
    pub fn delay(&self, retry: u32) -> Duration {
        self.base_delay * 2u32.saturating_pow(retry.saturating_sub(1))
    }

    /// Runs `op` until it succeeds, fails permanently, or attempts run out.
    /// A rate-limit failure on the last attempt is reported with the total
    /// attempt count.
    pub fn run<T>(
        &self,
        mut op: impl FnMut() -> Result<T, BackendError>,
    ) -> Result<T, BackendError> {
        let attempts = self.max_attempts.max(1);
        let mut attempt = 1;
        loop {
            match op() {
                Ok(v) => return Ok(v),
                Err(e) if e.is_transient() && attempt < attempts => {
                    log::warn!("backend attempt {attempt}/{attempts} failed: {e}; retrying");
                    thread::sleep(self.delay(attempt));
                    attempt += 1;
                }
                Err(BackendError::RateLimited { .. }) => {
                    return Err(BackendError::RateLimited { attempts: attempt })
                }
                Err(e) => return Err(e),
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiveConfig {
    pub base_url: String,
    pub model_name: String,
    pub timeout_ms: u64,
    pub max_retries: u32,
}

impl Default for LiveConfig {
    fn default() -> Self {
        LiveConfig {
            base_url: "https://api.openai.com/v1".into(),
            model_name: "gpt-3.5-turbo-1106".into(),
            timeout_ms: 120_000,
            max_retries: 3,
        }
    }
}

/// Client for the OpenAI-compatible `/chat/completions` endpoint.
pub struct OpenAiBackend {
    config: LiveConfig,
    api_key: String,
    agent: ureq::Agent,
    retry: RetryPolicy,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
    usage: Option<ChatUsage>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct ChatUsage {
    prompt_tokens: u64,
    completion_tokens: u64,
}

impl OpenAiBackend {
    pub fn new(config: LiveConfig, api_key: impl Into<String>) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(config.timeout_ms.max(1))))
            .http_status_as_error(false)
            .build()
            .into();
        let retry = RetryPolicy {
            max_attempts: config.max_retries.max(1),
            ..RetryPolicy::default()
        };
        OpenAiBackend {
            config,
            api_key: api_key.into(),
            agent,
            retry,
        }
    }

    /// Reads the key from [`API_KEY_ENV`], falling back to `OPENAI_API_KEY`.
    pub fn from_env(config: LiveConfig) -> Result<Self, BackendError> {
        let key = std::env::var(API_KEY_ENV)
            .or_else(|_| std::env::var("OPENAI_API_KEY"))
            .map_err(|_| BackendError::Auth(format!("{API_KEY_ENV} is not set")))?;
        Ok(Self::new(config, key))
    }

    pub fn with_retry_policy(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    fn body(&self, req: &CompletionRequest) -> serde_json::Value {
        let mut messages = Vec::new();
        if let Some(sys) = &req.system_text {
            messages.push(json!({"role": "system", "content": sys}));
        }
        messages.push(json!({"role": "user", "content": req.user_text}));
        let mut body = json!({
            "model": self.config.model_name,
            "messages": messages,
            "temperature": req.temperature,
        });
        if let Some(n) = req.max_tokens {
            body["max_tokens"] = json!(n);
        }
        body
    }

    fn attempt(&self, req: &CompletionRequest) -> Result<CompletionResult, BackendError> {
        let url = format!(
            "{}/chat/completions",
            self.config.base_url.trim_end_matches('/')
        );
        let started = Instant::now();
        let mut resp = self
            .agent
            .post(&url)
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .send_json(self.body(req))
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        match status {
            200..=299 => {}
            401 | 403 => {
                let msg = resp.body_mut().read_to_string().unwrap_or_default();
                return Err(BackendError::Auth(format!("HTTP {status}: {msg}")));
            }
            429 => return Err(BackendError::RateLimited { attempts: 1 }),
            _ => {
                let msg = resp.body_mut().read_to_string().unwrap_or_default();
                return Err(BackendError::Transport(format!("HTTP {status}: {msg}")));
            }
        }
        let parsed: ChatResponse = resp
            .body_mut()
            .read_json()
            .map_err(|e| BackendError::Transport(format!("malformed response body: {e}")))?;
        let text = parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| BackendError::Transport("response has no choices".into()))?;
        let latency_ms = started.elapsed().as_millis() as u64;
        let (tokens_in, tokens_out, tokens_estimated) = match parsed.usage {
            Some(u) => (u.prompt_tokens, u.completion_tokens, false),
            None => (
                req.system_text.as_deref().map_or(0, estimate_tokens)
                    + estimate_tokens(&req.user_text),
                estimate_tokens(&text),
                true,
            ),
        };
        Ok(CompletionResult {
            text,
            tokens_in,
            tokens_out,
            latency_ms,
            tokens_estimated,
        })
    }
}

impl LlmBackend for OpenAiBackend {
    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResult, BackendError> {
        check_request(req)?;
        self.retry.run(|| self.attempt(req))
    }
}

/// Token bucket shared by every caller of the wrapped backend.
pub struct RateLimited<B> {
    inner: B,
    bucket: Mutex<Bucket>,
    capacity: f64,
    per_sec: f64,
}

struct Bucket {
    tokens: f64,
    last: Instant,
}

impl<B: LlmBackend> RateLimited<B> {
    /// Allows bursts of up to `burst` calls and `per_minute` calls sustained.
    pub fn new(inner: B, per_minute: u32, burst: u32) -> Self {
        let capacity = f64::from(burst.max(1));
        RateLimited {
            inner,
            bucket: Mutex::new(Bucket {
                tokens: capacity,
                last: Instant::now(),
            }),
            capacity,
            per_sec: f64::from(per_minute.max(1)) / 60.0,
        }
    }

    fn acquire(&self) {
        loop {
            let wait = {
                let mut b = self.bucket.lock().unwrap();
                let now = Instant::now();
                let refill = now.duration_since(b.last).as_secs_f64() * self.per_sec;
                b.tokens = (b.tokens + refill).min(self.capacity);
                b.last = now;
                if b.tokens >= 1.0 {
                    b.tokens -= 1.0;
                    return;
                }
                Duration::from_secs_f64((1.0 - b.tokens) / self.per_sec)
            };
            thread::sleep(wait);
        }
    }
}

impl<B: LlmBackend> LlmBackend for RateLimited<B> {
    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResult, BackendError> {
        check_request(req)?;
        self.acquire();
        self.inner.complete(req)
    }
}
