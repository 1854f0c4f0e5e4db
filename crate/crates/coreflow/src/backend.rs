//! Chat-completion backends: the trait every interpreter/generator model
//! implements, a deterministic scripted backend for tests and offline runs,
//! and an HTTP client for hosted chat-completion APIs.

use regex::Regex;
use serde::{Deserialize, Serialize};
use std::sync::Mutex;
use std::time::Duration;
use thiserror::Error;

/// Environment variable holding the API key for the HTTP backend.
pub const API_KEY_ENV: &str = "COREFLOW_API_KEY";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub messages: Vec<Message>,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl ChatRequest {
    pub fn new(messages: Vec<Message>, temperature: f64) -> Self {
        ChatRequest { messages, temperature, max_tokens: 1024 }
    }

    /// A request with an optional system message followed by one user message.
    pub fn user(system: Option<&str>, content: impl Into<String>, temperature: f64) -> Self {
        let mut messages = Vec::new();
        if let Some(system) = system {
            messages.push(Message { role: Role::System, content: system.to_string() });
        }
        messages.push(Message { role: Role::User, content: content.into() });
        ChatRequest::new(messages, temperature)
    }

    pub fn last_user_content(&self) -> Option<&str> {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == Role::User)
            .map(|m| m.content.as_str())
    }

    fn check(&self) -> Result<(), BackendError> {
        if self.messages.is_empty() {
            return Err(BackendError::InvalidRequest("messages must be non-empty".into()));
        }
        if self.messages.last().unwrap().role != Role::User {
            return Err(BackendError::InvalidRequest("last message must have role user".into()));
        }
        if self.temperature < 0.0 {
            return Err(BackendError::InvalidRequest("temperature must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub content: String,
    pub usage: Option<Usage>,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum BackendError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("server returned status {0}")]
    Status(u16),
    #[error("malformed response: {0}")]
    MalformedResponse(String),
}

/// The contract every chat backend satisfies. Implementations must be safe
/// to share across concurrent interpreter runs.
pub trait ChatBackend: Send + Sync {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, BackendError>;
}

// ---------------------------------------------------------------------------
// Scripted backend
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub enum Matcher {
    Substring(String),
    Pattern(Regex),
}

impl Matcher {
    fn matches(&self, text: &str) -> bool {
        match self {
            Matcher::Substring(s) => text.contains(s.as_str()),
            Matcher::Pattern(re) => re.is_match(text),
        }
    }
}

/// One scripted rule: matched against the last user message, rules are tried
/// in declared order and the first match wins. Each match consumes the next
/// queued response; once the queue is exhausted the rule's fallback (or the
/// backend-wide fallback) is returned.
#[derive(Debug, Clone)]
pub struct ScriptedRule {
    pub matcher: Matcher,
    pub responses: Vec<String>,
    pub fallback: Option<String>,
}

impl ScriptedRule {
    pub fn substring(pattern: impl Into<String>, responses: Vec<String>, fallback: Option<String>) -> Self {
        ScriptedRule { matcher: Matcher::Substring(pattern.into()), responses, fallback }
    }

    pub fn regex(pattern: &str, responses: Vec<String>, fallback: Option<String>) -> Result<Self, regex::Error> {
        Ok(ScriptedRule { matcher: Matcher::Pattern(Regex::new(pattern)?), responses, fallback })
    }

    /// Shorthand for a stateless rule that always answers the same thing.
    pub fn always(pattern: impl Into<String>, response: impl Into<String>) -> Self {
        ScriptedRule::substring(pattern, Vec::new(), Some(response.into()))
    }
}

#[derive(Debug, Deserialize, Serialize)]
struct RuleSpec {
    #[serde(rename = "match")]
    pattern: String,
    #[serde(default)]
    regex: bool,
    #[serde(default)]
    responses: Vec<String>,
    #[serde(default)]
    fallback: Option<String>,
}

/// Deterministic stand-in for an LLM. Response-queue counters live behind a
/// mutex so the backend can be shared across concurrent runs.
pub struct ScriptedBackend {
    rules: Vec<ScriptedRule>,
    consumed: Mutex<Vec<usize>>,
    global_fallback: String,
    log: Mutex<Vec<ChatRequest>>,
}

impl ScriptedBackend {
    pub fn new(rules: Vec<ScriptedRule>, global_fallback: impl Into<String>) -> Self {
        let consumed = Mutex::new(vec![0; rules.len()]);
        ScriptedBackend { rules, consumed, global_fallback: global_fallback.into(), log: Mutex::new(Vec::new()) }
    }

    /// Loads rules from a JSON array of `{match, regex?, responses?, fallback?}`.
    pub fn from_json(json: &str) -> Result<Self, String> {
        let specs: Vec<RuleSpec> = serde_json::from_str(json).map_err(|e| e.to_string())?;
        let mut rules = Vec::with_capacity(specs.len());
        for spec in specs {
            let matcher = if spec.regex {
                Matcher::Pattern(Regex::new(&spec.pattern).map_err(|e| e.to_string())?)
            } else {
                Matcher::Substring(spec.pattern)
            };
            rules.push(ScriptedRule { matcher, responses: spec.responses, fallback: spec.fallback });
        }
        Ok(ScriptedBackend::new(rules, ""))
    }

    pub fn load(path: &std::path::Path) -> Result<Self, String> {
        let json = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::from_json(&json)
    }

    /// Every request seen so far, in call order.
    pub fn requests(&self) -> Vec<ChatRequest> {
        self.log.lock().unwrap().clone()
    }
}

impl ChatBackend for ScriptedBackend {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, BackendError> {
        req.check()?;
        self.log.lock().unwrap().push(req.clone());
        let text = req.last_user_content().unwrap_or("");
        let mut consumed = self.consumed.lock().unwrap();
        for (idx, rule) in self.rules.iter().enumerate() {
            if !rule.matcher.matches(text) {
                continue;
            }
            let content = if consumed[idx] < rule.responses.len() {
                let r = rule.responses[consumed[idx]].clone();
                consumed[idx] += 1;
                r
            } else {
                rule.fallback.clone().unwrap_or_else(|| self.global_fallback.clone())
            };
            return Ok(ChatResponse { content, usage: None });
        }
        Ok(ChatResponse { content: self.global_fallback.clone(), usage: None })
    }
}

// ---------------------------------------------------------------------------
// HTTP backend
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub backoff: Vec<Duration>,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            attempts: 3,
            backoff: vec![Duration::from_secs(1), Duration::from_secs(2), Duration::from_secs(4)],
        }
    }
}

impl RetryPolicy {
    /// No waiting between attempts; used by tests.
    pub fn immediate(attempts: u32) -> Self {
        RetryPolicy { attempts, backoff: Vec::new() }
    }
}

/// Client for the common chat-completion JSON wire shape:
/// `POST {endpoint}/chat/completions`, response read from
/// `choices[0].message.content`. The API key, when present in the
/// `COREFLOW_API_KEY` environment variable, is sent as a bearer token.
pub struct HttpBackend {
    client: reqwest::blocking::Client,
    endpoint: String,
    model: String,
    api_key: Option<String>,
    retry: RetryPolicy,
}

impl HttpBackend {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        HttpBackend {
            client: reqwest::blocking::Client::new(),
            endpoint: endpoint.into(),
            model: model.into(),
            api_key: std::env::var(API_KEY_ENV).ok(),
            retry: RetryPolicy::default(),
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    fn url(&self) -> String {
        format!("{}/chat/completions", self.endpoint.trim_end_matches('/'))
    }

    fn attempt(&self, req: &ChatRequest) -> Result<ChatResponse, (BackendError, bool)> {
        let body = serde_json::json!({
            "model": self.model,
            "messages": req.messages,
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        });
        let mut http = self.client.post(self.url()).json(&body);
        if let Some(key) = &self.api_key {
            http = http.bearer_auth(key);
        }
        let resp = http
            .send()
            .map_err(|e| (BackendError::Transport(e.to_string()), true))?;
        let status = resp.status().as_u16();
        if status == 429 || status >= 500 {
            return Err((BackendError::Status(status), true));
        }
        if !(200..300).contains(&status) {
            return Err((BackendError::Status(status), false));
        }
        let value: serde_json::Value = resp
            .json()
            .map_err(|e| (BackendError::MalformedResponse(e.to_string()), false))?;
        let content = value["choices"][0]["message"]["content"]
            .as_str()
            .ok_or_else(|| {
                (BackendError::MalformedResponse("missing choices[0].message.content".into()), false)
            })?
            .to_string();
        let usage = value.get("usage").and_then(|u| {
            Some(Usage {
                prompt_tokens: u.get("prompt_tokens")?.as_u64()?,
                completion_tokens: u.get("completion_tokens")?.as_u64()?,
            })
        });
        Ok(ChatResponse { content, usage })
    }
}

impl ChatBackend for HttpBackend {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, BackendError> {
        req.check()?;
        let mut last = BackendError::Transport("no attempts made".into());
        for attempt in 0..self.retry.attempts {
            match self.attempt(req) {
                Ok(resp) => return Ok(resp),
                Err((err, retryable)) => {
                    if !retryable {
                        return Err(err);
                    }
                    last = err;
                    if attempt + 1 < self.retry.attempts {
                        if let Some(delay) = self.retry.backoff.get(attempt as usize) {
                            std::thread::sleep(*delay);
                        }
                    }
                }
            }
        }
        Err(last)
    }
}
