use std::collections::HashMap;
use std::path::Path;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: String,
    pub content: String,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Self {
        Message { role: "system".into(), content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Message { role: "user".into(), content: content.into() }
    }
}

/// Body of a chat-completion request.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChatRequest<'a> {
    pub model: &'a str,
    pub messages: &'a [Message],
    pub temperature: f64,
}

/// Hex SHA-256 of the request's JSON body; replay files are keyed by it.
pub fn request_hash(model: &str, messages: &[Message], temperature: f64) -> String {
    let body = serde_json::to_vec(&ChatRequest { model, messages, temperature }).expect("request serializes");
    hex::encode(Sha256::digest(body))
}

/// A chat-completion backend. Live and mock clients share this contract.
pub trait ChatClient: Send + Sync {
    /// Model name, used in cache keys and reports.
    fn model(&self) -> &str;

    fn complete(&self, messages: &[Message]) -> Result<String>;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EndpointConfig {
    /// Base URL; requests go to `{base_url}/chat/completions`.
    pub base_url: String,
    pub model: String,
    /// Environment variable holding the bearer token.
    pub token_env: String,
    pub timeout_secs: u64,
    pub max_retries: u32,
    pub temperature: f64,
    pub backoff_ms: u64,
    pub backoff_cap_ms: u64,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        EndpointConfig {
            base_url: "https://api.openai.com/v1".into(),
            model: "gpt-4".into(),
            token_env: "OPENAI_API_KEY".into(),
            timeout_secs: 60,
            max_retries: 3,
            temperature: 0.0,
            backoff_ms: 500,
            backoff_cap_ms: 8_000,
        }
    }
}

impl EndpointConfig {
    /// Wait before retry `attempt` (0-based): doubling from `backoff_ms`,
    /// capped at `backoff_cap_ms`.
    pub fn backoff(&self, attempt: u32) -> Duration {
        let ms = self.backoff_ms.saturating_mul(1u64 << attempt.min(32)).min(self.backoff_cap_ms);
        Duration::from_millis(ms)
    }
}

/// JSON-over-HTTP chat-completion client.
pub struct LiveClient {
    cfg: EndpointConfig,
    token: String,
    http: reqwest::blocking::Client,
}

impl LiveClient {
    pub fn new(cfg: EndpointConfig) -> Result<Self> {
        let token = std::env::var(&cfg.token_env)
            .map_err(|_| Error::config("client.token_env", format!("environment variable {} is not set", cfg.token_env)))?;
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(cfg.timeout_secs))
            .build()
            .map_err(|e| Error::Client(e.to_string()))?;
        Ok(LiveClient { cfg, token, http })
    }

    fn attempt(&self, messages: &[Message]) -> std::result::Result<String, (bool, String)> {
        let body = ChatRequest { model: &self.cfg.model, messages, temperature: self.cfg.temperature };
        let url = format!("{}/chat/completions", self.cfg.base_url.trim_end_matches('/'));
        let resp = self.http.post(url).bearer_auth(&self.token).json(&body).send().map_err(|e| (true, e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            let retry = status.as_u16() == 429 || status.is_server_error();
            return Err((retry, format!("HTTP {status}")));
        }
        let v: serde_json::Value = resp.json().map_err(|e| (false, e.to_string()))?;
        v.pointer("/choices/0/message/content")
            .and_then(serde_json::Value::as_str)
            .map(String::from)
            .ok_or_else(|| (false, "response has no choices[0].message.content".into()))
    }
}

impl ChatClient for LiveClient {
    fn model(&self) -> &str {
        &self.cfg.model
    }

    fn complete(&self, messages: &[Message]) -> Result<String> {
        let mut attempt = 0;
        loop {
            match self.attempt(messages) {
                Ok(reply) => return Ok(reply),
                Err((retry, msg)) if retry && attempt < self.cfg.max_retries => {
                    log::warn!("{}: {msg}; retrying", self.cfg.model);
                    std::thread::sleep(self.cfg.backoff(attempt));
                    attempt += 1;
                }
                Err((_, msg)) => return Err(Error::Client(format!("{}: {msg}", self.cfg.model))),
            }
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct ReplayLine {
    hash: String,
    reply: String,
}

/// Answers from a file of `{"hash": …, "reply": …}` lines keyed by
/// [`request_hash`].
pub struct ReplayClient {
    model: String,
    temperature: f64,
    replies: HashMap<String, String>,
}

impl ReplayClient {
    pub fn new(model: impl Into<String>, temperature: f64, replies: HashMap<String, String>) -> Self {
        ReplayClient { model: model.into(), temperature, replies }
    }

    pub fn load(path: &Path, model: impl Into<String>, temperature: f64) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut replies = HashMap::new();
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let r: ReplayLine =
                serde_json::from_str(line).map_err(|e| Error::format(path, format!("line {}: {e}", i + 1)))?;
            replies.insert(r.hash, r.reply);
        }
        Ok(ReplayClient::new(model, temperature, replies))
    }
}

impl ChatClient for ReplayClient {
    fn model(&self) -> &str {
        &self.model
    }

    fn complete(&self, messages: &[Message]) -> Result<String> {
        let h = request_hash(&self.model, messages, self.temperature);
        self.replies.get(&h).cloned().ok_or_else(|| Error::Client(format!("{}: no recorded reply for request {h}", self.model)))
    }
}

/// Mock driven by a closure over the request messages.
pub struct FnClient<F> {
    model: String,
    f: F,
}

impl<F> FnClient<F>
where
    F: Fn(&[Message]) -> Result<String> + Send + Sync,
{
    pub fn new(model: impl Into<String>, f: F) -> Self {
        FnClient { model: model.into(), f }
    }
}

impl<F> ChatClient for FnClient<F>
where
    F: Fn(&[Message]) -> Result<String> + Send + Sync,
{
    fn model(&self) -> &str {
        &self.model
    }

    fn complete(&self, messages: &[Message]) -> Result<String> {
        (self.f)(messages)
    }
}

/// Mock returning queued replies in order, then failing.
pub struct SequenceClient {
    model: String,
    replies: Mutex<std::collections::VecDeque<String>>,
}

impl SequenceClient {
    pub fn new(model: impl Into<String>, replies: impl IntoIterator<Item = impl Into<String>>) -> Self {
        SequenceClient { model: model.into(), replies: Mutex::new(replies.into_iter().map(Into::into).collect()) }
    }

    pub fn remaining(&self) -> usize {
        self.replies.lock().expect("lock").len()
    }
}

impl ChatClient for SequenceClient {
    fn model(&self) -> &str {
        &self.model
    }

    fn complete(&self, _messages: &[Message]) -> Result<String> {
        self.replies.lock().expect("lock").pop_front().ok_or_else(|| Error::Client(format!("{}: script exhausted", self.model)))
    }
}
