//! Chat-completion clients.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::ScriptError;
use crate::cache::{cache_key, BlobCache};

/// Environment variable holding the bearer token for the chat service.
pub const API_KEY_ENV: &str = "FORGE_API_KEY";

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ChatRequest {
    /// Versioned template id, e.g. `v1/dyadic`.
    pub template_id: String,
    /// Filled prompt text.
    pub prompt: String,
}

pub trait ChatClient: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<String, ScriptError>;

    /// Model name, part of the cache key.
    fn model(&self) -> &str {
        "default"
    }
}

impl<T: ChatClient + ?Sized> ChatClient for &T {
    fn complete(&self, request: &ChatRequest) -> Result<String, ScriptError> {
        (**self).complete(request)
    }

    fn model(&self) -> &str {
        (**self).model()
    }
}

impl<T: ChatClient + ?Sized> ChatClient for Box<T> {
    fn complete(&self, request: &ChatRequest) -> Result<String, ScriptError> {
        (**self).complete(request)
    }

    fn model(&self) -> &str {
        (**self).model()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatClientConfig {
    /// Base URL; requests go to `{endpoint}/chat/completions`.
    pub endpoint: String,
    pub model: String,
    pub timeout_seconds: f64,
    pub max_retries: u32,
    pub cache_dir: Option<PathBuf>,
}

impl ChatClientConfig {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        ChatClientConfig {
            endpoint: endpoint.into(),
            model: model.into(),
            timeout_seconds: 60.0,
            max_retries: 3,
            cache_dir: None,
        }
    }

    pub fn check(&self) -> Result<(), ScriptError> {
        if !(self.timeout_seconds > 0.0 && self.timeout_seconds.is_finite()) {
            return Err(ScriptError::ServiceError(format!("timeout must be positive, got {}", self.timeout_seconds)));
        }
        if self.endpoint.trim().is_empty() {
            return Err(ScriptError::ServiceError("endpoint is empty".into()));
        }
        Ok(())
    }
}

/// OpenAI-compatible `chat/completions` client.
pub struct HttpChatClient {
    config: ChatClientConfig,
    api_key: Option<String>,
    http: reqwest::blocking::Client,
}

impl HttpChatClient {
    pub fn new(config: ChatClientConfig) -> Result<Self, ScriptError> {
        config.check()?;
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(config.timeout_seconds))
            .build()
            .map_err(|e| ScriptError::ServiceError(e.to_string()))?;
        Ok(HttpChatClient { api_key: std::env::var(API_KEY_ENV).ok(), config, http })
    }

    fn url(&self) -> String {
        format!("{}/chat/completions", self.config.endpoint.trim_end_matches('/'))
    }

    /// `Ok(Err(..))` is a permanent failure, `Err(..)` a retryable one.
    fn attempt(&self, req: &ChatRequest) -> Result<Result<String, ScriptError>, String> {
        let body = serde_json::json!({
            "model": self.config.model,
            "temperature": 0,
            "messages": [{"role": "user", "content": req.prompt}],
        });
        let mut call = self.http.post(self.url()).json(&body);
        if let Some(key) = &self.api_key {
            call = call.bearer_auth(key);
        }
        let resp = call.send().map_err(|e| e.to_string())?;
        let status = resp.status();
        if status.is_server_error() || status.as_u16() == 429 {
            return Err(format!("HTTP {status}"));
        }
        if !status.is_success() {
            return Ok(Err(ScriptError::ServiceError(format!("HTTP {status}"))));
        }
        let value: serde_json::Value = resp.json().map_err(|e| e.to_string())?;
        Ok(value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| ScriptError::ServiceError("reply has no choices[0].message.content".into())))
    }
}

impl ChatClient for HttpChatClient {
    fn complete(&self, req: &ChatRequest) -> Result<String, ScriptError> {
        let mut last = String::new();
        for attempt in 0..=self.config.max_retries {
            match self.attempt(req) {
                Ok(result) => return result,
                Err(e) => {
                    tracing::warn!(attempt, error = %e, template = %req.template_id, "chat request failed");
                    last = e;
                    if attempt < self.config.max_retries {
                        std::thread::sleep(Duration::from_millis(250 << attempt.min(6)));
                    }
                }
            }
        }
        Err(ScriptError::ServiceError(last))
    }

    fn model(&self) -> &str {
        &self.config.model
    }
}

/// Disk cache in front of another client, keyed by template, prompt and model.
pub struct CachedChatClient<C> {
    inner: C,
    cache: BlobCache,
}

impl<C: ChatClient> CachedChatClient<C> {
    pub fn new(inner: C, cache: BlobCache) -> Self {
        CachedChatClient { inner, cache }
    }

    pub fn key(&self, req: &ChatRequest) -> String {
        cache_key(&["chat/1", &req.template_id, &req.prompt, self.inner.model()])
    }
}

impl<C: ChatClient> ChatClient for CachedChatClient<C> {
    fn complete(&self, req: &ChatRequest) -> Result<String, ScriptError> {
        let bytes = self.cache.get_or_insert_with(&self.key(req), || {
            self.inner.complete(req).map(String::into_bytes)
        })?;
        String::from_utf8(bytes).map_err(|e| ScriptError::ServiceError(format!("cached reply is not UTF-8: {e}")))
    }

    fn model(&self) -> &str {
        self.inner.model()
    }
}

/// One canned reply. `template` is a template name such as `dyadic`, a full id
/// such as `v1/dyadic`, or `*`; `match` must occur in the prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayEntry {
    pub template: String,
    #[serde(rename = "match", default)]
    pub pattern: String,
    pub response: String,
}

/// Replays canned replies from a JSONL file; the first matching entry wins.
#[derive(Debug, Clone, Default)]
pub struct ReplayChatClient {
    entries: Vec<ReplayEntry>,
}

impl ReplayChatClient {
    pub fn new(entries: Vec<ReplayEntry>) -> Self {
        ReplayChatClient { entries }
    }

    pub fn load(path: &Path) -> Result<Self, ScriptError> {
        let text = std::fs::read_to_string(path)?;
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let entry = serde_json::from_str(line)
                .map_err(|e| ScriptError::SchemaError(format!("{}:{}: {e}", path.display(), i + 1)))?;
            entries.push(entry);
        }
        Ok(ReplayChatClient { entries })
    }

    /// Reply to every prompt with the same text.
    pub fn constant(response: impl Into<String>) -> Self {
        ReplayChatClient::new(vec![ReplayEntry { template: "*".into(), pattern: String::new(), response: response.into() }])
    }

    pub fn push(&mut self, template: &str, pattern: &str, response: impl Into<String>) {
        self.entries.push(ReplayEntry { template: template.into(), pattern: pattern.into(), response: response.into() });
    }
}

impl ChatClient for ReplayChatClient {
    fn complete(&self, req: &ChatRequest) -> Result<String, ScriptError> {
        let name = req.template_id.rsplit('/').next().unwrap_or_default();
        self.entries
            .iter()
            .find(|e| {
                (e.template == "*" || e.template == req.template_id || e.template == name)
                    && req.prompt.contains(&e.pattern)
            })
            .map(|e| e.response.clone())
            .ok_or_else(|| ScriptError::ServiceError(format!("no canned reply for {}", req.template_id)))
    }

    fn model(&self) -> &str {
        "replay"
    }
}
