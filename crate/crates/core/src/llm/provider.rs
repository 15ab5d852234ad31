//! LLM transports: an OpenAI-compatible HTTP client and a scripted fixture
//! provider for offline, reproducible runs.

use std::collections::{HashMap, VecDeque};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use super::LlmError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub prompt: String,
    pub max_output_tokens: u32,
    pub temperature: f64,
}

impl ChatRequest {
    pub fn new(prompt: impl Into<String>) -> Self {
        Self {
            prompt: prompt.into(),
            max_output_tokens: 2048,
            temperature: 0.0,
        }
    }
}

pub trait LlmProvider: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<String, LlmError>;
}

/// Lowercase hex SHA-256 of the prompt; the key for scripted fixtures.
pub fn prompt_hash(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

/// Scripted fixture: `{"byHash": {sha256: reply}, "fallback": [reply, ...]}`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Fixture {
    #[serde(rename = "byHash", default)]
    pub by_hash: HashMap<String, String>,
    #[serde(default)]
    pub fallback: Vec<String>,
}

/// Answers from a hash-keyed table, falling back to an ordered queue.
///
/// The fallback queue is consumed in call order, so only hash-keyed entries
/// are deterministic under concurrent callers.
#[derive(Debug, Default)]
pub struct ScriptedProvider {
    by_hash: HashMap<String, String>,
    fallback: Mutex<VecDeque<String>>,
}

impl ScriptedProvider {
    pub fn new(fixture: Fixture) -> Self {
        Self {
            by_hash: fixture.by_hash,
            fallback: Mutex::new(fixture.fallback.into()),
        }
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, LlmError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| LlmError::Fixture(format!("{}: {e}", path.display())))?;
        let fixture: Fixture = serde_json::from_str(&text)
            .map_err(|e| LlmError::Fixture(format!("{}: {e}", path.display())))?;
        Ok(Self::new(fixture))
    }

    pub fn remaining_fallback(&self) -> usize {
        self.fallback.lock().unwrap().len()
    }
}

impl LlmProvider for ScriptedProvider {
    fn complete(&self, request: &ChatRequest) -> Result<String, LlmError> {
        let hash = prompt_hash(&request.prompt);
        if let Some(reply) = self.by_hash.get(&hash) {
            return Ok(reply.clone());
        }
        self.fallback
            .lock()
            .unwrap()
            .pop_front()
            .ok_or(LlmError::ScriptedMiss { hash })
    }
}

/// Provider backed by a closure over the prompt text.
pub struct FnProvider<F>(pub F);

impl<F> LlmProvider for FnProvider<F>
where
    F: Fn(&str) -> Result<String, LlmError> + Send + Sync,
{
    fn complete(&self, request: &ChatRequest) -> Result<String, LlmError> {
        (self.0)(&request.prompt)
    }
}

/// OpenAI-compatible `POST {base_url}/chat/completions` client.
///
/// Transport failures, timeouts, 429 and 5xx responses are retried with
/// exponential backoff up to `max_retries` times; other statuses fail at once.
#[derive(Debug, Clone)]
pub struct HttpProvider {
    base_url: String,
    model: String,
    api_key: Option<String>,
    max_retries: u32,
    initial_backoff: Duration,
    client: reqwest::blocking::Client,
}

impl HttpProvider {
    pub fn new(
        base_url: &str,
        model: &str,
        api_key: Option<String>,
        timeout: Duration,
        max_retries: u32,
    ) -> Result<Self, LlmError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        Ok(Self {
            base_url: base_url.trim_end_matches('/').to_owned(),
            model: model.to_owned(),
            api_key,
            max_retries,
            initial_backoff: Duration::from_millis(500),
            client,
        })
    }

    pub fn with_initial_backoff(mut self, backoff: Duration) -> Self {
        self.initial_backoff = backoff;
        self
    }

    fn attempt(&self, request: &ChatRequest) -> Result<String, (LlmError, bool)> {
        let body = json!({
            "model": self.model,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
        });
        let mut req = self
            .client
            .post(format!("{}/chat/completions", self.base_url))
            .json(&body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| {
            let err = if e.is_timeout() {
                LlmError::Timeout
            } else {
                LlmError::Transport(e.to_string())
            };
            (err, true)
        })?;
        let status = resp.status();
        let text = resp
            .text()
            .map_err(|e| (LlmError::Transport(e.to_string()), true))?;
        if !status.is_success() {
            let retry = status.as_u16() == 429 || status.is_server_error();
            return Err((
                LlmError::Http {
                    status: status.as_u16(),
                    body: text,
                },
                retry,
            ));
        }
        let parsed: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| (LlmError::Transport(format!("invalid JSON response: {e}")), false))?;
        parsed["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_owned)
            .ok_or_else(|| (LlmError::Transport("response has no choices[0].message.content".into()), false))
    }
}

impl LlmProvider for HttpProvider {
    fn complete(&self, request: &ChatRequest) -> Result<String, LlmError> {
        let mut delay = self.initial_backoff;
        let mut attempt = 0;
        loop {
            match self.attempt(request) {
                Ok(text) => return Ok(text),
                Err((err, retryable)) => {
                    if !retryable || attempt >= self.max_retries {
                        return Err(err);
                    }
                    log::warn!("LLM request failed ({err}); retrying in {delay:?}");
                    std::thread::sleep(delay);
                    delay *= 2;
                    attempt += 1;
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    Http,
    Scripted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    #[serde(default)]
    pub base_url: Option<String>,
    #[serde(default)]
    pub model: Option<String>,
    #[serde(default = "default_api_key_env")]
    pub api_key_env: String,
    #[serde(default)]
    pub fixture_path: Option<PathBuf>,
    #[serde(default = "default_timeout")]
    pub request_timeout_secs: u64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
}

fn default_api_key_env() -> String {
    "LLM_API_KEY".to_owned()
}

fn default_timeout() -> u64 {
    120
}

fn default_retries() -> u32 {
    3
}

impl ProviderConfig {
    pub fn scripted(fixture_path: impl Into<PathBuf>) -> Self {
        Self {
            kind: ProviderKind::Scripted,
            base_url: None,
            model: None,
            api_key_env: default_api_key_env(),
            fixture_path: Some(fixture_path.into()),
            request_timeout_secs: default_timeout(),
            max_retries: default_retries(),
        }
    }

    pub fn http(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            kind: ProviderKind::Http,
            base_url: Some(base_url.into()),
            model: Some(model.into()),
            fixture_path: None,
            ..Self::scripted("")
        }
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        match self.kind {
            ProviderKind::Http if self.base_url.is_none() || self.model.is_none() => Err(
                LlmError::Config("http provider requires base_url and model".into()),
            ),
            ProviderKind::Scripted if self.fixture_path.is_none() => Err(LlmError::Config(
                "scripted provider requires fixture_path".into(),
            )),
            _ => Ok(()),
        }
    }

    /// Build the provider. The HTTP API key is read from the environment
    /// variable named by `api_key_env`; a missing variable sends no auth.
    pub fn build(&self) -> Result<Box<dyn LlmProvider>, LlmError> {
        self.validate()?;
        Ok(match self.kind {
            ProviderKind::Http => Box::new(HttpProvider::new(
                self.base_url.as_deref().unwrap_or_default(),
                self.model.as_deref().unwrap_or_default(),
                std::env::var(&self.api_key_env).ok(),
                Duration::from_secs(self.request_timeout_secs),
                self.max_retries,
            )?),
            ProviderKind::Scripted => Box::new(ScriptedProvider::from_file(
                self.fixture_path.as_ref().expect("validated"),
            )?),
        })
    }
}
