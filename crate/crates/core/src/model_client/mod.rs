//! Minimal chat-completion client.
//!
//! Speaks the common JSON shape: the request carries `model`, `messages`,
//! `temperature` and `max_tokens`; the reply's text is read from
//! `choices[0].message.content`. Completions are cached on disk under the
//! hex SHA-256 of the serialized request, so any change to the request
//! changes the key.

pub mod mock;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use log::{debug, warn};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("service unavailable after {attempts} attempt(s): {last_error}")]
    ServiceUnavailable { attempts: u32, last_error: String },
    #[error("request rejected with status {status}: {body}")]
    Rejected { status: u16, body: String },
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("cache error at {path}: {source}")]
    Cache {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            content: content.into(),
        }
    }
}

/// A chat request; serializes directly to the wire body.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    #[serde(rename = "model")]
    pub model_name: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    #[serde(rename = "max_tokens")]
    pub max_output_tokens: u32,
}

impl ChatRequest {
    pub fn validate(&self) -> Result<(), ClientError> {
        if self.messages.is_empty() {
            return Err(ClientError::InvalidRequest("at least one message is required".into()));
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(ClientError::InvalidRequest(format!(
                "temperature must be >= 0, got {}",
                self.temperature
            )));
        }
        if self.max_output_tokens == 0 {
            return Err(ClientError::InvalidRequest("max_output_tokens must be > 0".into()));
        }
        Ok(())
    }

    /// Hex SHA-256 of the serialized request. Field order is fixed by the
    /// struct, so equal requests always hash equally.
    pub fn cache_key(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("request serializes");
        hex::encode(Sha256::digest(bytes))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClientConfig {
    pub endpoint_url: String,
    /// Name of the environment variable holding the bearer token.
    pub token_env: Option<String>,
    pub retry_max: u32,
    #[serde(with = "millis")]
    pub backoff_base: Duration,
    #[serde(with = "millis")]
    pub timeout: Duration,
    pub cache_dir: Option<PathBuf>,
}

impl Default for ClientConfig {
    fn default() -> Self {
        Self {
            endpoint_url: "http://127.0.0.1:8000/v1/chat/completions".into(),
            token_env: Some("RAR_API_TOKEN".into()),
            retry_max: 3,
            backoff_base: Duration::from_millis(500),
            timeout: Duration::from_secs(120),
            cache_dir: None,
        }
    }
}

mod millis {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        u64::deserialize(d).map(Duration::from_millis)
    }
}

/// Delay before retry `k` (0-based) is `base · 2^k`; one entry per retry.
pub fn backoff_schedule(base: Duration, retry_max: u32) -> Vec<Duration> {
    (0..retry_max)
        .map(|k| base.saturating_mul(1u32.checked_shl(k).unwrap_or(u32::MAX)))
        .collect()
}

/// Anything that turns a chat request into completion text.
pub trait ChatService: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<String, ClientError>;
}

impl<F> ChatService for F
where
    F: Fn(&ChatRequest) -> Result<String, ClientError> + Send + Sync,
{
    fn complete(&self, request: &ChatRequest) -> Result<String, ClientError> {
        self(request)
    }
}

#[derive(Debug, Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
}

#[derive(Debug, Deserialize)]
struct WireChoice {
    message: WireMessage,
}

#[derive(Debug, Deserialize)]
struct WireMessage {
    content: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct CacheEntry {
    content: String,
}

/// Parses a completion body and returns `choices[0].message.content`.
pub fn parse_completion(body: &str) -> Result<String, ClientError> {
    let wire: WireResponse =
        serde_json::from_str(body).map_err(|e| ClientError::MalformedResponse(e.to_string()))?;
    wire.choices
        .into_iter()
        .next()
        .map(|c| c.message.content)
        .ok_or_else(|| ClientError::MalformedResponse("empty choices".into()))
}

enum Attempt {
    Done(String),
    Transient(String),
}

/// HTTP client with retries and an optional on-disk cache. Shareable across
/// threads; callers bound the number of in-flight requests.
pub struct ChatClient {
    config: ClientConfig,
    agent: ureq::Agent,
    token: Option<String>,
    network_calls: AtomicUsize,
    cache_hits: AtomicUsize,
    sleep: fn(Duration),
}

impl ChatClient {
    pub fn new(config: ClientConfig) -> Self {
        let agent_config = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build();
        let token = config
            .token_env
            .as_deref()
            .and_then(|name| std::env::var(name).ok())
            .filter(|t| !t.is_empty());
        Self {
            agent: ureq::Agent::new_with_config(agent_config),
            token,
            config,
            network_calls: AtomicUsize::new(0),
            cache_hits: AtomicUsize::new(0),
            sleep: std::thread::sleep,
        }
    }

    /// Replaces the sleep used between retries (tests pass a no-op).
    pub fn with_sleep(mut self, sleep: fn(Duration)) -> Self {
        self.sleep = sleep;
        self
    }

    pub fn config(&self) -> &ClientConfig {
        &self.config
    }

    /// HTTP requests sent so far, retries included.
    pub fn network_calls(&self) -> usize {
        self.network_calls.load(Ordering::Relaxed)
    }

    pub fn cache_hits(&self) -> usize {
        self.cache_hits.load(Ordering::Relaxed)
    }

    fn cache_path(&self, key: &str) -> Option<PathBuf> {
        self.config.cache_dir.as_ref().map(|d| d.join(format!("{key}.json")))
    }

    fn read_cache(path: &Path) -> Option<String> {
        let text = fs::read_to_string(path).ok()?;
        match serde_json::from_str::<CacheEntry>(&text) {
            Ok(entry) => Some(entry.content),
            Err(e) => {
                warn!("ignoring unreadable cache entry {}: {e}", path.display());
                None
            }
        }
    }

    fn write_cache(path: &Path, content: &str) -> Result<(), ClientError> {
        let wrap = |source| ClientError::Cache {
            path: path.to_path_buf(),
            source,
        };
        let dir = path.parent().expect("cache file has a parent");
        fs::create_dir_all(dir).map_err(wrap)?;
        let body = serde_json::to_vec(&CacheEntry {
            content: content.to_string(),
        })
        .expect("cache entry serializes");
        let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(wrap)?;
        tmp.write_all(&body).map_err(wrap)?;
        tmp.persist(path).map_err(|e| wrap(e.error))?;
        Ok(())
    }

    fn attempt(&self, request: &ChatRequest) -> Result<Attempt, ClientError> {
        self.network_calls.fetch_add(1, Ordering::Relaxed);
        let mut call = self.agent.post(&self.config.endpoint_url);
        if let Some(token) = &self.token {
            call = call.header("Authorization", format!("Bearer {token}"));
        }
        let mut response = match call.send_json(request) {
            Ok(r) => r,
            Err(e) => return Ok(Attempt::Transient(e.to_string())),
        };
        let status = response.status().as_u16();
        let body = match response.body_mut().read_to_string() {
            Ok(b) => b,
            Err(e) => return Ok(Attempt::Transient(e.to_string())),
        };
        match status {
            200..=299 => parse_completion(&body).map(Attempt::Done),
            408 | 429 | 500..=599 => Ok(Attempt::Transient(format!("status {status}"))),
            _ => Err(ClientError::Rejected { status, body }),
        }
    }
}

impl ChatService for ChatClient {
    fn complete(&self, request: &ChatRequest) -> Result<String, ClientError> {
        request.validate()?;
        let cache_path = self.cache_path(&request.cache_key());
        if let Some(content) = cache_path.as_deref().and_then(Self::read_cache) {
            self.cache_hits.fetch_add(1, Ordering::Relaxed);
            return Ok(content);
        }
        let delays = backoff_schedule(self.config.backoff_base, self.config.retry_max);
        let mut last_error = String::new();
        for attempt in 0..=self.config.retry_max {
            if attempt > 0 {
                let delay = delays[attempt as usize - 1];
                debug!("retry {attempt} after {delay:?}: {last_error}");
                (self.sleep)(delay);
            }
            match self.attempt(request)? {
                Attempt::Done(content) => {
                    if let Some(path) = &cache_path {
                        Self::write_cache(path, &content)?;
                    }
                    return Ok(content);
                }
                Attempt::Transient(e) => last_error = e,
            }
        }
        Err(ClientError::ServiceUnavailable {
            attempts: self.config.retry_max + 1,
            last_error,
        })
    }
}
