//! Pluggable LLM generation layer.
//!
//! A [`Generate`] implementation produces one completion for a chat request.
//! Production runs use the HTTP chat-completions client wrapped in retry and
//! cache layers; tests and offline runs use the deterministic mocks.

pub mod cache;
pub mod http;
pub mod mock;
pub mod retry;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use cache::ResponseCache;
pub use retry::RetryPolicy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn new(role: Role, content: impl Into<String>) -> Self {
        ChatMessage {
            role,
            content: content.into(),
        }
    }
}

/// A request is a non-empty ordered list with at most one system message,
/// which must come first, and non-empty contents.
pub fn validate_request(messages: &[ChatMessage]) -> Result<(), BackendError> {
    if messages.is_empty() {
        return Err(BackendError::InvalidRequest("empty message list".into()));
    }
    for (idx, message) in messages.iter().enumerate() {
        if message.content.trim().is_empty() {
            return Err(BackendError::InvalidRequest(format!(
                "message {idx} has empty content"
            )));
        }
        if message.role == Role::System && idx != 0 {
            return Err(BackendError::InvalidRequest(
                "system message must be first".into(),
            ));
        }
    }
    Ok(())
}

/// Decoding parameters. The default is greedy so repeated runs are
/// deterministic; self-consistency sampling uses [`Self::self_consistency`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub temperature: f64,
    pub num_samples: u32,
    pub max_tokens: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Default for GenerationParams {
    fn default() -> Self {
        Self::greedy()
    }
}

impl GenerationParams {
    pub const DEFAULT_MAX_TOKENS: u32 = 1024;

    pub fn greedy() -> Self {
        GenerationParams {
            temperature: 0.0,
            num_samples: 1,
            max_tokens: Self::DEFAULT_MAX_TOKENS,
            seed: None,
        }
    }

    /// Temperature 0.7 with 9 samples for chain-of-thought voting.
    pub fn self_consistency() -> Self {
        GenerationParams {
            temperature: 0.7,
            num_samples: 9,
            max_tokens: Self::DEFAULT_MAX_TOKENS,
            seed: Some(0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

/// One completion plus bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct Generation {
    pub text: String,
    pub usage: Option<TokenUsage>,
    /// Set when the response came from the persistent cache.
    pub cache_hit: bool,
}

impl Generation {
    pub fn text(text: impl Into<String>) -> Self {
        Generation {
            text: text.into(),
            usage: None,
            cache_hit: false,
        }
    }
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("transport failure (request {request_digest}): {message}")]
    Transport {
        message: String,
        transient: bool,
        request_digest: String,
    },
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("malformed provider response (request {request_digest}): {message}")]
    Provider {
        message: String,
        request_digest: String,
    },
    #[error("no scripted response for request {request_digest}")]
    ScriptGap { request_digest: String },
    #[error("backend configuration error: {0}")]
    Config(String),
    #[error("retries exhausted after {attempts} attempts (request {request_digest}): {source}")]
    Exhausted {
        attempts: u32,
        request_digest: String,
        #[source]
        source: Box<BackendError>,
    },
}

impl BackendError {
    /// Transient errors are worth retrying; everything else surfaces
    /// immediately.
    pub fn is_transient(&self) -> bool {
        matches!(
            self,
            BackendError::Transport {
                transient: true,
                ..
            }
        )
    }
}

/// The generation interface every backend implements. Must be safe to call
/// from many workers concurrently.
pub trait Generate: Send + Sync {
    fn backend_id(&self) -> &str;

    /// Produces completion number `sample_index` (< `params.num_samples`)
    /// for the request. Mock backends are pure functions of
    /// `(messages, params, sample_index)`.
    fn generate(
        &self,
        messages: &[ChatMessage],
        params: &GenerationParams,
        sample_index: u32,
    ) -> Result<Generation, BackendError>;
}

impl<T: Generate + ?Sized> Generate for Arc<T> {
    fn backend_id(&self) -> &str {
        (**self).backend_id()
    }

    fn generate(
        &self,
        messages: &[ChatMessage],
        params: &GenerationParams,
        sample_index: u32,
    ) -> Result<Generation, BackendError> {
        (**self).generate(messages, params, sample_index)
    }
}

#[derive(Serialize)]
struct KeyMaterial<'a> {
    backend_id: &'a str,
    messages: &'a [ChatMessage],
    temperature: f64,
    num_samples: u32,
    max_tokens: u32,
    seed: Option<u64>,
    sample_index: u32,
}

/// Content-addressed digest of a generation request. Stable across process
/// restarts; any differing component yields a different digest.
pub fn cache_key(
    backend_id: &str,
    messages: &[ChatMessage],
    params: &GenerationParams,
    sample_index: u32,
) -> String {
    let material = KeyMaterial {
        backend_id,
        messages,
        temperature: params.temperature,
        num_samples: params.num_samples,
        max_tokens: params.max_tokens,
        seed: params.seed,
        sample_index,
    };
    let bytes = serde_json::to_vec(&material).expect("key material serializes");
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    hex::encode(hasher.finalize())
}

/// A wrapper that counts delegated generate calls. Used to verify protocol
/// call-count exactness.
pub struct CountingBackend<B> {
    inner: B,
    calls: AtomicU64,
}

impl<B: Generate> CountingBackend<B> {
    pub fn new(inner: B) -> Self {
        CountingBackend {
            inner,
            calls: AtomicU64::new(0),
        }
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn reset(&self) {
        self.calls.store(0, Ordering::SeqCst);
    }
}

impl<B: Generate> Generate for CountingBackend<B> {
    fn backend_id(&self) -> &str {
        self.inner.backend_id()
    }

    fn generate(
        &self,
        messages: &[ChatMessage],
        params: &GenerationParams,
        sample_index: u32,
    ) -> Result<Generation, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.generate(messages, params, sample_index)
    }
}

/// How a backend is constructed. Secrets stay in the environment: the
/// descriptor only names the variable, so serialized configs and records
/// never contain credentials.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendKind {
    HttpChat {
        endpoint: String,
        model: String,
        #[serde(default)]
        api_key_env: Option<String>,
        #[serde(default = "default_timeout_secs")]
        timeout_secs: u64,
    },
    MockScripted {
        #[serde(default)]
        by_digest: BTreeMap<String, String>,
        #[serde(default)]
        rules: Vec<ScriptRule>,
    },
    MockRule { rule: mock::JudgeRule },
}

fn default_timeout_secs() -> u64 {
    120
}

/// One substring-match rule of a scripted mock; first match wins.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScriptRule {
    pub contains: String,
    pub response: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BackendDescriptor {
    pub backend_id: String,
    #[serde(flatten)]
    pub kind: BackendKind,
    #[serde(default)]
    pub retry: Option<RetryPolicy>,
    /// Per-backend cap on concurrent in-flight requests.
    #[serde(default)]
    pub max_in_flight: Option<usize>,
}

impl BackendDescriptor {
    /// Builds the backend, resolving credentials from the environment and
    /// wiring gold-label lookups for the oracle mocks.
    pub fn build(
        &self,
        datasets: &[crate::data::Dataset],
    ) -> Result<Box<dyn Generate>, BackendError> {
        let base: Box<dyn Generate> = match &self.kind {
            BackendKind::HttpChat {
                endpoint,
                model,
                api_key_env,
                timeout_secs,
            } => Box::new(http::HttpChatBackend::new(
                &self.backend_id,
                endpoint,
                model,
                api_key_env.as_deref(),
                *timeout_secs,
            )?),
            BackendKind::MockScripted { by_digest, rules } => Box::new(
                mock::ScriptedBackend::new(&self.backend_id, by_digest.clone(), rules.clone()),
            ),
            BackendKind::MockRule { rule } => Box::new(mock::MockJudge::from_rule(
                &self.backend_id,
                rule.clone(),
                datasets,
            )),
        };
        Ok(match &self.retry {
            Some(policy) => Box::new(retry::RetryingBackend::new(base, policy.clone())),
            None => base,
        })
    }
}

impl fmt::Debug for dyn Generate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Generate({})", self.backend_id())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn msgs() -> Vec<ChatMessage> {
        vec![
            ChatMessage::new(Role::System, "sys"),
            ChatMessage::new(Role::User, "hello"),
        ]
    }

    #[test]
    fn cache_key_is_stable_and_component_sensitive() {
        let params = GenerationParams::greedy();
        let a = cache_key("b1", &msgs(), &params, 0);
        let b = cache_key("b1", &msgs(), &params, 0);
        assert_eq!(a, b);
        assert_ne!(a, cache_key("b1", &msgs(), &params, 1));
        assert_ne!(a, cache_key("b2", &msgs(), &params, 0));
        let warm = GenerationParams {
            temperature: 0.7,
            ..GenerationParams::greedy()
        };
        assert_ne!(a, cache_key("b1", &msgs(), &warm, 0));
    }

    #[test]
    fn request_validation() {
        assert!(validate_request(&msgs()).is_ok());
        assert!(validate_request(&[]).is_err());
        assert!(validate_request(&[ChatMessage::new(Role::User, "  ")]).is_err());
        assert!(validate_request(&[
            ChatMessage::new(Role::User, "x"),
            ChatMessage::new(Role::System, "late"),
        ])
        .is_err());
    }

    #[test]
    fn descriptor_round_trips_without_secrets() {
        let descriptor = BackendDescriptor {
            backend_id: "api".into(),
            kind: BackendKind::HttpChat {
                endpoint: "https://example.test/v1/chat/completions".into(),
                model: "judge-1".into(),
                api_key_env: Some("JUDGE_API_KEY".into()),
                timeout_secs: 30,
            },
            retry: None,
            max_in_flight: Some(4),
        };
        let json = serde_json::to_string(&descriptor).unwrap();
        assert!(!json.to_lowercase().contains("secret"));
        assert!(json.contains("JUDGE_API_KEY"));
        let back: BackendDescriptor = serde_json::from_str(&json).unwrap();
        assert_eq!(back.backend_id, "api");
    }
}
