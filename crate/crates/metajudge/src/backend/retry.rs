//! Retry with backoff for transient backend failures.

use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{BackendError, ChatMessage, Generate, Generation, GenerationParams};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    /// Sleep before attempt `k+1` is `backoff_ms[min(k, len-1)]`.
    #[serde(default)]
    pub backoff_ms: Vec<u64>,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 3,
            backoff_ms: vec![500, 2000, 8000],
        }
    }
}

impl RetryPolicy {
    pub fn no_backoff(max_attempts: u32) -> Self {
        RetryPolicy {
            max_attempts,
            backoff_ms: Vec::new(),
        }
    }

    fn delay(&self, attempt: u32) -> Option<Duration> {
        if self.backoff_ms.is_empty() {
            return None;
        }
        let idx = (attempt as usize).min(self.backoff_ms.len() - 1);
        Some(Duration::from_millis(self.backoff_ms[idx]))
    }
}

/// Outcome of [`with_retry`]: the response plus how many attempts it took.
#[derive(Debug)]
pub struct Attempted<T> {
    pub value: T,
    pub attempts: u32,
}

/// Runs `op` up to `policy.max_attempts` times, retrying only transient
/// failures. Non-transient errors surface immediately; exhaustion wraps the
/// last cause together with the request digest for resumption.
pub fn with_retry<T>(
    policy: &RetryPolicy,
    request_digest: &str,
    mut op: impl FnMut() -> Result<T, BackendError>,
) -> Result<Attempted<T>, BackendError> {
    assert!(policy.max_attempts >= 1, "max_attempts must be >= 1");
    let mut last: Option<BackendError> = None;
    for attempt in 0..policy.max_attempts {
        match op() {
            Ok(value) => {
                return Ok(Attempted {
                    value,
                    attempts: attempt + 1,
                })
            }
            Err(e) if e.is_transient() => {
                last = Some(e);
                if attempt + 1 < policy.max_attempts {
                    if let Some(delay) = policy.delay(attempt) {
                        thread::sleep(delay);
                    }
                }
            }
            Err(e) => return Err(e),
        }
    }
    Err(BackendError::Exhausted {
        attempts: policy.max_attempts,
        request_digest: request_digest.to_string(),
        source: Box::new(last.expect("at least one attempt ran")),
    })
}

/// A backend wrapper applying a retry policy around every generate call.
/// Retried requests reuse the same cache key, so a success after retries
/// writes exactly one cache entry.
pub struct RetryingBackend<B> {
    inner: B,
    policy: RetryPolicy,
}

impl<B: Generate> RetryingBackend<B> {
    pub fn new(inner: B, policy: RetryPolicy) -> Self {
        RetryingBackend { inner, policy }
    }
}

impl<B: Generate> Generate for RetryingBackend<B> {
    fn backend_id(&self) -> &str {
        self.inner.backend_id()
    }

    fn generate(
        &self,
        messages: &[ChatMessage],
        params: &GenerationParams,
        sample_index: u32,
    ) -> Result<Generation, BackendError> {
        let digest = super::cache_key(self.backend_id(), messages, params, sample_index);
        with_retry(&self.policy, &digest, || {
            self.inner.generate(messages, params, sample_index)
        })
        .map(|attempted| attempted.value)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicU32, Ordering};

    fn transient() -> BackendError {
        BackendError::Transport {
            message: "timeout".into(),
            transient: true,
            request_digest: "d".into(),
        }
    }

    #[test]
    fn transient_then_success() {
        let calls = AtomicU32::new(0);
        let result = with_retry(&RetryPolicy::no_backoff(3), "d", || {
            if calls.fetch_add(1, Ordering::SeqCst) == 0 {
                Err(transient())
            } else {
                Ok(42)
            }
        })
        .unwrap();
        assert_eq!(result.value, 42);
        assert_eq!(result.attempts, 2);
    }

    #[test]
    fn auth_failure_is_immediate() {
        let calls = AtomicU32::new(0);
        let err = with_retry(&RetryPolicy::no_backoff(5), "d", || {
            calls.fetch_add(1, Ordering::SeqCst);
            Err::<(), _>(BackendError::Auth("bad key".into()))
        })
        .unwrap_err();
        assert!(matches!(err, BackendError::Auth(_)));
        assert_eq!(calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn exhaustion_wraps_last_cause() {
        let err = with_retry(&RetryPolicy::no_backoff(3), "digest-x", || {
            Err::<(), _>(transient())
        })
        .unwrap_err();
        match err {
            BackendError::Exhausted {
                attempts,
                request_digest,
                source,
            } => {
                assert_eq!(attempts, 3);
                assert_eq!(request_digest, "digest-x");
                assert!(source.is_transient());
            }
            other => panic!("expected Exhausted, got {other:?}"),
        }
    }
}
