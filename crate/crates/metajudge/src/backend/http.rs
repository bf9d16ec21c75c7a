//! HTTP chat-completions client.
//!
//! Speaks the ubiquitous chat-completions wire shape: a `messages` array
//! plus `temperature`, `n`, and `max_tokens`. Provider specifics stay in the
//! descriptor (endpoint URL, model name, credential env var). Each call
//! requests a single completion; `sample_index` feeds the seed so samples
//! stay distinguishable and cacheable.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{
    cache_key, BackendError, ChatMessage, Generate, Generation, GenerationParams, Role,
    TokenUsage,
};

pub struct HttpChatBackend {
    id: String,
    endpoint: String,
    model: String,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
}

impl HttpChatBackend {
    pub fn new(
        id: &str,
        endpoint: &str,
        model: &str,
        api_key_env: Option<&str>,
        timeout_secs: u64,
    ) -> Result<HttpChatBackend, BackendError> {
        let api_key = match api_key_env {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                BackendError::Config(format!(
                    "backend `{id}`: credential variable `{var}` is not set"
                ))
            })?),
            None => None,
        };
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(timeout_secs))
            .build()
            .map_err(|e| BackendError::Config(format!("http client: {e}")))?;
        Ok(HttpChatBackend {
            id: id.to_string(),
            endpoint: endpoint.to_string(),
            model: model.to_string(),
            api_key,
            client,
        })
    }
}

fn role_name(role: Role) -> &'static str {
    match role {
        Role::System => "system",
        Role::User => "user",
        Role::Assistant => "assistant",
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
    #[serde(default)]
    usage: Option<WireUsage>,
}

#[derive(Debug, Serialize, Deserialize)]
struct WireChoice {
    message: WireMessage,
}

#[derive(Debug, Serialize, Deserialize)]
struct WireMessage {
    content: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct WireUsage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

impl Generate for HttpChatBackend {
    fn backend_id(&self) -> &str {
        &self.id
    }

    fn generate(
        &self,
        messages: &[ChatMessage],
        params: &GenerationParams,
        sample_index: u32,
    ) -> Result<Generation, BackendError> {
        super::validate_request(messages)?;
        let digest = cache_key(&self.id, messages, params, sample_index);
        let wire_messages: Vec<_> = messages
            .iter()
            .map(|m| json!({"role": role_name(m.role), "content": m.content}))
            .collect();
        let mut body = json!({
            "model": self.model,
            "messages": wire_messages,
            "temperature": params.temperature,
            "n": 1,
            "max_tokens": params.max_tokens,
        });
        if let Some(seed) = params.seed {
            body["seed"] = json!(seed + u64::from(sample_index));
        }

        let mut request = self.client.post(&self.endpoint).json(&body);
        if let Some(key) = &self.api_key {
            request = request.bearer_auth(key);
        }
        let response = request.send().map_err(|e| BackendError::Transport {
            message: e.to_string(),
            transient: e.is_timeout() || e.is_connect(),
            request_digest: digest.clone(),
        })?;

        let status = response.status();
        if status.as_u16() == 401 || status.as_u16() == 403 {
            return Err(BackendError::Auth(format!(
                "backend `{}`: status {status}",
                self.id
            )));
        }
        if !status.is_success() {
            let transient = status.is_server_error() || status.as_u16() == 429;
            let text = response.text().unwrap_or_default();
            return Err(BackendError::Transport {
                message: format!("status {status}: {}", truncate(&text, 300)),
                transient,
                request_digest: digest,
            });
        }

        let parsed: WireResponse = response.json().map_err(|e| BackendError::Provider {
            message: e.to_string(),
            request_digest: digest.clone(),
        })?;
        let choice = parsed
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| BackendError::Provider {
                message: "response has no choices".into(),
                request_digest: digest.clone(),
            })?;
        let text = choice.message.content.ok_or_else(|| BackendError::Provider {
            message: "choice has no content".into(),
            request_digest: digest,
        })?;
        Ok(Generation {
            text,
            usage: parsed.usage.map(|u| TokenUsage {
                prompt_tokens: u.prompt_tokens,
                completion_tokens: u.completion_tokens,
            }),
            cache_hit: false,
        })
    }
}

fn truncate(text: &str, limit: usize) -> &str {
    match text.char_indices().nth(limit) {
        Some((idx, _)) => &text[..idx],
        None => text,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wire_response_parses() {
        let body = r#"{"choices":[{"message":{"content":"Output (a)"}}],"usage":{"prompt_tokens":10,"completion_tokens":3}}"#;
        let parsed: WireResponse = serde_json::from_str(body).unwrap();
        assert_eq!(parsed.choices[0].message.content.as_deref(), Some("Output (a)"));
        assert_eq!(parsed.usage.as_ref().unwrap().completion_tokens, 3);
    }

    #[test]
    fn missing_credential_is_a_config_error() {
        let err = HttpChatBackend::new(
            "b",
            "https://example.test/v1/chat/completions",
            "judge",
            Some("METAJUDGE_UNSET_TEST_KEY"),
            5,
        )
        .unwrap_err();
        assert!(matches!(err, BackendError::Config(_)));
    }
}
