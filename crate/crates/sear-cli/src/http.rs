//! Wire-compatible chat-completions client.
//!
//! Speaks the de-facto chat JSON contract: POST `{model, messages,
//! temperature, max_tokens}` to `{baseUrl}/chat/completions` with a bearer
//! credential, parse `choices[0].message.content`. Timeouts and 5xx are
//! retried with exponential backoff (base 250 ms, ×2 per attempt, ±20%
//! jitter); 4xx fail immediately. The jitter is derived from the attempt
//! number, so retry schedules are reproducible.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use sear_core::backends::{BackendError, ChatRequest, ChatRole, DialogueBackend};
use sear_core::hash::fnv1a64;

use crate::config::HttpBackendConfig;

#[derive(Serialize)]
struct WireChatMessage<'a> {
    role: &'static str,
    content: &'a str,
}

#[derive(Serialize)]
struct WireChatRequest<'a> {
    model: &'a str,
    messages: Vec<WireChatMessage<'a>>,
    temperature: f64,
    max_tokens: u32,
}

#[derive(Deserialize)]
struct WireChatResponse {
    choices: Vec<WireChoice>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireMessageBody,
}

#[derive(Deserialize)]
struct WireMessageBody {
    content: Option<String>,
}

/// Blocking chat client with the retry contract above. Safe for concurrent
/// calls; the agent pools connections internally.
pub struct HttpChatBackend {
    config: HttpBackendConfig,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl HttpChatBackend {
    /// Build a client, resolving the credential from the environment
    /// variable named by `apiKeyRef` (when configured).
    pub fn new(config: HttpBackendConfig) -> Result<HttpChatBackend, BackendError> {
        let api_key = match &config.api_key_ref {
            Some(reference) => Some(std::env::var(reference).map_err(|_| {
                BackendError::Unavailable(format!(
                    "credential environment variable '{reference}' is not set"
                ))
            })?),
            None => None,
        };
        let agent_config = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(config.timeout_ms)))
            .http_status_as_error(false)
            .build();
        Ok(HttpChatBackend { config, api_key, agent: agent_config.into() })
    }

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'))
    }

    /// Backoff before retry `attempt` (1-based): base × 2^(attempt−1),
    /// jittered ±20% deterministically from the attempt number.
    pub fn backoff_delay(&self, attempt: u32) -> Duration {
        let base = self.config.backoff_base_ms as f64 * 2f64.powi(attempt as i32 - 1);
        let jitter_units = (fnv1a64(&attempt.to_le_bytes()) % 2001) as f64;
        let factor = 0.8 + 0.4 * jitter_units / 2000.0;
        Duration::from_millis((base * factor) as u64)
    }

    fn send_once(&self, body: &WireChatRequest<'_>) -> Result<String, RetryClass> {
        let mut request = self.agent.post(self.endpoint()).header("content-type", "application/json");
        if let Some(key) = &self.api_key {
            request = request.header("authorization", format!("Bearer {key}"));
        }
        let mut response = match request.send_json(body) {
            Ok(response) => response,
            Err(ureq::Error::Timeout(_)) => {
                return Err(RetryClass::Retryable("request timed out".to_string()))
            }
            Err(e) => return Err(RetryClass::Fatal(BackendError::Unavailable(e.to_string()))),
        };
        let status = response.status().as_u16();
        if (500..600).contains(&status) {
            return Err(RetryClass::Retryable(format!("server returned {status}")));
        }
        if status >= 400 {
            let message = response.body_mut().read_to_string().unwrap_or_default();
            return Err(RetryClass::Fatal(BackendError::Request { status, message }));
        }
        let parsed: WireChatResponse = response
            .body_mut()
            .read_json()
            .map_err(|e| RetryClass::Fatal(BackendError::Protocol(e.to_string())))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|choice| choice.message.content)
            .ok_or_else(|| {
                RetryClass::Fatal(BackendError::Protocol(
                    "response is missing choices[0].message.content".to_string(),
                ))
            })
    }
}

enum RetryClass {
    Retryable(String),
    Fatal(BackendError),
}

impl DialogueBackend for HttpChatBackend {
    fn complete(&self, request: &ChatRequest) -> Result<String, BackendError> {
        let messages: Vec<WireChatMessage<'_>> = request
            .turns
            .iter()
            .map(|turn| WireChatMessage {
                role: match turn.role {
                    ChatRole::System => "system",
                    ChatRole::User => "user",
                    ChatRole::Assistant => "assistant",
                },
                content: &turn.content,
            })
            .collect();
        let body = WireChatRequest {
            model: &self.config.model,
            messages,
            temperature: request.temperature,
            max_tokens: request.max_tokens,
        };

        let mut last_retryable = String::new();
        for attempt in 1..=self.config.max_attempts.max(1) {
            match self.send_once(&body) {
                Ok(content) => return Ok(content),
                Err(RetryClass::Fatal(error)) => return Err(error),
                Err(RetryClass::Retryable(message)) => {
                    last_retryable = message;
                    if attempt < self.config.max_attempts {
                        std::thread::sleep(self.backoff_delay(attempt));
                    }
                }
            }
        }
        Err(BackendError::Unavailable(format!(
            "retries exhausted after {} attempt(s): {last_retryable}",
            self.config.max_attempts.max(1)
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backoff_doubles_with_bounded_jitter() {
        let backend = HttpChatBackend::new(HttpBackendConfig {
            backoff_base_ms: 250,
            ..HttpBackendConfig::default()
        })
        .unwrap();
        let first = backend.backoff_delay(1).as_millis() as f64;
        let second = backend.backoff_delay(2).as_millis() as f64;
        let third = backend.backoff_delay(3).as_millis() as f64;
        assert!((200.0..=300.0).contains(&first), "{first}");
        assert!((400.0..=600.0).contains(&second), "{second}");
        assert!((800.0..=1200.0).contains(&third), "{third}");
        // Deterministic schedule.
        assert_eq!(backend.backoff_delay(2), backend.backoff_delay(2));
    }

    #[test]
    fn missing_credential_env_is_reported() {
        let result = HttpChatBackend::new(HttpBackendConfig {
            api_key_ref: Some("SEAR_TEST_DOES_NOT_EXIST".to_string()),
            ..HttpBackendConfig::default()
        });
        assert!(matches!(result, Err(BackendError::Unavailable(_))));
    }
}
