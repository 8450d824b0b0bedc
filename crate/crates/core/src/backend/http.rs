//! Completion client for the internal wire protocol:
//! `POST {"model", "prompt", "temperature", "max_tokens", "stop"?}` → `{"text"}`.

use std::fmt;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{BackendError, Completer, CompletionRequest};

/// Bounded exponential backoff.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub attempts: u32,
    #[serde(with = "millis")]
    pub base_delay: Duration,
    #[serde(with = "millis")]
    pub timeout: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            attempts: 3,
            base_delay: Duration::from_millis(500),
            timeout: Duration::from_secs(60),
        }
    }
}

impl RetryPolicy {
    /// Sleep before attempt `attempt` (1-based); none before the first.
    pub fn delay_before(&self, attempt: u32) -> Duration {
        if attempt <= 1 {
            Duration::ZERO
        } else {
            self.base_delay * 2u32.saturating_pow(attempt - 2)
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

/// API key read from the environment. Never printed.
#[derive(Clone)]
pub struct Secret(String);

impl Secret {
    pub fn new(value: impl Into<String>) -> Self {
        Self(value.into())
    }

    fn expose(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for Secret {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Secret(***)")
    }
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    prompt: &'a str,
    temperature: f64,
    max_tokens: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    stop: Option<&'a [String]>,
}

#[derive(Deserialize)]
struct WireResponse {
    text: String,
}

enum Attempt {
    Retry(BackendError),
    Fail(BackendError),
}

#[derive(Debug)]
pub struct HttpCompleter {
    endpoint: String,
    key: Option<Secret>,
    retry: RetryPolicy,
    agent: ureq::Agent,
}

impl HttpCompleter {
    pub fn new(endpoint: impl Into<String>, key: Option<Secret>, retry: RetryPolicy) -> Self {
        let agent = ureq::AgentBuilder::new().timeout(retry.timeout).build();
        Self {
            endpoint: endpoint.into(),
            key,
            retry,
            agent,
        }
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    fn attempt(&self, body: &WireRequest<'_>, attempt: u32) -> Result<String, Attempt> {
        let mut req = self
            .agent
            .post(&self.endpoint)
            .set("Content-Type", "application/json");
        if let Some(key) = &self.key {
            req = req.set("Authorization", &format!("Bearer {}", key.expose()));
        }
        match req.send_json(body) {
            Ok(resp) => {
                let text = resp.into_string().map_err(|e| {
                    Attempt::Retry(BackendError::Transport {
                        attempts: attempt,
                        message: e.to_string(),
                    })
                })?;
                serde_json::from_str::<WireResponse>(&text)
                    .map(|r| r.text)
                    .map_err(|e| Attempt::Fail(BackendError::MalformedResponse(e.to_string())))
            }
            Err(ureq::Error::Status(429, _)) => {
                Err(Attempt::Retry(BackendError::RateLimited { attempts: attempt }))
            }
            Err(ureq::Error::Status(status, resp)) => {
                let err = BackendError::Status {
                    status,
                    body: resp.into_string().unwrap_or_default(),
                    attempts: attempt,
                };
                if status >= 500 {
                    Err(Attempt::Retry(err))
                } else {
                    Err(Attempt::Fail(err))
                }
            }
            Err(ureq::Error::Transport(t)) => Err(Attempt::Retry(BackendError::Transport {
                attempts: attempt,
                message: t.to_string(),
            })),
        }
    }
}

impl Completer for HttpCompleter {
    fn complete(&self, request: &CompletionRequest) -> Result<String, BackendError> {
        let body = WireRequest {
            model: &request.model_id,
            prompt: &request.prompt,
            temperature: request.temperature,
            max_tokens: request.max_tokens,
            stop: request.stop.as_deref(),
        };
        let attempts = self.retry.attempts.max(1);
        let mut last = None;
        for attempt in 1..=attempts {
            thread::sleep(self.retry.delay_before(attempt));
            match self.attempt(&body, attempt) {
                Ok(text) => return Ok(text),
                Err(Attempt::Fail(e)) => return Err(e),
                Err(Attempt::Retry(e)) => {
                    log::debug!("{}: attempt {attempt}/{attempts} failed: {e}", self.endpoint);
                    last = Some(e);
                }
            }
        }
        Err(last.expect("at least one attempt ran"))
    }
}
