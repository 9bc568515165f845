use std::sync::Mutex;
use std::time::{Duration, Instant};

use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{BackendKind, ClientError, Completion, ModelBackend, ModelRequest, Usage, VisualPayload};

fn default_timeout_s() -> u64 {
    120
}
fn default_max_retries() -> u32 {
    5
}
fn default_backoff_base_ms() -> u64 {
    500
}
fn default_backoff_max_ms() -> u64 {
    30_000
}

/// Chat-completion endpoint settings. Secrets come from the environment
/// variable named by `api_key_env`, never from the file itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RemoteConfig {
    /// Full URL of the chat-completions route.
    pub endpoint: String,
    pub model: String,
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default)]
    pub max_tokens: Option<u32>,
    #[serde(default = "default_timeout_s")]
    pub timeout_s: u64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_backoff_base_ms")]
    pub backoff_base_ms: u64,
    #[serde(default = "default_backoff_max_ms")]
    pub backoff_max_ms: u64,
    #[serde(default)]
    pub requests_per_minute: Option<u32>,
    /// Requests whose JSON body exceeds this are rejected before sending.
    #[serde(default)]
    pub max_payload_bytes: Option<usize>,
}

impl RemoteConfig {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            model: model.into(),
            api_key_env: None,
            temperature: 0.0,
            max_tokens: None,
            timeout_s: default_timeout_s(),
            max_retries: default_max_retries(),
            backoff_base_ms: default_backoff_base_ms(),
            backoff_max_ms: default_backoff_max_ms(),
            requests_per_minute: None,
            max_payload_bytes: None,
        }
    }
}

/// Delay before retry number `attempt` (0-based). A server-provided
/// `Retry-After` wins over the exponential schedule.
pub fn backoff_delay(attempt: u32, base_ms: u64, max_ms: u64, retry_after: Option<Duration>) -> Duration {
    if let Some(d) = retry_after {
        return d.min(Duration::from_millis(max_ms.max(base_ms)));
    }
    let exp = base_ms.saturating_mul(1u64 << attempt.min(20));
    Duration::from_millis(exp.min(max_ms))
}

type Sleeper = Box<dyn Fn(Duration) + Send + Sync>;

pub struct RemoteHttpBackend {
    id: String,
    config: RemoteConfig,
    api_key: Option<String>,
    agent: ureq::Agent,
    next_slot: Mutex<Option<Instant>>,
    sleeper: Sleeper,
}

enum Attempt {
    Done(Completion),
    Retry { error: ClientError, retry_after: Option<Duration> },
    Fail(ClientError),
}

impl RemoteHttpBackend {
    pub fn new(id: impl Into<String>, config: RemoteConfig) -> Result<Self, ClientError> {
        let api_key = match &config.api_key_env {
            Some(var) => Some(
                std::env::var(var).map_err(|_| ClientError::Config(format!("environment variable {var} is not set")))?,
            ),
            None => None,
        };
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_s)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self {
            id: id.into(),
            config,
            api_key,
            agent,
            next_slot: Mutex::new(None),
            sleeper: Box::new(std::thread::sleep),
        })
    }

    /// Replace the sleep used for backoff and rate limiting.
    pub fn with_sleeper(mut self, sleeper: impl Fn(Duration) + Send + Sync + 'static) -> Self {
        self.sleeper = Box::new(sleeper);
        self
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.config
    }

    pub fn request_body(&self, prompt: &str, payload: &VisualPayload) -> Result<Value, ClientError> {
        let mut content = vec![json!({"type": "text", "text": prompt})];
        match payload {
            VisualPayload::Frames { frames, .. } => {
                for f in frames {
                    let path = f.image.as_ref().ok_or_else(|| {
                        ClientError::Config("frames carry no image files; extract frames before a remote run".into())
                    })?;
                    let bytes = std::fs::read(path).map_err(|source| ClientError::Io {
                        path: path.clone(),
                        source,
                    })?;
                    let mime = match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
                        Some("png") => "image/png",
                        Some("ppm") => "image/x-portable-pixmap",
                        _ => "image/jpeg",
                    };
                    let b64 = base64::engine::general_purpose::STANDARD.encode(bytes);
                    content.push(json!({"type": "image_url", "image_url": {"url": format!("data:{mime};base64,{b64}")}}));
                }
            }
            VisualPayload::Media { uri, .. } => {
                content.push(json!({"type": "video_url", "video_url": {"url": uri}}));
            }
        }
        let mut body = json!({
            "model": self.config.model,
            "temperature": self.config.temperature,
            "messages": [{"role": "user", "content": content}],
        });
        if let Some(m) = self.config.max_tokens {
            body["max_tokens"] = json!(m);
        }
        Ok(body)
    }

    fn wait_for_slot(&self) {
        let Some(rpm) = self.config.requests_per_minute.filter(|r| *r > 0) else {
            return;
        };
        let interval = Duration::from_secs_f64(60.0 / rpm as f64);
        let wait = {
            let mut slot = self.next_slot.lock().unwrap_or_else(|e| e.into_inner());
            let now = Instant::now();
            let start = slot.map_or(now, |s| s.max(now));
            *slot = Some(start + interval);
            start - now
        };
        if !wait.is_zero() {
            (self.sleeper)(wait);
        }
    }

    fn attempt(&self, body: &[u8], attempt: u32) -> Attempt {
        self.wait_for_slot();
        let mut req = self.agent.post(&self.config.endpoint).header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let mut resp = match req.send(body) {
            Ok(r) => r,
            Err(e) => {
                return Attempt::Retry {
                    error: ClientError::Transport {
                        attempts: attempt + 1,
                        message: e.to_string(),
                    },
                    retry_after: None,
                };
            }
        };
        let status = resp.status().as_u16();
        let retry_after = resp
            .headers()
            .get("retry-after")
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.trim().parse::<f64>().ok())
            .filter(|s| s.is_finite() && *s >= 0.0)
            .map(Duration::from_secs_f64);
        let text = resp.body_mut().read_to_string().unwrap_or_default();
        match status {
            200..=299 => match parse_completion(&text) {
                Ok(c) => Attempt::Done(c),
                Err(e) => Attempt::Fail(e),
            },
            401 | 403 => Attempt::Fail(ClientError::Auth { status }),
            413 => Attempt::Fail(ClientError::PayloadTooLarge {
                detail: format!("HTTP 413 for {} bytes", body.len()),
            }),
            429 => Attempt::Retry {
                error: ClientError::RateLimited { attempts: attempt + 1 },
                retry_after,
            },
            500..=599 => Attempt::Retry {
                error: ClientError::Http { status, body: truncate(&text) },
                retry_after,
            },
            _ => Attempt::Fail(ClientError::Http { status, body: truncate(&text) }),
        }
    }
}

fn truncate(s: &str) -> String {
    s.chars().take(500).collect()
}

/// Reply text and token usage from a chat-completion response body.
pub fn parse_completion(body: &str) -> Result<Completion, ClientError> {
    let v: Value = serde_json::from_str(body).map_err(|e| ClientError::Protocol(format!("invalid JSON: {e}")))?;
    let content = &v["choices"][0]["message"]["content"];
    let text = match content {
        Value::String(s) => s.clone(),
        Value::Array(parts) => parts
            .iter()
            .filter_map(|p| p["text"].as_str())
            .collect::<Vec<_>>()
            .join(""),
        _ => return Err(ClientError::Protocol("response has no choices[0].message.content".into())),
    };
    let usage = v.get("usage").and_then(|u| {
        Some(Usage {
            prompt_tokens: u.get("prompt_tokens")?.as_u64()?,
            completion_tokens: u.get("completion_tokens")?.as_u64()?,
        })
    });
    Ok(Completion { text, usage })
}

impl ModelBackend for RemoteHttpBackend {
    fn id(&self) -> &str {
        &self.id
    }
    fn kind(&self) -> BackendKind {
        BackendKind::RemoteHttp
    }
    fn complete(&self, req: &ModelRequest<'_>) -> Result<Completion, ClientError> {
        let body = serde_json::to_vec(&self.request_body(req.prompt, req.payload)?)
            .map_err(|e| ClientError::Protocol(e.to_string()))?;
        if let Some(limit) = self.config.max_payload_bytes {
            if body.len() > limit {
                return Err(ClientError::PayloadTooLarge {
                    detail: format!("{} bytes exceeds the configured {limit}", body.len()),
                });
            }
        }
        let mut attempt = 0;
        loop {
            tracing::debug!(backend = %self.id, instance = req.instance_id(), stage = %req.stage.tag(), attempt, "request");
            match self.attempt(&body, attempt) {
                Attempt::Done(c) => return Ok(c),
                Attempt::Fail(e) => return Err(e),
                Attempt::Retry { error, retry_after } => {
                    if attempt >= self.config.max_retries {
                        tracing::warn!(backend = %self.id, instance = req.instance_id(), %error, "giving up");
                        return Err(error);
                    }
                    let delay = backoff_delay(attempt, self.config.backoff_base_ms, self.config.backoff_max_ms, retry_after);
                    tracing::info!(backend = %self.id, instance = req.instance_id(), %error, ?delay, "retrying");
                    (self.sleeper)(delay);
                    attempt += 1;
                }
            }
        }
    }
}
