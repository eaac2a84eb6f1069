//! HTTP transport to remote text models: the reasoning polisher, the judge,
//! and remote comparators all go through [`gateway_call`].
//!
//! Requests use the widely supported chat-completions shape: one user
//! message whose content is the prompt text followed by one `image_url` part
//! per image. The reply text is read from `choices[0].message.content`.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::time::Duration;
use thiserror::Error;

use creative_select::client::{ClientError, TextClient};
use creative_select::model::CreativeImageRef;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GatewayRole {
    CotPolisher,
    Comparator,
    Judge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GatewayConfig {
    pub endpoint: String,
    /// Name of the environment variable holding the bearer token.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_env: Option<String>,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: f64,
    /// Extra attempts after the first one, for retryable failures only.
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    /// First backoff delay; each retry doubles it.
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
    pub role: GatewayRole,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
}

fn default_timeout_secs() -> f64 {
    60.0
}

fn default_max_retries() -> u32 {
    3
}

fn default_backoff_ms() -> u64 {
    500
}

impl GatewayConfig {
    pub fn new(endpoint: impl Into<String>, role: GatewayRole) -> Self {
        Self {
            endpoint: endpoint.into(),
            token_env: None,
            timeout_secs: default_timeout_secs(),
            max_retries: default_max_retries(),
            backoff_ms: default_backoff_ms(),
            role,
            model: None,
        }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if !(self.timeout_secs.is_finite() && self.timeout_secs > 0.0) {
            return Err(GatewayError::Config(format!("timeout_secs must be > 0, got {}", self.timeout_secs)));
        }
        reqwest::Url::parse(&self.endpoint).map_err(|e| GatewayError::Config(format!("endpoint: {e}")))?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GatewayError {
    #[error("TIMEOUT: no response after {attempts} attempts")]
    Timeout { attempts: u32 },
    #[error("AUTH: upstream rejected credentials with status {status}")]
    Auth { status: u16 },
    #[error("UPSTREAM_STATUS: upstream returned {status} after {attempts} attempts")]
    UpstreamStatus { status: u16, attempts: u32 },
    #[error("BAD_RESPONSE: {0}")]
    BadResponse(String),
    #[error("CONFIG: {0}")]
    Config(String),
}

impl GatewayError {
    pub fn code(&self) -> &'static str {
        match self {
            GatewayError::Timeout { .. } => "TIMEOUT",
            GatewayError::Auth { .. } => "AUTH",
            GatewayError::UpstreamStatus { .. } => "UPSTREAM_STATUS",
            GatewayError::BadResponse(_) => "BAD_RESPONSE",
            GatewayError::Config(_) => "CONFIG",
        }
    }
}

impl From<GatewayError> for ClientError {
    fn from(e: GatewayError) -> Self {
        match e {
            GatewayError::Timeout { .. } => ClientError::Timeout,
            GatewayError::Auth { .. } => ClientError::Auth,
            GatewayError::UpstreamStatus { status, .. } => ClientError::UpstreamStatus(status),
            other => ClientError::Transport(other.to_string()),
        }
    }
}

/// The JSON body sent for one completion.
pub fn request_body(config: &GatewayConfig, prompt: &str, images: &[CreativeImageRef]) -> Value {
    let mut content = vec![json!({"type": "text", "text": prompt})];
    content.extend(
        images
            .iter()
            .map(|img| json!({"type": "image_url", "image_url": {"url": img.uri}})),
    );
    let mut body = json!({
        "messages": [{"role": "user", "content": content}],
        "temperature": 0,
    });
    if let Some(model) = &config.model {
        body["model"] = json!(model);
    }
    body
}

fn reply_text(body: &Value) -> Result<String, GatewayError> {
    body.pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| GatewayError::BadResponse("missing choices[0].message.content".into()))
}

/// One completion with retries. Timeouts, connection failures, 429 and 5xx
/// are retried with exponential backoff; 401 and 403 fail at once with
/// `AUTH`; other statuses fail at once with `UPSTREAM_STATUS`.
///
/// Uses a blocking client, so call it from a plain thread, never from an
/// async task.
pub fn gateway_call(config: &GatewayConfig, prompt: &str, images: &[CreativeImageRef]) -> Result<String, GatewayError> {
    config.validate()?;
    let token = match &config.token_env {
        Some(var) => Some(std::env::var(var).map_err(|_| GatewayError::Config(format!("environment variable {var} is not set")))?),
        None => None,
    };
    let client = reqwest::blocking::Client::builder()
        .timeout(Duration::from_secs_f64(config.timeout_secs))
        .connect_timeout(Duration::from_secs_f64(config.timeout_secs))
        .build()
        .map_err(|e| GatewayError::Config(e.to_string()))?;
    let body = request_body(config, prompt, images);

    let attempts = config.max_retries + 1;
    let mut last_status = None;
    for attempt in 1..=attempts {
        if attempt > 1 {
            let delay = config.backoff_ms.saturating_mul(1 << (attempt - 2).min(16));
            std::thread::sleep(Duration::from_millis(delay));
        }
        let mut req = client.post(&config.endpoint).json(&body);
        if let Some(t) = &token {
            req = req.bearer_auth(t);
        }
        let resp = match req.send() {
            Ok(r) => r,
            Err(e) => {
                tracing::debug!(attempt, error = %e, "gateway transport failure");
                last_status = None;
                continue;
            }
        };
        let status = resp.status();
        if status == reqwest::StatusCode::UNAUTHORIZED || status == reqwest::StatusCode::FORBIDDEN {
            return Err(GatewayError::Auth { status: status.as_u16() });
        }
        if status.is_server_error() || status == reqwest::StatusCode::TOO_MANY_REQUESTS {
            tracing::debug!(attempt, %status, "gateway retryable status");
            last_status = Some(status.as_u16());
            continue;
        }
        if !status.is_success() {
            return Err(GatewayError::UpstreamStatus {
                status: status.as_u16(),
                attempts: attempt,
            });
        }
        let json: Value = match resp.json() {
            Ok(v) => v,
            Err(e) if e.is_timeout() => {
                last_status = None;
                continue;
            }
            Err(e) => return Err(GatewayError::BadResponse(e.to_string())),
        };
        return reply_text(&json);
    }
    Err(match last_status {
        Some(status) => GatewayError::UpstreamStatus { status, attempts },
        None => GatewayError::Timeout { attempts },
    })
}

/// A [`TextClient`] over [`gateway_call`].
#[derive(Debug, Clone)]
pub struct GatewayClient {
    pub config: GatewayConfig,
}

impl GatewayClient {
    pub fn new(config: GatewayConfig) -> Result<Self, GatewayError> {
        config.validate()?;
        Ok(Self { config })
    }
}

impl TextClient for GatewayClient {
    fn complete(&self, prompt: &str, images: &[CreativeImageRef]) -> Result<String, ClientError> {
        gateway_call(&self.config, prompt, images).map_err(|e| {
            tracing::warn!(role = ?self.config.role, error = %e, "gateway call failed");
            e.into()
        })
    }
}
