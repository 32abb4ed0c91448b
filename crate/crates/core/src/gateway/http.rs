use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{BackendError, CompletionBackend, CompletionRequest};

pub const ENV_ENDPOINT: &str = "INTERFERE_ENDPOINT";
pub const ENV_AUTH: &str = "INTERFERE_AUTH";

/// Network backend settings.
///
/// The request body is `{"prompt", "max_new_tokens", "temperature", "stop"}`
/// and the reply is read from `text_pointer` (a JSON pointer, `/text` by
/// default), so most inference servers fit with a path and pointer change.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpConfig {
    pub endpoint: String,
    pub path: String,
    pub auth_header: String,
    #[serde(skip_serializing)]
    pub auth_value: Option<String>,
    pub text_pointer: String,
    pub timeout_secs: u64,
}

impl Default for HttpConfig {
    fn default() -> Self {
        Self {
            endpoint: "http://127.0.0.1:8080".into(),
            path: "/generate".into(),
            auth_header: "Authorization".into(),
            auth_value: None,
            text_pointer: "/text".into(),
            timeout_secs: 120,
        }
    }
}

impl HttpConfig {
    pub fn with_endpoint(mut self, endpoint: &str) -> Self {
        self.endpoint = endpoint.to_string();
        self
    }

    /// Applies `INTERFERE_ENDPOINT` and `INTERFERE_AUTH` when set.
    pub fn apply_env(mut self) -> Self {
        if let Ok(endpoint) = std::env::var(ENV_ENDPOINT) {
            if !endpoint.is_empty() {
                self.endpoint = endpoint;
            }
        }
        if let Ok(auth) = std::env::var(ENV_AUTH) {
            if !auth.is_empty() {
                self.auth_value = Some(auth);
            }
        }
        self
    }

    pub fn url(&self) -> String {
        let base = self.endpoint.trim_end_matches('/');
        if self.path.is_empty() {
            base.to_string()
        } else {
            format!("{base}/{}", self.path.trim_start_matches('/'))
        }
    }
}

pub struct HttpBackend {
    config: HttpConfig,
    agent: ureq::Agent,
}

impl HttpBackend {
    pub fn new(config: HttpConfig) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(config.timeout_secs.max(1))))
            .build()
            .into();
        Self { config, agent }
    }

    pub fn config(&self) -> &HttpConfig {
        &self.config
    }
}

fn classify(err: ureq::Error) -> BackendError {
    match err {
        ureq::Error::BadUri(_)
        | ureq::Error::Http(_)
        | ureq::Error::InvalidProxyUrl
        | ureq::Error::RequireHttpsOnly(_)
        | ureq::Error::Json(_) => BackendError::Protocol(err.to_string()),
        other => BackendError::Transient(other.to_string()),
    }
}

impl CompletionBackend for HttpBackend {
    fn id(&self) -> String {
        format!("http:{}", self.config.url())
    }

    fn generate(&self, req: &CompletionRequest) -> Result<String, BackendError> {
        let body = json!({
            "prompt": req.prompt,
            "max_new_tokens": req.max_new_tokens,
            "temperature": req.temperature,
            "stop": req.stop_sequences,
        });
        let mut call = self.agent.post(self.config.url());
        if let Some(auth) = &self.config.auth_value {
            call = call.header(self.config.auth_header.as_str(), auth.as_str());
        }
        let mut resp = call.send_json(&body).map_err(classify)?;
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().map_err(classify)?;
        if status == 429 || status >= 500 {
            return Err(BackendError::Transient(format!("status {status}")));
        }
        if !(200..300).contains(&status) {
            return Err(BackendError::Status { status, body: text });
        }
        let value: Value = serde_json::from_str(&text)
            .map_err(|e| BackendError::Protocol(format!("response is not JSON: {e}")))?;
        value
            .pointer(&self.config.text_pointer)
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| BackendError::Protocol(format!("no string at `{}` in response", self.config.text_pointer)))
    }
}
