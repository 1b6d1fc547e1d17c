//! Shared backend plumbing: error type, backend selector strings, and the
//! JSON-over-HTTP client used by every remote backend.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BackendError {
    #[error("{backend} backend unavailable: {reason}")]
    Unavailable { backend: String, reason: String },
    #[error("{backend} backend returned an empty response")]
    ResponseEmpty { backend: String },
}

impl BackendError {
    pub fn unavailable(backend: impl Into<String>, reason: impl fmt::Display) -> Self {
        BackendError::Unavailable {
            backend: backend.into(),
            reason: reason.to_string(),
        }
    }
}

/// Which implementation backs a backend slot.
///
/// Written in config files as `none`, `mock:<script path>`,
/// `remote:<endpoint url>`, or a builtin name such as `energy`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BackendSpec {
    None,
    Mock(PathBuf),
    Remote(String),
    Builtin(String),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid backend selector {0:?}: expected none, mock:<script>, remote:<url> or a builtin name")]
pub struct BackendSpecError(pub String);

impl FromStr for BackendSpec {
    type Err = BackendSpecError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let err = || BackendSpecError(s.to_string());
        match s.split_once(':') {
            Some(("mock", path)) if !path.is_empty() => Ok(BackendSpec::Mock(PathBuf::from(path))),
            Some(("remote", url)) if !url.is_empty() => Ok(BackendSpec::Remote(url.to_string())),
            Some(_) => Err(err()),
            None if s == "none" || s.is_empty() => Ok(BackendSpec::None),
            None if s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') => {
                Ok(BackendSpec::Builtin(s.to_string()))
            }
            None => Err(err()),
        }
    }
}

impl fmt::Display for BackendSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BackendSpec::None => f.write_str("none"),
            BackendSpec::Mock(p) => write!(f, "mock:{}", p.display()),
            BackendSpec::Remote(u) => write!(f, "remote:{u}"),
            BackendSpec::Builtin(n) => f.write_str(n),
        }
    }
}

impl BackendSpec {
    /// Resolves a relative mock script path against `base`.
    pub fn resolved(self, base: &Path) -> Self {
        match self {
            BackendSpec::Mock(p) if p.is_relative() => BackendSpec::Mock(base.join(p)),
            other => other,
        }
    }
}

/// Reads a JSON mock script.
pub fn load_script<T: DeserializeOwned>(backend: &str, path: &Path) -> Result<T, BackendError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| BackendError::unavailable(backend, format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| BackendError::unavailable(backend, format!("{}: {e}", path.display())))
}

fn default_timeout_ms() -> u64 {
    60_000
}

fn default_retries() -> u32 {
    2
}

fn default_backoff_ms() -> u64 {
    250
}

/// Connection settings shared by all remote backends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteSettings {
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_retries")]
    pub retries: u32,
    #[serde(default = "default_backoff_ms")]
    pub retry_backoff_ms: u64,
    /// Environment variable holding a bearer token.
    #[serde(default)]
    pub api_key_env: Option<String>,
}

impl Default for RemoteSettings {
    fn default() -> Self {
        Self {
            timeout_ms: default_timeout_ms(),
            retries: default_retries(),
            retry_backoff_ms: default_backoff_ms(),
            api_key_env: None,
        }
    }
}

/// POSTs JSON and decodes a JSON reply, with a global per-attempt timeout
/// and `retries` additional attempts.
#[derive(Debug, Clone)]
pub struct JsonHttpClient {
    backend: String,
    endpoint: String,
    settings: RemoteSettings,
    agent: ureq::Agent,
}

impl JsonHttpClient {
    pub fn new(backend: impl Into<String>, endpoint: impl Into<String>, settings: RemoteSettings) -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(settings.timeout_ms)))
            .build();
        Self {
            backend: backend.into(),
            endpoint: endpoint.into(),
            settings,
            agent: ureq::Agent::new_with_config(config),
        }
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    fn attempt<Req: Serialize, Resp: DeserializeOwned>(&self, body: &Req) -> Result<Resp, String> {
        let mut request = self.agent.post(&self.endpoint);
        if let Some(var) = &self.settings.api_key_env {
            let key = std::env::var(var).map_err(|_| format!("environment variable {var} not set"))?;
            request = request.header("Authorization", &format!("Bearer {key}"));
        }
        let mut response = request.send_json(body).map_err(|e| e.to_string())?;
        response
            .body_mut()
            .read_json::<Resp>()
            .map_err(|e| e.to_string())
    }

    pub fn post<Req: Serialize, Resp: DeserializeOwned>(&self, body: &Req) -> Result<Resp, BackendError> {
        let attempts = self.settings.retries + 1;
        let mut last = String::new();
        for n in 0..attempts {
            match self.attempt(body) {
                Ok(resp) => return Ok(resp),
                Err(e) => {
                    log::debug!("{} attempt {}/{attempts} failed: {e}", self.backend, n + 1);
                    last = e;
                }
            }
            if n + 1 < attempts && self.settings.retry_backoff_ms > 0 {
                std::thread::sleep(Duration::from_millis(self.settings.retry_backoff_ms * (n as u64 + 1)));
            }
        }
        Err(BackendError::unavailable(
            &self.backend,
            format!("{attempts} attempt(s) to {} failed: {last}", self.endpoint),
        ))
    }
}
