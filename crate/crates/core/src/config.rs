//! `key = value` settings file for the service and CLI.
//!
//! Keys are the [`QualityConfig`] field names plus backend settings:
//!
//! ```text
//! # thresholds
//! blur_threshold = 100
//! tau_far = 0.05
//! # backends
//! mllm_url = http://127.0.0.1:9000
//! detector_url = http://127.0.0.1:9001
//! timeout_secs = 30
//! ```

use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{BackendConfig, ENV_AUTH_TOKEN, ENV_DETECTOR_URL, ENV_EMBED_URL, ENV_MLLM_URL};
use crate::quality::QualityConfig;

#[derive(Debug, Error)]
pub enum SettingsError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: bad value for `{key}`: {message}")]
    Value {
        line: usize,
        key: String,
        message: String,
    },
    #[error(transparent)]
    Invalid(#[from] crate::quality::ConfigError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Settings {
    pub quality: QualityConfig,
    pub mllm_url: Option<String>,
    pub detector_url: Option<String>,
    pub embed_url: Option<String>,
    #[serde(skip_serializing)]
    pub auth_token: Option<String>,
    pub timeout: Duration,
    pub retries: u32,
    pub max_attempts: usize,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            quality: QualityConfig::default(),
            mllm_url: None,
            detector_url: None,
            embed_url: None,
            auth_token: None,
            timeout: BackendConfig::DEFAULT_TIMEOUT,
            retries: 1,
            max_attempts: crate::pipeline::DEFAULT_MAX_ATTEMPTS,
        }
    }
}

fn number<T: std::str::FromStr>(line: usize, key: &str, value: &str) -> Result<T, SettingsError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e: T::Err| SettingsError::Value {
        line,
        key: key.to_owned(),
        message: e.to_string(),
    })
}

impl Settings {
    pub fn parse(text: &str) -> Result<Self, SettingsError> {
        let mut s = Settings::default();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let Some((key, value)) = trimmed.split_once('=') else {
                return Err(SettingsError::Syntax {
                    line,
                    message: "expected key = value".into(),
                });
            };
            let (key, value) = (key.trim(), value.trim());
            let q = &mut s.quality;
            let url = || (!value.is_empty()).then(|| value.to_owned());
            match key {
                "blur_threshold" => q.blur_threshold = number(line, key, value)?,
                "dark_luma" => q.dark_luma = number(line, key, value)?,
                "lowlight_luma" => q.lowlight_luma = number(line, key, value)?,
                "edge_margin" => q.edge_margin = number(line, key, value)?,
                "tau_far" => q.tau_far = number(line, key, value)?,
                "tau_near" => q.tau_near = number(line, key, value)?,
                "min_confidence" => q.min_confidence = number(line, key, value)?,
                "relevance_threshold" => q.relevance_threshold = number(line, key, value)?,
                "mllm_url" => s.mllm_url = url(),
                "detector_url" => s.detector_url = url(),
                "embed_url" => s.embed_url = url(),
                "auth_token" => s.auth_token = url(),
                "timeout_secs" => {
                    let secs: f64 = number(line, key, value)?;
                    if !(secs.is_finite() && secs > 0.0) {
                        return Err(SettingsError::Value {
                            line,
                            key: key.into(),
                            message: "must be positive".into(),
                        });
                    }
                    s.timeout = Duration::from_secs_f64(secs);
                }
                "retries" => s.retries = number(line, key, value)?,
                "max_attempts" => {
                    s.max_attempts = number(line, key, value)?;
                    if s.max_attempts == 0 {
                        return Err(SettingsError::Value {
                            line,
                            key: key.into(),
                            message: "must be at least 1".into(),
                        });
                    }
                }
                _ => {
                    return Err(SettingsError::UnknownKey {
                        line,
                        key: key.to_owned(),
                    })
                }
            }
        }
        s.quality.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, SettingsError> {
        let text = std::fs::read_to_string(path).map_err(|source| SettingsError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    /// Fills unset URLs and token from the `VIASSIST_*` environment
    /// variables.
    pub fn with_env(mut self) -> Self {
        let var = |name: &str| std::env::var(name).ok().filter(|v| !v.trim().is_empty());
        self.mllm_url = self.mllm_url.or_else(|| var(ENV_MLLM_URL));
        self.detector_url = self.detector_url.or_else(|| var(ENV_DETECTOR_URL));
        self.embed_url = self.embed_url.or_else(|| var(ENV_EMBED_URL));
        self.auth_token = self.auth_token.or_else(|| var(ENV_AUTH_TOKEN));
        self
    }

    pub fn backend(&self, url: &str) -> BackendConfig {
        BackendConfig::new(url)
            .with_timeout(self.timeout)
            .with_retries(self.retries)
            .with_auth_token(self.auth_token.clone())
    }
}
