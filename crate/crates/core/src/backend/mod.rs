//! Clients for the external model services: the multimodal answerer, the
//! object detector, the token-embedding provider and the question
//! paraphraser.
//!
//! Each service is a trait with an HTTP implementation ([`HttpBackend`]) and
//! deterministic in-process mocks ([`mock`]). Errors are always typed; a
//! failed call never turns into an answer string.

mod http;
pub mod mock;
pub mod wire;

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image::ImageBuffer;

pub use http::HttpBackend;
pub use wire::{ClampWarning, Detections};

/// Clause appended to a question when the answerer should also explain how
/// to retake the photo.
pub const RESHOOT_HINT: &str =
    "If the target can not be seen, please tell me how to retake the photo, e.g., how to adjust the shooting angle?";

pub const ENV_MLLM_URL: &str = "VIASSIST_MLLM_URL";
pub const ENV_DETECTOR_URL: &str = "VIASSIST_DETECTOR_URL";
pub const ENV_EMBED_URL: &str = "VIASSIST_EMBED_URL";
pub const ENV_AUTH_TOKEN: &str = "VIASSIST_AUTH_TOKEN";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackendError {
    #[error("request timed out after {0:?}")]
    Timeout(Duration),
    #[error("transport failure: {0}")]
    TransportFailure(String),
    #[error("backend rejected request with status {status}: {body}")]
    BackendRejection { status: u16, body: String },
    #[error("malformed backend response: {0}")]
    MalformedResponse(String),
    #[error("malformed detection #{index}: {reason}")]
    MalformedDetection { index: usize, reason: String },
    #[error("embedding dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("token {0:?} is not in the embedding vocabulary")]
    UnknownToken(String),
    #[error("invalid backend configuration: {0}")]
    InvalidConfig(String),
    #[error("could not encode image: {0}")]
    Image(String),
}

impl BackendError {
    /// Only connection-level failures are worth retrying.
    pub fn is_retryable(&self) -> bool {
        matches!(self, BackendError::TransportFailure(_))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendConfig {
    pub endpoint: String,
    pub timeout: Duration,
    #[serde(default, skip_serializing)]
    pub auth_token: Option<String>,
    pub retries: u32,
}

impl BackendConfig {
    pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

    pub fn new(endpoint: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            timeout: Self::DEFAULT_TIMEOUT,
            auth_token: None,
            retries: 1,
        }
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn with_retries(mut self, retries: u32) -> Self {
        self.retries = retries;
        self
    }

    pub fn with_auth_token(mut self, token: Option<String>) -> Self {
        self.auth_token = token;
        self
    }

    /// Reads the endpoint from `var` and the token from
    /// `VIASSIST_AUTH_TOKEN`; `None` when the endpoint is unset or blank.
    pub fn from_env(var: &str) -> Option<Self> {
        let endpoint = std::env::var(var).ok().filter(|v| !v.trim().is_empty())?;
        let token = std::env::var(ENV_AUTH_TOKEN).ok().filter(|v| !v.is_empty());
        Some(Self::new(endpoint).with_auth_token(token))
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.timeout.is_zero() {
            return Err(BackendError::InvalidConfig("timeout must be positive".into()));
        }
        if self.endpoint.trim().is_empty() {
            return Err(BackendError::InvalidConfig("endpoint is empty".into()));
        }
        Ok(())
    }

    pub fn url(&self, path: &str) -> String {
        format!("{}/{}", self.endpoint.trim_end_matches('/'), path.trim_start_matches('/'))
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PromptError {
    #[error("question is empty")]
    EmptyQuestion,
}

/// What is sent to the answerer for one query.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptEnvelope {
    pub question: String,
    pub rendered_prompt: String,
    /// Opaque handle of the attached image, when known.
    #[serde(default)]
    pub image_ref: Option<String>,
}

impl PromptEnvelope {
    pub fn with_image_ref(mut self, image_ref: impl Into<String>) -> Self {
        self.image_ref = Some(image_ref.into());
        self
    }
}

/// Builds the answerer prompt. With `reshoot_hint` the fixed reshoot clause
/// follows the question after a single space; otherwise the prompt is the
/// question itself.
pub fn build_prompt(question: &str, reshoot_hint: bool) -> Result<PromptEnvelope, PromptError> {
    if question.trim().is_empty() {
        return Err(PromptError::EmptyQuestion);
    }
    let rendered_prompt = if reshoot_hint {
        format!("{question} {RESHOOT_HINT}")
    } else {
        question.to_owned()
    };
    Ok(PromptEnvelope {
        question: question.to_owned(),
        rendered_prompt,
        image_ref: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Answer {
    pub text: String,
    pub latency_ms: u64,
}

pub trait Answerer: Send + Sync {
    fn answer(&self, prompt: &PromptEnvelope, img: &ImageBuffer) -> Result<Answer, BackendError>;
}

pub trait Detector: Send + Sync {
    fn detect(&self, img: &ImageBuffer) -> Result<Detections, BackendError>;
}

/// Maps tokens to unit vectors of a common dimension.
pub trait Embedder: Send + Sync {
    fn embed(&self, tokens: &[String]) -> Result<Vec<Vec<f64>>, BackendError>;
}

pub trait Paraphraser: Send + Sync {
    fn paraphrase(&self, question: &str, n: usize) -> Result<Vec<String>, BackendError>;
}

/// Validates provider output and L2-normalizes every vector.
pub fn normalize_embeddings(
    token_count: usize,
    vectors: Vec<Vec<f64>>,
) -> Result<Vec<Vec<f64>>, BackendError> {
    if vectors.len() != token_count {
        return Err(BackendError::MalformedResponse(format!(
            "expected {token_count} vectors, got {}",
            vectors.len()
        )));
    }
    let dim = vectors.first().map_or(0, Vec::len);
    if dim == 0 && token_count > 0 {
        return Err(BackendError::MalformedResponse("zero-length embedding".into()));
    }
    vectors
        .into_iter()
        .map(|v| {
            if v.len() != dim {
                return Err(BackendError::DimensionMismatch {
                    expected: dim,
                    found: v.len(),
                });
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if !norm.is_finite() || norm == 0.0 {
                return Err(BackendError::MalformedResponse(
                    "embedding has zero or non-finite norm".into(),
                ));
            }
            Ok(v.into_iter().map(|x| x / norm).collect())
        })
        .collect()
}
