use std::time::Instant;

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::wire::{
    sanitize_boxes, AnswerRequest, AnswerResponse, DetectRequest, DetectResponse, EmbedRequest,
    EmbedResponse,
};
use super::{
    normalize_embeddings, Answer, Answerer, BackendConfig, BackendError, Detections, Detector,
    Embedder, Paraphraser, PromptEnvelope,
};
use crate::image::{encode_for_wire, ImageBuffer, WIRE_IMAGE_CAP_BYTES};

/// JSON-over-HTTP client for one service endpoint.
///
/// A single value can serve every trait; which routes exist depends on the
/// service behind `endpoint`. The underlying agent pools connections and is
/// safe to share across threads.
#[derive(Debug, Clone)]
pub struct HttpBackend {
    cfg: BackendConfig,
    agent: ureq::Agent,
}

fn map_ureq(err: ureq::Error, cfg: &BackendConfig) -> BackendError {
    match err {
        ureq::Error::Timeout(_) => BackendError::Timeout(cfg.timeout),
        ureq::Error::Io(e)
            if matches!(e.kind(), std::io::ErrorKind::TimedOut | std::io::ErrorKind::WouldBlock) =>
        {
            BackendError::Timeout(cfg.timeout)
        }
        ureq::Error::Json(e) => BackendError::MalformedResponse(e.to_string()),
        other => BackendError::TransportFailure(other.to_string()),
    }
}

impl HttpBackend {
    pub fn new(cfg: BackendConfig) -> Result<Self, BackendError> {
        cfg.validate()?;
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(cfg.timeout))
            .http_status_as_error(false)
            .build();
        Ok(Self {
            agent: ureq::Agent::new_with_config(config),
            cfg,
        })
    }

    pub fn config(&self) -> &BackendConfig {
        &self.cfg
    }

    fn post_once<Req: Serialize, Resp: DeserializeOwned>(
        &self,
        path: &str,
        body: &Req,
    ) -> Result<Resp, BackendError> {
        let mut request = self.agent.post(self.cfg.url(path));
        if let Some(token) = &self.cfg.auth_token {
            request = request.header("Authorization", format!("Bearer {token}"));
        }
        let mut response = request.send_json(body).map_err(|e| map_ureq(e, &self.cfg))?;
        let status = response.status().as_u16();
        if !(200..300).contains(&status) {
            let body = response.body_mut().read_to_string().unwrap_or_default();
            return Err(BackendError::BackendRejection { status, body });
        }
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(|e| map_ureq(e, &self.cfg))?;
        serde_json::from_str(&text).map_err(|e| BackendError::MalformedResponse(e.to_string()))
    }

    /// POSTs `body` to `path`, retrying transport failures up to
    /// `cfg.retries` times.
    pub fn post<Req: Serialize, Resp: DeserializeOwned>(
        &self,
        path: &str,
        body: &Req,
    ) -> Result<Resp, BackendError> {
        let mut attempt = 0;
        loop {
            match self.post_once(path, body) {
                Err(e) if e.is_retryable() && attempt < self.cfg.retries => attempt += 1,
                other => return other,
            }
        }
    }
}

fn wire_image(img: &ImageBuffer) -> Result<String, BackendError> {
    encode_for_wire(img, WIRE_IMAGE_CAP_BYTES).map_err(|e| BackendError::Image(e.to_string()))
}

impl Answerer for HttpBackend {
    fn answer(&self, prompt: &PromptEnvelope, img: &ImageBuffer) -> Result<Answer, BackendError> {
        let body = AnswerRequest {
            prompt: prompt.rendered_prompt.clone(),
            image_b64: wire_image(img)?,
        };
        let started = Instant::now();
        let resp: AnswerResponse = self.post("answer", &body)?;
        Ok(Answer {
            text: resp.answer,
            latency_ms: started.elapsed().as_millis() as u64,
        })
    }
}

impl Detector for HttpBackend {
    fn detect(&self, img: &ImageBuffer) -> Result<Detections, BackendError> {
        let body = DetectRequest {
            image_b64: wire_image(img)?,
        };
        let resp: DetectResponse = self.post("detect", &body)?;
        sanitize_boxes(&resp.boxes)
    }
}

impl Embedder for HttpBackend {
    fn embed(&self, tokens: &[String]) -> Result<Vec<Vec<f64>>, BackendError> {
        let body = EmbedRequest {
            tokens: tokens.to_vec(),
        };
        let resp: EmbedResponse = self.post("embed", &body)?;
        normalize_embeddings(tokens.len(), resp.vectors)
    }
}

/// Paraphrases go through the answerer route with an empty image and a
/// rewrite instruction; one paraphrase per returned line.
impl Paraphraser for HttpBackend {
    fn paraphrase(&self, question: &str, n: usize) -> Result<Vec<String>, BackendError> {
        if n == 0 {
            return Ok(Vec::new());
        }
        let body = AnswerRequest {
            prompt: format!(
                "Rewrite the following question in {n} different ways, keeping its meaning. \
                 Reply with one rewrite per line and nothing else.\nQuestion: {question}"
            ),
            image_b64: String::new(),
        };
        let resp: AnswerResponse = self.post("answer", &body)?;
        Ok(parse_paraphrase_lines(&resp.answer))
    }
}

/// Splits a reply into lines, dropping list markers and blanks.
pub(crate) fn parse_paraphrase_lines(reply: &str) -> Vec<String> {
    reply
        .lines()
        .map(|l| {
            l.trim()
                .trim_start_matches(|c: char| c.is_ascii_digit() || matches!(c, '.' | ')' | '-' | '*'))
                .trim()
                .to_owned()
        })
        .filter(|l| !l.is_empty())
        .collect()
}
