//! Assess → directive-or-answer orchestration with retake sessions.
//!
//! A session holds one question and collects capture attempts until a frame
//! assesses as good (the answerer is called once, then the session is
//! answered) or the attempt limit is hit. Defective frames only ever reach
//! the local assessor and directive generator, so the directive half of the
//! service keeps working with every backend down.

mod session;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::mock::UnreachableBackend;
use crate::backend::{build_prompt, Answerer, BackendError, ClampWarning, Detector};
use crate::directive::{AssistResponse, DirectiveGenerator};
use crate::image::{ImageBuffer, ImageError};
use crate::quality::{assess, compute_luma, BoundingBox, QualityConfig, QualityReport};

pub use session::{Attempt, Clock, Session, SessionState, SessionStore, StepClock, SystemClock};

pub const DEFAULT_MAX_ATTEMPTS: usize = 5;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("question is empty")]
    EmptyQuestion,
    #[error("max_attempts must be at least 1")]
    InvalidMaxAttempts,
    #[error("no session {0}")]
    UnknownSession(String),
    #[error("session {id} is closed ({state})")]
    SessionClosed { id: String, state: SessionState },
    #[error(transparent)]
    Image(#[from] ImageError),
    /// The frame was good but the answerer failed. The attempt is recorded;
    /// the outcome carries the report and directive response.
    #[error("answer backend unavailable: {error}")]
    BackendUnavailable {
        error: BackendError,
        outcome: Box<AttemptOutcome>,
    },
    #[error("session journal: {0}")]
    Journal(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttemptOutcome {
    pub report: QualityReport,
    pub response: AssistResponse,
    pub state: SessionState,
    /// Problems with the detections that did not stop the assessment.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// Assessor plus directive generator; no backend involved.
pub fn assess_once(
    img: &ImageBuffer,
    question: &str,
    detections: &[BoundingBox],
    cfg: &QualityConfig,
) -> Result<(QualityReport, AssistResponse), ImageError> {
    let report = assess(img, question, detections, cfg)?;
    let (_, response) = DirectiveGenerator::default().respond(&report);
    Ok((report, response))
}

fn clamp_warning(w: &ClampWarning) -> String {
    format!("detection #{} {} clamped from {} to {}", w.index, w.field, w.original, w.clamped)
}

pub struct Pipeline {
    quality: QualityConfig,
    generator: DirectiveGenerator,
    detector: Arc<dyn Detector>,
    answerer: Arc<dyn Answerer>,
    store: SessionStore,
    clock: Arc<dyn Clock>,
    reshoot_hint: bool,
    default_max_attempts: usize,
}

impl std::fmt::Debug for Pipeline {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Pipeline")
            .field("quality", &self.quality)
            .field("store", &self.store)
            .field("reshoot_hint", &self.reshoot_hint)
            .finish_non_exhaustive()
    }
}

impl Pipeline {
    /// Pipeline with unreachable backends, a random id seed and wall-clock
    /// timestamps.
    pub fn new(quality: QualityConfig) -> Self {
        Self {
            quality,
            generator: DirectiveGenerator::default(),
            detector: Arc::new(UnreachableBackend),
            answerer: Arc::new(UnreachableBackend),
            store: SessionStore::new(None),
            clock: Arc::new(SystemClock),
            reshoot_hint: false,
            default_max_attempts: DEFAULT_MAX_ATTEMPTS,
        }
    }

    pub fn with_detector(mut self, detector: Arc<dyn Detector>) -> Self {
        self.detector = detector;
        self
    }

    pub fn with_answerer(mut self, answerer: Arc<dyn Answerer>) -> Self {
        self.answerer = answerer;
        self
    }

    pub fn with_store(mut self, store: SessionStore) -> Self {
        self.store = store;
        self
    }

    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    pub fn with_generator(mut self, generator: DirectiveGenerator) -> Self {
        self.generator = generator;
        self
    }

    /// Appends the reshoot clause to forwarded questions. Off by default.
    pub fn with_reshoot_hint(mut self, on: bool) -> Self {
        self.reshoot_hint = on;
        self
    }

    pub fn with_default_max_attempts(mut self, n: usize) -> Self {
        self.default_max_attempts = n.max(1);
        self
    }

    pub fn quality(&self) -> &QualityConfig {
        &self.quality
    }

    pub fn store(&self) -> &SessionStore {
        &self.store
    }

    pub fn default_max_attempts(&self) -> usize {
        self.default_max_attempts
    }

    pub fn open_session(&self, question: &str, max_attempts: Option<usize>) -> Result<Session, PipelineError> {
        if question.trim().is_empty() {
            return Err(PipelineError::EmptyQuestion);
        }
        let max_attempts = max_attempts.unwrap_or(self.default_max_attempts);
        if max_attempts == 0 {
            return Err(PipelineError::InvalidMaxAttempts);
        }
        let s = self.store.open(question, max_attempts)?;
        let s = s.lock().expect("session lock").clone();
        Ok(s)
    }

    pub fn session(&self, id: &str) -> Option<Session> {
        self.store.get(id).map(|s| s.lock().expect("session lock").clone())
    }

    /// Detections for `img`: `annotations` when given, else the detector.
    /// The detector is skipped for frames too dark to assess, and a detector
    /// failure degrades to no detections plus a warning.
    fn detections(
        &self,
        img: &ImageBuffer,
        annotations: Option<Vec<BoundingBox>>,
    ) -> (Vec<BoundingBox>, Vec<String>) {
        if let Some(boxes) = annotations {
            return (boxes, Vec::new());
        }
        if compute_luma(img) < self.quality.dark_luma {
            return (Vec::new(), Vec::new());
        }
        match self.detector.detect(img) {
            Ok(d) => (d.boxes, d.warnings.iter().map(clamp_warning).collect()),
            Err(e) => (Vec::new(), vec![format!("detector unavailable: {e}")]),
        }
    }

    /// One-shot assessment; never calls the answerer.
    pub fn assess(
        &self,
        img: &ImageBuffer,
        question: &str,
        annotations: Option<Vec<BoundingBox>>,
    ) -> Result<AttemptOutcome, PipelineError> {
        if question.trim().is_empty() {
            return Err(PipelineError::EmptyQuestion);
        }
        let (boxes, warnings) = self.detections(img, annotations);
        let report = assess(img, question, &boxes, &self.quality)?;
        let (_, response) = self.generator.respond(&report);
        Ok(AttemptOutcome {
            report,
            response,
            state: SessionState::AwaitingCapture,
            warnings,
        })
    }

    /// Assesses a capture for an open session and, when it is good, asks the
    /// answerer. The session lock is held throughout, so concurrent submits
    /// to one session run one after the other.
    pub fn submit_attempt(
        &self,
        id: &str,
        img: &ImageBuffer,
        annotations: Option<Vec<BoundingBox>>,
    ) -> Result<AttemptOutcome, PipelineError> {
        let handle = self
            .store
            .get(id)
            .ok_or_else(|| PipelineError::UnknownSession(id.to_owned()))?;
        let mut session = handle.lock().expect("session lock");
        if !session.state.is_open() {
            return Err(PipelineError::SessionClosed {
                id: id.to_owned(),
                state: session.state,
            });
        }

        let (boxes, warnings) = self.detections(img, annotations);
        let report = assess(img, &session.question, &boxes, &self.quality)?;
        let (_, mut response) = self.generator.respond(&report);
        let mut failure = None;
        if report.mode.is_good() {
            let prompt = build_prompt(&session.question, self.reshoot_hint)
                .expect("sessions never hold an empty question");
            match self.answerer.answer(&prompt, img) {
                Ok(a) => response.answer = Some(a.text),
                Err(e) => failure = Some(e),
            }
        }

        let attempt = Attempt {
            report: report.clone(),
            response: response.clone(),
            timestamp_ms: self.clock.now_ms(),
        };
        self.store.record(&mut session, attempt)?;
        let outcome = AttemptOutcome {
            report,
            response,
            state: session.state,
            warnings,
        };
        match failure {
            None => Ok(outcome),
            Some(error) => Err(PipelineError::BackendUnavailable {
                error,
                outcome: Box::new(outcome),
            }),
        }
    }
}
