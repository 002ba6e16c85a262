//! Deterministic in-process stand-ins for the model services.
//!
//! Mock latency is virtual: a configured delay is reported as the call's
//! latency and compared against the timeout, but nothing sleeps.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::wire::{read_sidecar, ClampWarning};
use super::{
    Answer, Answerer, BackendError, Detections, Detector, Embedder, Paraphraser, PromptEnvelope,
};
use crate::image::ImageBuffer;
use crate::quality::BoundingBox;

/// Dimension of hash-mode mock embeddings.
pub const HASH_EMBED_DIM: usize = 64;

/// Answerer with a canned prompt table and a call log.
#[derive(Debug, Default)]
pub struct MockAnswerer {
    canned: HashMap<String, String>,
    fallback: Option<String>,
    delay: Duration,
    timeout: Option<Duration>,
    calls: Mutex<Vec<String>>,
}

impl MockAnswerer {
    pub fn new() -> Self {
        Self::default()
    }

    /// Answers every prompt with `answer`.
    pub fn always(answer: impl Into<String>) -> Self {
        Self {
            fallback: Some(answer.into()),
            ..Self::default()
        }
    }

    pub fn with_canned(mut self, prompt: impl Into<String>, answer: impl Into<String>) -> Self {
        self.canned.insert(prompt.into(), answer.into());
        self
    }

    pub fn with_delay(mut self, delay: Duration, timeout: Duration) -> Self {
        self.delay = delay;
        self.timeout = Some(timeout);
        self
    }

    /// Prompts received so far, in call order.
    pub fn calls(&self) -> Vec<String> {
        self.calls.lock().expect("mock lock").clone()
    }

    pub fn call_count(&self) -> usize {
        self.calls.lock().expect("mock lock").len()
    }
}

impl Answerer for MockAnswerer {
    fn answer(&self, prompt: &PromptEnvelope, _img: &ImageBuffer) -> Result<Answer, BackendError> {
        self.calls
            .lock()
            .expect("mock lock")
            .push(prompt.rendered_prompt.clone());
        if let Some(timeout) = self.timeout {
            if self.delay > timeout {
                return Err(BackendError::Timeout(timeout));
            }
        }
        let text = self
            .canned
            .get(&prompt.rendered_prompt)
            .or(self.fallback.as_ref())
            .cloned()
            .ok_or_else(|| BackendError::BackendRejection {
                status: 404,
                body: "no canned answer for prompt".into(),
            })?;
        Ok(Answer {
            text,
            latency_ms: self.delay.as_millis() as u64,
        })
    }
}

impl<T: Answerer + ?Sized> Answerer for Arc<T> {
    fn answer(&self, prompt: &PromptEnvelope, img: &ImageBuffer) -> Result<Answer, BackendError> {
        (**self).answer(prompt, img)
    }
}

/// Detector that returns a fixed set of boxes regardless of the image.
#[derive(Debug, Clone, Default)]
pub struct StaticDetector {
    detections: Detections,
}

impl StaticDetector {
    pub fn new(boxes: Vec<BoundingBox>) -> Self {
        Self {
            detections: Detections {
                boxes,
                warnings: Vec::new(),
            },
        }
    }

    /// Loads the boxes from a sidecar annotation file.
    pub fn from_sidecar(path: &std::path::Path) -> Result<Self, BackendError> {
        Ok(Self {
            detections: read_sidecar(path)?,
        })
    }

    pub fn warnings(&self) -> &[ClampWarning] {
        &self.detections.warnings
    }
}

impl Detector for StaticDetector {
    fn detect(&self, _img: &ImageBuffer) -> Result<Detections, BackendError> {
        Ok(self.detections.clone())
    }
}

impl<T: Detector + ?Sized> Detector for Arc<T> {
    fn detect(&self, img: &ImageBuffer) -> Result<Detections, BackendError> {
        (**self).detect(img)
    }
}

/// Every call fails as if the service could not be reached.
#[derive(Debug, Clone, Default)]
pub struct UnreachableBackend;

impl UnreachableBackend {
    fn fail<T>() -> Result<T, BackendError> {
        Err(BackendError::TransportFailure("backend unreachable".into()))
    }
}

impl Answerer for UnreachableBackend {
    fn answer(&self, _: &PromptEnvelope, _: &ImageBuffer) -> Result<Answer, BackendError> {
        Self::fail()
    }
}

impl Detector for UnreachableBackend {
    fn detect(&self, _: &ImageBuffer) -> Result<Detections, BackendError> {
        Self::fail()
    }
}

impl Embedder for UnreachableBackend {
    fn embed(&self, _: &[String]) -> Result<Vec<Vec<f64>>, BackendError> {
        Self::fail()
    }
}

impl Paraphraser for UnreachableBackend {
    fn paraphrase(&self, _: &str, _: usize) -> Result<Vec<String>, BackendError> {
        Self::fail()
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn image_key(img: &ImageBuffer) -> u64 {
    let mut bytes = Vec::with_capacity(8 + img.data().len());
    bytes.extend_from_slice(&img.width().to_le_bytes());
    bytes.extend_from_slice(&img.height().to_le_bytes());
    bytes.extend_from_slice(img.data());
    fnv1a(&bytes)
}

/// Returns the boxes registered for an exact pixel match and nothing for
/// any other frame. Lets a mock-backed server recognise known fixtures.
#[derive(Debug, Clone, Default)]
pub struct FixtureDetector {
    fixtures: HashMap<u64, Vec<BoundingBox>>,
}

impl FixtureDetector {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, img: &ImageBuffer, boxes: Vec<BoundingBox>) {
        self.fixtures.insert(image_key(img), boxes);
    }

    /// Registers every image in `dir` that has a `.boxes.json` sidecar.
    pub fn from_dir(dir: &std::path::Path) -> Result<Self, BackendError> {
        let mut out = Self::new();
        let entries = std::fs::read_dir(dir)
            .map_err(|e| BackendError::InvalidConfig(format!("{}: {e}", dir.display())))?;
        let mut paths: Vec<_> = entries.filter_map(|e| e.ok().map(|e| e.path())).collect();
        paths.sort();
        for path in paths {
            let sidecar = super::wire::sidecar_path(&path);
            if path.is_file() && sidecar.is_file() {
                let img = ImageBuffer::open(&path).map_err(|e| BackendError::Image(e.to_string()))?;
                out.insert(&img, super::wire::read_sidecar(&sidecar)?.boxes);
            }
        }
        Ok(out)
    }

    pub fn len(&self) -> usize {
        self.fixtures.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fixtures.is_empty()
    }
}

impl Detector for FixtureDetector {
    fn detect(&self, img: &ImageBuffer) -> Result<Detections, BackendError> {
        Ok(Detections {
            boxes: self.fixtures.get(&image_key(img)).cloned().unwrap_or_default(),
            warnings: Vec::new(),
        })
    }
}

/// Pseudo-random unit vectors seeded from a hash of each token.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    seed: u64,
    dim: usize,
}

impl HashEmbedder {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            dim: HASH_EMBED_DIM,
        }
    }

    pub fn vector(&self, token: &str) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(fnv1a(token.as_bytes()) ^ self.seed);
        loop {
            let v: Vec<f64> = (0..self.dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-6 {
                return v.into_iter().map(|x| x / norm).collect();
            }
        }
    }
}

impl Default for HashEmbedder {
    fn default() -> Self {
        Self::new(0)
    }
}

impl Embedder for HashEmbedder {
    fn embed(&self, tokens: &[String]) -> Result<Vec<Vec<f64>>, BackendError> {
        Ok(tokens.iter().map(|t| self.vector(t)).collect())
    }
}

/// Standard basis vectors over a fixed vocabulary.
#[derive(Debug, Clone, Default)]
pub struct OneHotEmbedder {
    index: HashMap<String, usize>,
}

impl OneHotEmbedder {
    /// Duplicate entries keep their first position.
    pub fn new<I, S>(vocabulary: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut index = HashMap::new();
        for word in vocabulary {
            let next = index.len();
            index.entry(word.into()).or_insert(next);
        }
        Self { index }
    }

    pub fn dim(&self) -> usize {
        self.index.len()
    }
}

impl Embedder for OneHotEmbedder {
    fn embed(&self, tokens: &[String]) -> Result<Vec<Vec<f64>>, BackendError> {
        tokens
            .iter()
            .map(|t| {
                let i = *self
                    .index
                    .get(t)
                    .ok_or_else(|| BackendError::UnknownToken(t.clone()))?;
                let mut v = vec![0.0; self.dim()];
                v[i] = 1.0;
                Ok(v)
            })
            .collect()
    }
}

impl<T: Embedder + ?Sized> Embedder for Arc<T> {
    fn embed(&self, tokens: &[String]) -> Result<Vec<Vec<f64>>, BackendError> {
        (**self).embed(tokens)
    }
}

/// Returns a fixed list of rewrites, truncated to the requested count.
#[derive(Debug, Clone, Default)]
pub struct MockParaphraser {
    variants: Vec<String>,
}

impl MockParaphraser {
    pub fn new<I, S>(variants: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            variants: variants.into_iter().map(Into::into).collect(),
        }
    }
}

impl Paraphraser for MockParaphraser {
    fn paraphrase(&self, _question: &str, n: usize) -> Result<Vec<String>, BackendError> {
        Ok(self.variants.iter().take(n).cloned().collect())
    }
}

/// Deterministic rewrites built from fixed phrasing patterns.
#[derive(Debug, Clone, Default)]
pub struct TemplateParaphraser;

impl Paraphraser for TemplateParaphraser {
    fn paraphrase(&self, question: &str, n: usize) -> Result<Vec<String>, BackendError> {
        let core = question.trim().trim_end_matches(['?', '.', '!']);
        let lowered = {
            let mut c = core.chars();
            match c.next() {
                Some(first) => first.to_lowercase().collect::<String>() + c.as_str(),
                None => String::new(),
            }
        };
        let patterns = [
            format!("Could you tell me: {lowered}?"),
            format!("Please help me with this: {lowered}?"),
            format!("I need to know, {lowered}?"),
            format!("Quick question: {lowered}?"),
        ];
        Ok(patterns.into_iter().take(n).collect())
    }
}
