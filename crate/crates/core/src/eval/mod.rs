//! Response-quality metrics: ROUGE-1, ROUGE-L, BERTScore and word counts,
//! aggregated per dataset category.
//!
//! BERTScore here is the plain greedy-matching form: no idf weighting and no
//! baseline rescaling, and negative cosine similarities count as zero, so
//! scores are comparable only within this harness.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{BackendError, Embedder};
use crate::dataset::DatasetRecord;
use crate::quality::Category;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("no prediction for record {0:?}")]
    MissingPrediction(String),
    #[error("record id {0:?} appears more than once")]
    DuplicateId(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

/// Lowercase alphanumeric tokens.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TokenList(Vec<String>);

impl TokenList {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    /// Space-joined rendering; tokenizing it gives back the same list.
    pub fn render(&self) -> String {
        self.0.join(" ")
    }
}

impl<S: Into<String>> FromIterator<S> for TokenList {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        TokenList(iter.into_iter().map(Into::into).collect())
    }
}

pub fn tokenize(text: &str) -> TokenList {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl MetricScore {
    pub fn from_pr(precision: f64, recall: f64) -> Self {
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Self {
            precision,
            recall,
            f1,
        }
    }

    fn from_counts(matched: f64, candidate_len: usize, reference_len: usize) -> Self {
        let ratio = |n: usize| if n == 0 { 0.0 } else { matched / n as f64 };
        Self::from_pr(ratio(candidate_len), ratio(reference_len))
    }
}

fn counts(tokens: &TokenList) -> HashMap<&str, usize> {
    let mut m = HashMap::new();
    for t in tokens.tokens() {
        *m.entry(t.as_str()).or_insert(0) += 1;
    }
    m
}

/// Clipped unigram overlap.
pub fn unigram_overlap(candidate: &TokenList, reference: &TokenList) -> usize {
    let refs = counts(reference);
    counts(candidate)
        .into_iter()
        .map(|(t, c)| c.min(refs.get(t).copied().unwrap_or(0)))
        .sum()
}

pub fn rouge1(candidate: &TokenList, reference: &TokenList) -> MetricScore {
    let o = unigram_overlap(candidate, reference);
    MetricScore::from_counts(o as f64, candidate.len(), reference.len())
}

/// Longest common subsequence length, single-row dynamic programme.
pub fn lcs_len(a: &[String], b: &[String]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut row = vec![0usize; b.len() + 1];
    for x in a {
        // `diag` holds the previous row's value at j
        let mut diag = 0;
        for (j, y) in b.iter().enumerate() {
            let up = row[j + 1];
            row[j + 1] = if x == y { diag + 1 } else { row[j].max(up) };
            diag = up;
        }
    }
    row[b.len()]
}

pub fn rouge_l(candidate: &TokenList, reference: &TokenList) -> MetricScore {
    let l = lcs_len(candidate.tokens(), reference.tokens());
    MetricScore::from_counts(l as f64, candidate.len(), reference.len())
}

/// Cosine similarity clamped to [0, 1]; opposed vectors count as unrelated.
fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        (dot / (na * nb)).clamp(0.0, 1.0)
    }
}

/// Greedy-matching BERTScore over token embeddings.
///
/// Candidate and reference tokens are embedded in one batch so that every
/// vector comes from the same provider state.
pub fn bertscore(
    candidate: &TokenList,
    reference: &TokenList,
    embed: &dyn Embedder,
) -> Result<MetricScore, BackendError> {
    if candidate.is_empty() || reference.is_empty() {
        return Ok(MetricScore::default());
    }
    let batch: Vec<String> = candidate
        .tokens()
        .iter()
        .chain(reference.tokens())
        .cloned()
        .collect();
    let vectors = embed.embed(&batch)?;
    if vectors.len() != batch.len() {
        return Err(BackendError::MalformedResponse(format!(
            "expected {} vectors, got {}",
            batch.len(),
            vectors.len()
        )));
    }
    let dim = vectors[0].len();
    if let Some(bad) = vectors.iter().find(|v| v.len() != dim) {
        return Err(BackendError::DimensionMismatch {
            expected: dim,
            found: bad.len(),
        });
    }
    let (cand, refs) = vectors.split_at(candidate.len());
    let sim: Vec<Vec<f64>> = cand
        .iter()
        .map(|c| refs.iter().map(|r| cosine(c, r)).collect())
        .collect();
    let precision = sim
        .iter()
        .map(|row| row.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .sum::<f64>()
        / cand.len() as f64;
    let recall = (0..refs.len())
        .map(|j| sim.iter().map(|row| row[j]).fold(f64::NEG_INFINITY, f64::max))
        .sum::<f64>()
        / refs.len() as f64;
    Ok(MetricScore::from_pr(precision, recall))
}

/// One line of a predictions file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Prediction {
    pub id: String,
    pub text: String,
}

#[derive(Debug, Error, PartialEq)]
#[error("predictions line {line}: {message}")]
pub struct PredictionsError {
    pub line: usize,
    pub message: String,
}

/// Parses JSON-lines `{"id", "text"}` predictions. Blank lines are skipped;
/// a repeated id is an error.
pub fn parse_predictions(text: &str) -> Result<HashMap<String, String>, PredictionsError> {
    let mut out = HashMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let p: Prediction = serde_json::from_str(raw).map_err(|e| PredictionsError {
            line,
            message: e.to_string(),
        })?;
        if out.insert(p.id.clone(), p.text).is_some() {
            return Err(PredictionsError {
                line,
                message: format!("duplicate id {:?}", p.id),
            });
        }
    }
    Ok(out)
}

/// Reference text for a record: description, then suggestion when present.
pub fn reference_text(record: &DatasetRecord) -> String {
    match &record.response.suggestion {
        Some(s) => format!("{} {}", record.response.description, s),
        None => record.response.description.clone(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordScore {
    pub id: String,
    pub category: Category,
    pub bertscore: MetricScore,
    pub rouge1: MetricScore,
    pub rouge_l: MetricScore,
    pub word_count: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub count: usize,
    pub bertscore_f1: f64,
    pub rouge1_f1: f64,
    pub rouge_l_f1: f64,
    pub word_count: f64,
}

impl Aggregate {
    fn of<'a>(scores: impl Iterator<Item = &'a RecordScore>) -> Self {
        let mut agg = Aggregate::default();
        for s in scores {
            agg.count += 1;
            agg.bertscore_f1 += s.bertscore.f1;
            agg.rouge1_f1 += s.rouge1.f1;
            agg.rouge_l_f1 += s.rouge_l.f1;
            agg.word_count += s.word_count as f64;
        }
        if agg.count > 0 {
            let n = agg.count as f64;
            agg.bertscore_f1 /= n;
            agg.rouge1_f1 /= n;
            agg.rouge_l_f1 /= n;
            agg.word_count /= n;
        }
        agg
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub overall: Aggregate,
    /// Only categories with at least one record appear.
    pub categories: BTreeMap<Category, Aggregate>,
    /// Sorted by id.
    pub records: Vec<RecordScore>,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

pub fn score_record(
    record: &DatasetRecord,
    prediction: &str,
    embed: &dyn Embedder,
) -> Result<RecordScore, BackendError> {
    let cand = tokenize(prediction);
    let refs = tokenize(&reference_text(record));
    Ok(RecordScore {
        id: record.id.clone(),
        category: record.category,
        bertscore: bertscore(&cand, &refs, embed)?,
        rouge1: rouge1(&cand, &refs),
        rouge_l: rouge_l(&cand, &refs),
        word_count: word_count(prediction),
    })
}

/// Scores every record against its prediction. Records are processed in id
/// order, so the report does not depend on input order.
pub fn evaluate(
    dataset: &[DatasetRecord],
    predictions: &HashMap<String, String>,
    embed: &dyn Embedder,
) -> Result<EvalReport, EvalError> {
    let mut ordered: Vec<&DatasetRecord> = dataset.iter().collect();
    ordered.sort_by(|a, b| a.id.cmp(&b.id));
    let mut seen = HashSet::new();
    for r in &ordered {
        if !seen.insert(r.id.as_str()) {
            return Err(EvalError::DuplicateId(r.id.clone()));
        }
    }

    let mut records = Vec::with_capacity(ordered.len());
    for r in ordered {
        let prediction = predictions
            .get(&r.id)
            .ok_or_else(|| EvalError::MissingPrediction(r.id.clone()))?;
        records.push(score_record(r, prediction, embed)?);
    }

    let categories = Category::ALL
        .into_iter()
        .filter_map(|c| {
            let agg = Aggregate::of(records.iter().filter(|s| s.category == c));
            (agg.count > 0).then_some((c, agg))
        })
        .collect();
    Ok(EvalReport {
        overall: Aggregate::of(records.iter()),
        categories,
        records,
    })
}
