//! Instruction dataset of (question, image, response) records.
//!
//! A dataset is a directory holding `manifest.jsonl` and an `images/`
//! folder. Each manifest line is one [`DatasetRecord`] with keys in a fixed
//! order, so saving the same records twice gives identical bytes.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::{Component, Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{BackendError, Paraphraser};
use crate::quality::Category;

pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const IMAGES_DIR: &str = "images";

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("i/o failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: parse error: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: invalid field `{field}`: {message}")]
    Invariant {
        line: usize,
        field: &'static str,
        message: String,
    },
    #[error("line {line}: image {path} does not exist")]
    MissingImage { line: usize, path: PathBuf },
}

impl DatasetError {
    pub fn line(&self) -> Option<usize> {
        match self {
            DatasetError::Io { .. } => None,
            DatasetError::Parse { line, .. }
            | DatasetError::Invariant { line, .. }
            | DatasetError::MissingImage { line, .. } => Some(*line),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Manual,
    Augmented,
    Simulated,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResponseText {
    pub description: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub suggestion: Option<String>,
}

/// One annotated query. Field order is the serialization order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetRecord {
    pub id: String,
    pub question: String,
    /// Path relative to the dataset root.
    pub image: String,
    pub category: Category,
    pub answerable: bool,
    pub response: ResponseText,
    pub source: Source,
}

fn is_safe_relative(path: &str) -> bool {
    !path.is_empty()
        && !path.contains('\\')
        && Path::new(path)
            .components()
            .all(|c| matches!(c, Component::Normal(_) | Component::CurDir))
}

impl DatasetRecord {
    /// Checks the record invariants; `Err` carries the offending field.
    pub fn check(&self) -> Result<(), (&'static str, String)> {
        if self.id.trim().is_empty() {
            return Err(("id", "must not be empty".into()));
        }
        if self.question.trim().is_empty() {
            return Err(("question", "must not be empty".into()));
        }
        if self.response.description.trim().is_empty() {
            return Err(("response.description", "must not be empty".into()));
        }
        if !is_safe_relative(&self.image) {
            return Err((
                "image",
                format!("{:?} must be a relative path without parent components", self.image),
            ));
        }
        let good = self.category == Category::Good;
        if good != self.answerable {
            return Err((
                "answerable",
                format!("must be {good} for category {}", self.category),
            ));
        }
        if good == self.response.suggestion.is_some() {
            let msg = if good {
                "good records carry no suggestion"
            } else {
                "non-good records need a suggestion"
            };
            return Err(("response.suggestion", msg.into()));
        }
        if matches!(&self.response.suggestion, Some(s) if s.trim().is_empty()) {
            return Err(("response.suggestion", "must not be blank".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    pub check_images: bool,
}

/// Reads and validates a JSON-lines manifest. Image paths are resolved
/// against the manifest's directory.
pub fn load_dataset(path: &Path, opts: LoadOptions) -> Result<Vec<DatasetRecord>, DatasetError> {
    let text = fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.to_owned(),
        source,
    })?;
    parse_manifest(&text, path.parent(), opts)
}

pub fn parse_manifest(
    text: &str,
    root: Option<&Path>,
    opts: LoadOptions,
) -> Result<Vec<DatasetRecord>, DatasetError> {
    let mut records = Vec::new();
    let mut ids = HashSet::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let record: DatasetRecord = serde_json::from_str(raw).map_err(|e| DatasetError::Parse {
            line,
            message: e.to_string(),
        })?;
        record
            .check()
            .map_err(|(field, message)| DatasetError::Invariant {
                line,
                field,
                message,
            })?;
        if !ids.insert(record.id.clone()) {
            return Err(DatasetError::Invariant {
                line,
                field: "id",
                message: format!("duplicate id {:?}", record.id),
            });
        }
        if opts.check_images {
            let full = root.unwrap_or(Path::new(".")).join(&record.image);
            if !full.is_file() {
                return Err(DatasetError::MissingImage { line, path: full });
            }
        }
        records.push(record);
    }
    Ok(records)
}

/// Loads `<root>/manifest.jsonl`.
pub fn load_dataset_root(root: &Path, opts: LoadOptions) -> Result<Vec<DatasetRecord>, DatasetError> {
    load_dataset(&root.join(MANIFEST_FILE), opts)
}

/// Canonical manifest text: one compact JSON object per line, LF endings.
pub fn to_manifest(records: &[DatasetRecord]) -> Result<String, DatasetError> {
    let mut out = String::new();
    for (idx, r) in records.iter().enumerate() {
        r.check().map_err(|(field, message)| DatasetError::Invariant {
            line: idx + 1,
            field,
            message,
        })?;
        out.push_str(&serde_json::to_string(r).expect("records serialize"));
        out.push('\n');
    }
    Ok(out)
}

pub fn save_dataset(records: &[DatasetRecord], path: &Path) -> Result<(), DatasetError> {
    let text = to_manifest(records)?;
    let io = |source| DatasetError::Io {
        path: path.to_owned(),
        source,
    };
    let mut f = fs::File::create(path).map_err(io)?;
    f.write_all(text.as_bytes()).map_err(io)?;
    f.flush().map_err(io)
}

/// Asks the paraphraser for `n` rewrites of the record's question and wraps
/// the distinct ones as new records. Rewrites equal to the original or to an
/// earlier rewrite (ignoring case and surrounding space) are dropped, so
/// fewer than `n` records may come back.
pub fn augment_questions(
    paraphraser: &dyn Paraphraser,
    record: &DatasetRecord,
    n: usize,
) -> Result<Vec<DatasetRecord>, BackendError> {
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut seen: HashSet<String> = HashSet::from([record.question.trim().to_lowercase()]);
    let mut out = Vec::new();
    for candidate in paraphraser.paraphrase(&record.question, n)? {
        let candidate = candidate.trim();
        if candidate.is_empty() || !seen.insert(candidate.to_lowercase()) {
            continue;
        }
        out.push(DatasetRecord {
            id: format!("{}-aug{}", record.id, out.len() + 1),
            question: candidate.to_owned(),
            source: Source::Augmented,
            ..record.clone()
        });
        if out.len() == n {
            break;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ratio {
    pub numerator: u64,
    pub denominator: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub total: usize,
    pub counts: BTreeMap<Category, usize>,
    pub answerable: usize,
    /// Reduced answerable/total; absent for an empty dataset.
    pub answerable_ratio: Option<Ratio>,
    /// Rounded to four decimals.
    pub answerable_fraction: Option<f64>,
}

pub fn dataset_stats(records: &[DatasetRecord]) -> DatasetStats {
    let mut counts: BTreeMap<Category, usize> = Category::ALL.into_iter().map(|c| (c, 0)).collect();
    for r in records {
        *counts.entry(r.category).or_insert(0) += 1;
    }
    let answerable = records.iter().filter(|r| r.answerable).count();
    stats_from_counts(counts, answerable)
}

/// Stats from raw tallies, e.g. for corpora kept outside this format.
pub fn stats_from_counts(counts: BTreeMap<Category, usize>, answerable: usize) -> DatasetStats {
    let total: usize = counts.values().sum();
    let (answerable_ratio, answerable_fraction) = if total == 0 {
        (None, None)
    } else {
        let g = num_integer::gcd(answerable as u64, total as u64).max(1);
        let fraction = (answerable as f64 / total as f64 * 1e4).round() / 1e4;
        (
            Some(Ratio {
                numerator: answerable as u64 / g,
                denominator: total as u64 / g,
            }),
            Some(fraction),
        )
    };
    DatasetStats {
        total,
        counts,
        answerable,
        answerable_ratio,
        answerable_fraction,
    }
}
