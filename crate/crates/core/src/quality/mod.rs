//! Capture-quality assessment.
//!
//! An image and the question asked about it are reduced to a handful of
//! measurements (mean luma, Laplacian variance, the matched target box) and
//! classified into exactly one [`FailureMode`]. Classification follows a
//! fixed precedence: lighting, then blur, then question relevance, then
//! target presence, framing and distance. Pixel defects come first because
//! they make detector output meaningless.

mod metrics;
mod target;

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image::{ImageBuffer, ImageError};

pub use metrics::{compute_blur_score, compute_luma, pixel_luma};
pub use target::{extract_target_term, extract_target_term_with, Stopwords, MAX_TARGET_WORDS};

/// Slack allowed when a box's far edge exceeds the frame.
pub const BOX_EPSILON: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum BoxError {
    #[error("box label is empty")]
    EmptyLabel,
    #[error("box field {field} = {value} is not finite")]
    NonFinite { field: &'static str, value: f64 },
    #[error("box confidence {0} outside [0, 1]")]
    Confidence(f64),
    #[error("box has non-positive size {w}x{h}")]
    Degenerate { w: f64, h: f64 },
    #[error("box ({x}, {y}, {w}, {h}) leaves the unit frame")]
    OutOfFrame { x: f64, y: f64, w: f64, h: f64 },
}

/// Detection in normalized frame coordinates; origin top-left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub label: String,
    pub confidence: f64,
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BoundingBox {
    /// Validating constructor. The label is lowercased.
    pub fn new(
        label: impl Into<String>,
        confidence: f64,
        x: f64,
        y: f64,
        w: f64,
        h: f64,
    ) -> Result<Self, BoxError> {
        let b = Self {
            label: label.into().to_lowercase(),
            confidence,
            x,
            y,
            w,
            h,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<(), BoxError> {
        if self.label.trim().is_empty() {
            return Err(BoxError::EmptyLabel);
        }
        for (field, value) in [
            ("confidence", self.confidence),
            ("x", self.x),
            ("y", self.y),
            ("w", self.w),
            ("h", self.h),
        ] {
            if !value.is_finite() {
                return Err(BoxError::NonFinite { field, value });
            }
        }
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(BoxError::Confidence(self.confidence));
        }
        if self.w <= 0.0 || self.h <= 0.0 {
            return Err(BoxError::Degenerate {
                w: self.w,
                h: self.h,
            });
        }
        if self.x < 0.0
            || self.y < 0.0
            || self.x + self.w > 1.0 + BOX_EPSILON
            || self.y + self.h > 1.0 + BOX_EPSILON
        {
            return Err(BoxError::OutOfFrame {
                x: self.x,
                y: self.y,
                w: self.w,
                h: self.h,
            });
        }
        Ok(())
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QualityConfig {
    /// Laplacian variance below which a frame counts as blurred.
    pub blur_threshold: f64,
    pub dark_luma: f64,
    pub lowlight_luma: f64,
    /// Distance from a frame border, as a fraction of the frame, at which a
    /// box counts as cut.
    pub edge_margin: f64,
    pub tau_far: f64,
    pub tau_near: f64,
    pub min_confidence: f64,
    /// Cosine threshold for embedding-based label matching.
    pub relevance_threshold: f64,
}

impl Default for QualityConfig {
    fn default() -> Self {
        Self {
            blur_threshold: 100.0,
            dark_luma: 20.0,
            lowlight_luma: 50.0,
            edge_margin: 0.02,
            tau_far: 0.05,
            tau_near: 0.60,
            min_confidence: 0.30,
            relevance_threshold: 0.50,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
#[error("invalid quality config: {0}")]
pub struct ConfigError(pub String);

impl QualityConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let fields = [
            ("blur_threshold", self.blur_threshold),
            ("dark_luma", self.dark_luma),
            ("lowlight_luma", self.lowlight_luma),
            ("edge_margin", self.edge_margin),
            ("tau_far", self.tau_far),
            ("tau_near", self.tau_near),
            ("min_confidence", self.min_confidence),
            ("relevance_threshold", self.relevance_threshold),
        ];
        for (name, v) in fields {
            if !v.is_finite() || v < 0.0 {
                return Err(ConfigError(format!("{name} must be a finite value >= 0, got {v}")));
            }
        }
        if self.dark_luma >= self.lowlight_luma {
            return Err(ConfigError("dark_luma must be below lowlight_luma".into()));
        }
        if self.tau_far >= self.tau_near {
            return Err(ConfigError("tau_far must be below tau_near".into()));
        }
        if self.edge_margin > 0.25 {
            return Err(ConfigError("edge_margin must lie in [0, 0.25]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Edge {
    Left,
    Right,
    Top,
    Bottom,
}

impl Edge {
    pub const ALL: [Edge; 4] = [Edge::Left, Edge::Right, Edge::Top, Edge::Bottom];

    pub fn as_str(self) -> &'static str {
        match self {
            Edge::Left => "left",
            Edge::Right => "right",
            Edge::Top => "top",
            Edge::Bottom => "bottom",
        }
    }

    pub fn opposite(self) -> Edge {
        match self {
            Edge::Left => Edge::Right,
            Edge::Right => Edge::Left,
            Edge::Top => Edge::Bottom,
            Edge::Bottom => Edge::Top,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceKind {
    TooFar,
    TooClose,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageDefect {
    Blur,
    Dark,
    LowLight,
}

/// The outcome of an assessment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FailureMode {
    GoodQuality,
    IncompleteTarget { cut_edges: BTreeSet<Edge> },
    TargetAbsent,
    InappropriateDistance { distance: DistanceKind },
    LowQualityImage { defect: ImageDefect },
    IrrelevantQuestion,
}

impl FailureMode {
    pub fn incomplete(edges: impl IntoIterator<Item = Edge>) -> Self {
        let cut_edges: BTreeSet<Edge> = edges.into_iter().collect();
        assert!(!cut_edges.is_empty(), "incomplete target needs a cut edge");
        FailureMode::IncompleteTarget { cut_edges }
    }

    pub fn category(&self) -> Category {
        match self {
            FailureMode::GoodQuality => Category::Good,
            FailureMode::IncompleteTarget { .. } => Category::IncompleteTarget,
            FailureMode::TargetAbsent => Category::TargetAbsent,
            FailureMode::InappropriateDistance { .. } => Category::Distance,
            FailureMode::LowQualityImage { .. } => Category::LowQuality,
            FailureMode::IrrelevantQuestion => Category::Irrelevant,
        }
    }

    pub fn is_good(&self) -> bool {
        matches!(self, FailureMode::GoodQuality)
    }

    /// Fine-grained key: `good`, `incomplete_target`, `target_absent`,
    /// `too_far`, `too_close`, `blur`, `dark`, `low_light` or `irrelevant`.
    pub fn key(&self) -> &'static str {
        match self {
            FailureMode::GoodQuality => "good",
            FailureMode::IncompleteTarget { .. } => "incomplete_target",
            FailureMode::TargetAbsent => "target_absent",
            FailureMode::InappropriateDistance {
                distance: DistanceKind::TooFar,
            } => "too_far",
            FailureMode::InappropriateDistance {
                distance: DistanceKind::TooClose,
            } => "too_close",
            FailureMode::LowQualityImage {
                defect: ImageDefect::Blur,
            } => "blur",
            FailureMode::LowQualityImage {
                defect: ImageDefect::Dark,
            } => "dark",
            FailureMode::LowQualityImage {
                defect: ImageDefect::LowLight,
            } => "low_light",
            FailureMode::IrrelevantQuestion => "irrelevant",
        }
    }
}

impl fmt::Display for FailureMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FailureMode::IncompleteTarget { cut_edges } => {
                let edges: Vec<_> = cut_edges.iter().map(|e| e.as_str()).collect();
                write!(f, "incomplete_target({})", edges.join(","))
            }
            other => f.write_str(other.key()),
        }
    }
}

/// The six-way label shared by datasets and reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Good,
    TargetAbsent,
    IncompleteTarget,
    Distance,
    LowQuality,
    Irrelevant,
}

impl Category {
    pub const ALL: [Category; 6] = [
        Category::Good,
        Category::TargetAbsent,
        Category::IncompleteTarget,
        Category::Distance,
        Category::LowQuality,
        Category::Irrelevant,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Good => "good",
            Category::TargetAbsent => "target_absent",
            Category::IncompleteTarget => "incomplete_target",
            Category::Distance => "distance",
            Category::LowQuality => "low_quality",
            Category::Irrelevant => "irrelevant",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Category {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Category::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown category {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub mode: FailureMode,
    pub blur_score: f64,
    pub mean_luma: f64,
    pub target_term: Option<String>,
    pub target_box: Option<BoundingBox>,
    pub area_ratio: Option<f64>,
    pub answerable: bool,
    /// Set when the violated threshold is missed by a factor of two or more.
    pub severe: bool,
}

impl QualityReport {
    pub fn category(&self) -> Category {
        self.mode.category()
    }
}

/// Decides whether a detection label refers to the question's target.
pub trait LabelMatcher {
    fn matches(&self, term: &str, label: &str) -> bool;
}

/// Case-insensitive containment in either direction.
#[derive(Debug, Clone, Copy, Default)]
pub struct SubstringMatcher;

impl LabelMatcher for SubstringMatcher {
    fn matches(&self, term: &str, label: &str) -> bool {
        let term = term.to_lowercase();
        let label = label.to_lowercase();
        !term.is_empty() && !label.is_empty() && (label.contains(&term) || term.contains(&label))
    }
}

/// Orders candidate boxes: higher confidence, then larger area, then smaller
/// x, then smaller y come first.
fn box_preference(a: &BoundingBox, b: &BoundingBox) -> Ordering {
    b.confidence
        .total_cmp(&a.confidence)
        .then_with(|| b.area().total_cmp(&a.area()))
        .then_with(|| a.x.total_cmp(&b.x))
        .then_with(|| a.y.total_cmp(&b.y))
}

pub fn cut_edges(b: &BoundingBox, margin: f64) -> BTreeSet<Edge> {
    let mut edges = BTreeSet::new();
    if b.x <= margin {
        edges.insert(Edge::Left);
    }
    if b.right() >= 1.0 - margin {
        edges.insert(Edge::Right);
    }
    if b.y <= margin {
        edges.insert(Edge::Top);
    }
    if b.bottom() >= 1.0 - margin {
        edges.insert(Edge::Bottom);
    }
    edges
}

/// Classifies a capture using substring label matching.
pub fn assess(
    img: &ImageBuffer,
    question: &str,
    detections: &[BoundingBox],
    cfg: &QualityConfig,
) -> Result<QualityReport, ImageError> {
    assess_with(img, question, detections, cfg, &SubstringMatcher)
}

pub fn assess_with(
    img: &ImageBuffer,
    question: &str,
    detections: &[BoundingBox],
    cfg: &QualityConfig,
    matcher: &dyn LabelMatcher,
) -> Result<QualityReport, ImageError> {
    let blur_score = compute_blur_score(img)?;
    let mean_luma = compute_luma(img);
    let target_term = extract_target_term(question);

    let mut report = QualityReport {
        mode: FailureMode::GoodQuality,
        blur_score,
        mean_luma,
        target_term: target_term.clone(),
        target_box: None,
        area_ratio: None,
        answerable: false,
        severe: false,
    };

    let low = |defect| FailureMode::LowQualityImage { defect };
    if mean_luma < cfg.dark_luma {
        report.mode = low(ImageDefect::Dark);
        report.severe = 2.0 * mean_luma <= cfg.dark_luma;
        return Ok(report);
    }
    if mean_luma < cfg.lowlight_luma {
        report.mode = low(ImageDefect::LowLight);
        report.severe = 2.0 * mean_luma <= cfg.lowlight_luma;
        return Ok(report);
    }
    if blur_score < cfg.blur_threshold {
        report.mode = low(ImageDefect::Blur);
        report.severe = 2.0 * blur_score <= cfg.blur_threshold;
        return Ok(report);
    }
    let Some(term) = target_term else {
        report.mode = FailureMode::IrrelevantQuestion;
        return Ok(report);
    };

    let matched = detections
        .iter()
        .filter(|b| b.confidence >= cfg.min_confidence)
        .filter(|b| matcher.matches(&term, &b.label))
        .min_by(|a, b| box_preference(a, b))
        .cloned();
    let Some(target_box) = matched else {
        report.mode = FailureMode::TargetAbsent;
        return Ok(report);
    };

    let area = target_box.area();
    let edges = cut_edges(&target_box, cfg.edge_margin);
    report.target_box = Some(target_box);
    report.area_ratio = Some(area);

    report.mode = if !edges.is_empty() {
        FailureMode::IncompleteTarget { cut_edges: edges }
    } else if area < cfg.tau_far {
        report.severe = 2.0 * area <= cfg.tau_far;
        FailureMode::InappropriateDistance {
            distance: DistanceKind::TooFar,
        }
    } else if area > cfg.tau_near {
        report.severe = area >= 2.0 * cfg.tau_near;
        FailureMode::InappropriateDistance {
            distance: DistanceKind::TooClose,
        }
    } else {
        FailureMode::GoodQuality
    };
    report.answerable = report.mode.is_good();
    Ok(report)
}
