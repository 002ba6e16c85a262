//! Reshoot directives.
//!
//! A [`QualityReport`] is turned into an ordered list of camera adjustments,
//! each carrying a rendered sentence, and then into the user-facing
//! [`AssistResponse`]. Every sentence must be executable without sight:
//! templates containing visual-inspection advice are rejected at load time.

mod templates;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::quality::{DistanceKind, Edge, FailureMode, ImageDefect, QualityReport};

pub use templates::{TemplateError, TemplateTable};

/// Phrases that ask the user to inspect the photo.
pub const BANNED_PHRASES: [&str; 7] = [
    "look at",
    "see if",
    "check the image",
    "check the photo",
    "visually",
    "ensure the photo shows",
    "make sure you can see",
];

/// Imperative verbs an actionable suggestion must use at least one of.
pub const ACTION_VERBS: [&str; 12] = [
    "move", "hold", "turn", "sweep", "point", "rest", "take", "ask", "step", "bring", "keep",
    "tilt",
];

pub const GOOD_QUALITY_STATEMENT: &str = "The quality of this image is good.";

pub fn is_sight_free(text: &str) -> bool {
    let lower = text.to_lowercase();
    !BANNED_PHRASES.iter().any(|p| lower.contains(p))
}

pub fn has_action_verb(text: &str) -> bool {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .any(|w| ACTION_VERBS.contains(&w))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    MoveLeft,
    MoveRight,
    MoveUp,
    MoveDown,
    MoveCloser,
    MoveBack,
    ImproveLighting,
    HoldSteady,
    ReaimAndScan,
    NoAction,
}

impl Action {
    pub const ALL: [Action; 10] = [
        Action::MoveLeft,
        Action::MoveRight,
        Action::MoveUp,
        Action::MoveDown,
        Action::MoveCloser,
        Action::MoveBack,
        Action::ImproveLighting,
        Action::HoldSteady,
        Action::ReaimAndScan,
        Action::NoAction,
    ];

    pub fn key(self) -> &'static str {
        match self {
            Action::MoveLeft => "move_left",
            Action::MoveRight => "move_right",
            Action::MoveUp => "move_up",
            Action::MoveDown => "move_down",
            Action::MoveCloser => "move_closer",
            Action::MoveBack => "move_back",
            Action::ImproveLighting => "improve_lighting",
            Action::HoldSteady => "hold_steady",
            Action::ReaimAndScan => "reaim_and_scan",
            Action::NoAction => "no_action",
        }
    }

    /// Camera translations and zooms; the only actions with a variable
    /// magnitude.
    pub fn is_movement(self) -> bool {
        matches!(
            self,
            Action::MoveLeft
                | Action::MoveRight
                | Action::MoveUp
                | Action::MoveDown
                | Action::MoveCloser
                | Action::MoveBack
        )
    }

    pub fn opposite(self) -> Option<Action> {
        Some(match self {
            Action::MoveLeft => Action::MoveRight,
            Action::MoveRight => Action::MoveLeft,
            Action::MoveUp => Action::MoveDown,
            Action::MoveDown => Action::MoveUp,
            Action::MoveCloser => Action::MoveBack,
            Action::MoveBack => Action::MoveCloser,
            _ => return None,
        })
    }

    fn for_edge(edge: Edge) -> Action {
        match edge {
            Edge::Left => Action::MoveLeft,
            Edge::Right => Action::MoveRight,
            Edge::Top => Action::MoveUp,
            Edge::Bottom => Action::MoveDown,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Magnitude {
    Slight,
    Moderate,
    Large,
}

impl Magnitude {
    fn variant(self) -> Option<&'static str> {
        match self {
            Magnitude::Slight => Some("slight"),
            Magnitude::Moderate => None,
            Magnitude::Large => Some("large"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Directive {
    pub action: Action,
    pub magnitude: Magnitude,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssistResponse {
    pub description: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub suggestion: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<String>,
    pub mode: FailureMode,
}

impl AssistResponse {
    /// Checks the good/non-good shape rules.
    pub fn is_well_formed(&self) -> bool {
        if self.mode.is_good() {
            self.suggestion.is_none() && self.description.starts_with(GOOD_QUALITY_STATEMENT)
        } else {
            self.suggestion.is_some() && self.answer.is_none()
        }
    }
}

fn side_phrase(edges: &[Edge]) -> String {
    let names: Vec<&str> = edges.iter().map(|e| e.as_str()).collect();
    match names.as_slice() {
        [] => String::new(),
        [one] => (*one).to_owned(),
        [init @ .., last] => format!("{} and {}", init.join(", "), last),
    }
}

/// Actions for a mode, before magnitudes and text are attached.
pub fn actions_for(mode: &FailureMode) -> Vec<Action> {
    match mode {
        FailureMode::GoodQuality => vec![Action::NoAction],
        FailureMode::IncompleteTarget { cut_edges } => {
            let has = |e| cut_edges.contains(&e);
            if (has(Edge::Left) && has(Edge::Right)) || (has(Edge::Top) && has(Edge::Bottom)) {
                vec![Action::MoveBack]
            } else {
                cut_edges.iter().map(|e| Action::for_edge(*e)).collect()
            }
        }
        FailureMode::TargetAbsent => vec![Action::ReaimAndScan],
        FailureMode::InappropriateDistance {
            distance: DistanceKind::TooFar,
        } => vec![Action::MoveCloser],
        FailureMode::InappropriateDistance {
            distance: DistanceKind::TooClose,
        } => vec![Action::MoveBack],
        FailureMode::LowQualityImage {
            defect: ImageDefect::Dark | ImageDefect::LowLight,
        } => vec![Action::ImproveLighting],
        FailureMode::LowQualityImage {
            defect: ImageDefect::Blur,
        } => vec![Action::HoldSteady],
        FailureMode::IrrelevantQuestion => vec![],
    }
}

/// Template-backed directive generation and response rendering.
#[derive(Debug, Clone)]
pub struct DirectiveGenerator {
    templates: Arc<TemplateTable>,
}

impl Default for DirectiveGenerator {
    fn default() -> Self {
        Self::new(TemplateTable::builtin())
    }
}

impl DirectiveGenerator {
    pub fn new(templates: Arc<TemplateTable>) -> Self {
        Self { templates }
    }

    pub fn templates(&self) -> &TemplateTable {
        &self.templates
    }

    fn target_of(report: &QualityReport) -> &str {
        report.target_term.as_deref().unwrap_or("object")
    }

    fn sentence(&self, mode: &FailureMode, action: &str, variant: Option<&str>, target: &str) -> String {
        let side = match mode {
            FailureMode::IncompleteTarget { cut_edges } => {
                side_phrase(&cut_edges.iter().copied().collect::<Vec<_>>())
            }
            _ => String::new(),
        };
        let template = self
            .templates
            .lookup(mode.key(), action, variant)
            .expect("template table was checked for completeness");
        TemplateTable::fill(template, target, &side)
    }

    /// Renders a directive for `action` at an explicit magnitude.
    pub fn directive(
        &self,
        report: &QualityReport,
        action: Action,
        magnitude: Magnitude,
    ) -> Directive {
        let magnitude = if action.is_movement() {
            magnitude
        } else {
            Magnitude::Moderate
        };
        let text = self.sentence(&report.mode, action.key(), magnitude.variant(), Self::target_of(report));
        Directive {
            action,
            magnitude,
            text,
        }
    }

    pub fn generate(&self, report: &QualityReport) -> Vec<Directive> {
        let magnitude = if report.severe {
            Magnitude::Large
        } else {
            Magnitude::Moderate
        };
        actions_for(&report.mode)
            .into_iter()
            .map(|a| self.directive(report, a, magnitude))
            .collect()
    }

    pub fn render(&self, report: &QualityReport, directives: &[Directive]) -> AssistResponse {
        let target = Self::target_of(report);
        let description = self.sentence(&report.mode, "description", None, target);
        let suggestion = match &report.mode {
            FailureMode::GoodQuality => None,
            FailureMode::IrrelevantQuestion if directives.is_empty() => {
                Some(self.sentence(&report.mode, "suggestion", None, target))
            }
            _ => Some(
                directives
                    .iter()
                    .map(|d| d.text.as_str())
                    .collect::<Vec<_>>()
                    .join(" "),
            ),
        };
        AssistResponse {
            description,
            suggestion,
            answer: None,
            mode: report.mode.clone(),
        }
    }

    /// `generate` followed by `render`.
    pub fn respond(&self, report: &QualityReport) -> (Vec<Directive>, AssistResponse) {
        let directives = self.generate(report);
        let response = self.render(report, &directives);
        (directives, response)
    }
}

/// Directives using the built-in templates.
pub fn generate_directives(report: &QualityReport) -> Vec<Directive> {
    DirectiveGenerator::default().generate(report)
}

/// Response using the built-in templates.
pub fn render_response(report: &QualityReport, directives: &[Directive]) -> AssistResponse {
    DirectiveGenerator::default().render(report, directives)
}
