use std::collections::HashMap;
use std::sync::{Arc, OnceLock};

use thiserror::Error;

use super::{is_sight_free, Action};

const BUILTIN_TEMPLATES: &str = include_str!("../../resources/templates.txt");

const MODE_KEYS: [&str; 9] = [
    "good",
    "incomplete_target",
    "target_absent",
    "too_far",
    "too_close",
    "dark",
    "low_light",
    "blur",
    "irrelevant",
];

/// (mode, action) pairs the generator can emit; each needs a sentence.
const REQUIRED: [(&str, &str); 14] = [
    ("good", "no_action"),
    ("incomplete_target", "move_left"),
    ("incomplete_target", "move_right"),
    ("incomplete_target", "move_up"),
    ("incomplete_target", "move_down"),
    ("incomplete_target", "move_back"),
    ("target_absent", "reaim_and_scan"),
    ("too_far", "move_closer"),
    ("too_close", "move_back"),
    ("dark", "improve_lighting"),
    ("low_light", "improve_lighting"),
    ("blur", "hold_steady"),
    ("irrelevant", "suggestion"),
    ("good", "description"),
];

#[derive(Debug, Error, PartialEq)]
pub enum TemplateError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: unknown key {key:?}")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: duplicate key {key:?}")]
    Duplicate { line: usize, key: String },
    #[error("line {line}: unknown placeholder in {key:?}")]
    Placeholder { line: usize, key: String },
    #[error("line {line}: {key:?} asks the user to inspect the image")]
    NotSightFree { line: usize, key: String },
    #[error("missing template {0:?}")]
    Missing(String),
}

/// Immutable sentence table keyed by `mode.action[.magnitude]`.
#[derive(Debug, Clone)]
pub struct TemplateTable {
    entries: HashMap<String, String>,
}

fn known_action(action: &str) -> bool {
    action == "description"
        || action == "suggestion"
        || Action::ALL.iter().any(|a| a.key() == action)
}

fn placeholders_ok(value: &str) -> bool {
    let mut rest = value;
    while let Some(open) = rest.find('{') {
        let Some(close) = rest[open..].find('}') else {
            return false;
        };
        let name = &rest[open + 1..open + close];
        if name != "target" && name != "side" {
            return false;
        }
        rest = &rest[open + close + 1..];
    }
    true
}

impl TemplateTable {
    pub fn parse(text: &str) -> Result<Self, TemplateError> {
        let mut entries = HashMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let (key, value) = trimmed.split_once('=').ok_or(TemplateError::Syntax { line })?;
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() || value.is_empty() {
                return Err(TemplateError::Syntax { line });
            }
            let parts: Vec<&str> = key.split('.').collect();
            let valid = match parts.as_slice() {
                [mode, action] => MODE_KEYS.contains(mode) && known_action(action),
                [mode, action, magnitude] => {
                    MODE_KEYS.contains(mode)
                        && known_action(action)
                        && matches!(*magnitude, "slight" | "large")
                }
                _ => false,
            };
            if !valid {
                return Err(TemplateError::UnknownKey {
                    line,
                    key: key.to_owned(),
                });
            }
            if !placeholders_ok(value) {
                return Err(TemplateError::Placeholder {
                    line,
                    key: key.to_owned(),
                });
            }
            if !is_sight_free(value) {
                return Err(TemplateError::NotSightFree {
                    line,
                    key: key.to_owned(),
                });
            }
            if entries.insert(key.to_owned(), value.to_owned()).is_some() {
                return Err(TemplateError::Duplicate {
                    line,
                    key: key.to_owned(),
                });
            }
        }
        let table = Self { entries };
        for (mode, action) in REQUIRED {
            table.require(&format!("{mode}.{action}"))?;
        }
        for mode in MODE_KEYS {
            table.require(&format!("{mode}.description"))?;
        }
        Ok(table)
    }

    fn require(&self, key: &str) -> Result<(), TemplateError> {
        if self.entries.contains_key(key) {
            Ok(())
        } else {
            Err(TemplateError::Missing(key.to_owned()))
        }
    }

    pub fn builtin() -> Arc<TemplateTable> {
        static BUILTIN: OnceLock<Arc<TemplateTable>> = OnceLock::new();
        BUILTIN
            .get_or_init(|| {
                Arc::new(TemplateTable::parse(BUILTIN_TEMPLATES).expect("built-in templates are valid"))
            })
            .clone()
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> std::io::Result<Result<Self, TemplateError>> {
        let text = std::fs::read_to_string(path)?;
        Ok(Self::parse(&text))
    }

    /// Looks up `mode.action.variant`, falling back to `mode.action`.
    pub fn lookup(&self, mode: &str, action: &str, variant: Option<&str>) -> Option<&str> {
        variant
            .and_then(|v| self.entries.get(&format!("{mode}.{action}.{v}")))
            .or_else(|| self.entries.get(&format!("{mode}.{action}")))
            .map(String::as_str)
    }

    pub fn fill(template: &str, target: &str, side: &str) -> String {
        template.replace("{target}", target).replace("{side}", side)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}
