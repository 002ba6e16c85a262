//! Extraction of the object a question is asking about.

use std::collections::HashSet;
use std::sync::OnceLock;

const BUILTIN_STOPWORDS: &str = include_str!("../../resources/stopwords.txt");

/// Longest target phrase kept, in words.
pub const MAX_TARGET_WORDS: usize = 3;

#[derive(Debug, Clone)]
pub struct Stopwords {
    words: HashSet<String>,
}

impl Stopwords {
    /// Parses a word-per-line list; `#` starts a comment line.
    pub fn parse(text: &str) -> Self {
        let words = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_lowercase)
            .collect();
        Self { words }
    }

    pub fn builtin() -> &'static Stopwords {
        static BUILTIN: OnceLock<Stopwords> = OnceLock::new();
        BUILTIN.get_or_init(|| Stopwords::parse(BUILTIN_STOPWORDS))
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(word)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

/// Lowercases, drops apostrophes, and splits on every other non-alphanumeric
/// character.
fn question_words(question: &str) -> Vec<String> {
    let cleaned: String = question
        .to_lowercase()
        .chars()
        .filter(|c| *c != '\'' && *c != '\u{2019}')
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect();
    cleaned.split_whitespace().map(str::to_owned).collect()
}

/// Target term using the built-in stopword list.
pub fn extract_target_term(question: &str) -> Option<String> {
    extract_target_term_with(question, Stopwords::builtin())
}

/// Removes stopwords, splits what is left into runs of adjacent surviving
/// words, and returns the tail (up to three words) of the last run.
pub fn extract_target_term_with(question: &str, stopwords: &Stopwords) -> Option<String> {
    let mut runs: Vec<Vec<String>> = Vec::new();
    let mut current: Vec<String> = Vec::new();
    for word in question_words(question) {
        if stopwords.contains(&word) {
            if !current.is_empty() {
                runs.push(std::mem::take(&mut current));
            }
        } else {
            current.push(word);
        }
    }
    if !current.is_empty() {
        runs.push(current);
    }
    let last = runs.pop()?;
    let start = last.len().saturating_sub(MAX_TARGET_WORDS);
    Some(last[start..].join(" "))
}
