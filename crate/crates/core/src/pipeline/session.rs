use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::directive::AssistResponse;
use crate::quality::QualityReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionState {
    AwaitingCapture,
    Answered,
    Exhausted,
}

impl SessionState {
    pub fn as_str(self) -> &'static str {
        match self {
            SessionState::AwaitingCapture => "awaiting_capture",
            SessionState::Answered => "answered",
            SessionState::Exhausted => "exhausted",
        }
    }

    pub fn is_open(self) -> bool {
        self == SessionState::AwaitingCapture
    }
}

impl std::fmt::Display for SessionState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attempt {
    pub report: QualityReport,
    pub response: AssistResponse,
    /// Milliseconds since the Unix epoch.
    pub timestamp_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub id: String,
    pub question: String,
    pub max_attempts: usize,
    pub attempts: Vec<Attempt>,
    pub state: SessionState,
}

impl Session {
    pub fn new(id: String, question: String, max_attempts: usize) -> Self {
        Self {
            id,
            question,
            max_attempts,
            attempts: Vec::new(),
            state: SessionState::AwaitingCapture,
        }
    }

    /// Appends an attempt and moves the state machine.
    pub(crate) fn record(&mut self, attempt: Attempt) {
        debug_assert!(self.state.is_open());
        let answered = attempt.response.answer.is_some();
        self.attempts.push(attempt);
        self.state = if answered {
            SessionState::Answered
        } else if self.attempts.len() >= self.max_attempts {
            SessionState::Exhausted
        } else {
            SessionState::AwaitingCapture
        };
    }

    /// Checks the state-machine invariants.
    pub fn is_consistent(&self) -> bool {
        let answered = self.attempts.last().is_some_and(|a| a.response.answer.is_some());
        let earlier_answer = self
            .attempts
            .iter()
            .rev()
            .skip(1)
            .any(|a| a.response.answer.is_some());
        self.attempts.len() <= self.max_attempts
            && !earlier_answer
            && (self.state == SessionState::Answered) == answered
            && (self.state == SessionState::Exhausted)
                == (!answered && self.attempts.len() == self.max_attempts)
    }
}

pub trait Clock: Send + Sync {
    fn now_ms(&self) -> u64;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now_ms(&self) -> u64 {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_millis() as u64)
    }
}

/// Starts at `start` and advances by `step` on every reading.
#[derive(Debug)]
pub struct StepClock {
    next: AtomicU64,
    step: u64,
}

impl StepClock {
    pub fn new(start: u64, step: u64) -> Self {
        Self {
            next: AtomicU64::new(start),
            step,
        }
    }
}

impl Clock for StepClock {
    fn now_ms(&self) -> u64 {
        self.next.fetch_add(self.step, Ordering::SeqCst)
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
enum JournalEntry {
    Open {
        id: String,
        question: String,
        max_attempts: usize,
    },
    Attempt {
        id: String,
        attempt: Box<Attempt>,
    },
}

/// In-memory sessions, optionally mirrored to an append-only JSON-lines
/// journal that is replayed on open.
pub struct SessionStore {
    sessions: Mutex<HashMap<String, Arc<Mutex<Session>>>>,
    ids: Mutex<ChaCha8Rng>,
    journal: Option<Mutex<File>>,
    journal_path: Option<PathBuf>,
}

impl std::fmt::Debug for SessionStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SessionStore")
            .field("sessions", &self.len())
            .field("journal", &self.journal_path)
            .finish()
    }
}

impl SessionStore {
    pub fn new(seed: Option<u64>) -> Self {
        let rng = match seed {
            Some(s) => ChaCha8Rng::seed_from_u64(s),
            None => ChaCha8Rng::from_entropy(),
        };
        Self {
            sessions: Mutex::new(HashMap::new()),
            ids: Mutex::new(rng),
            journal: None,
            journal_path: None,
        }
    }

    /// Replays `path` if it exists, then appends every later change to it.
    pub fn with_journal(mut self, path: &Path) -> std::io::Result<Self> {
        if path.exists() {
            let reader = BufReader::new(File::open(path)?);
            let mut sessions = self.sessions.lock().expect("store lock");
            for (i, line) in reader.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let entry: JournalEntry = serde_json::from_str(&line).map_err(|e| {
                    std::io::Error::new(
                        std::io::ErrorKind::InvalidData,
                        format!("journal line {}: {e}", i + 1),
                    )
                })?;
                match entry {
                    JournalEntry::Open {
                        id,
                        question,
                        max_attempts,
                    } => {
                        let s = Session::new(id.clone(), question, max_attempts);
                        sessions.insert(id, Arc::new(Mutex::new(s)));
                    }
                    JournalEntry::Attempt { id, attempt } => {
                        if let Some(s) = sessions.get(&id) {
                            let mut s = s.lock().expect("session lock");
                            if s.state.is_open() {
                                s.record(*attempt);
                            }
                        }
                    }
                }
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        self.journal = Some(Mutex::new(file));
        self.journal_path = Some(path.to_path_buf());
        Ok(self)
    }

    fn append(&self, entry: &JournalEntry) -> std::io::Result<()> {
        if let Some(j) = &self.journal {
            let mut line = serde_json::to_string(entry).map_err(std::io::Error::other)?;
            line.push('\n');
            let mut f = j.lock().expect("journal lock");
            f.write_all(line.as_bytes())?;
            f.flush()?;
        }
        Ok(())
    }

    fn fresh_id(&self, taken: &HashMap<String, Arc<Mutex<Session>>>) -> String {
        let mut rng = self.ids.lock().expect("id lock");
        loop {
            let id = format!("{:016x}", rng.gen::<u64>());
            if !taken.contains_key(&id) {
                return id;
            }
        }
    }

    pub fn open(&self, question: &str, max_attempts: usize) -> std::io::Result<Arc<Mutex<Session>>> {
        let mut sessions = self.sessions.lock().expect("store lock");
        let id = self.fresh_id(&sessions);
        self.append(&JournalEntry::Open {
            id: id.clone(),
            question: question.to_owned(),
            max_attempts,
        })?;
        let s = Arc::new(Mutex::new(Session::new(id.clone(), question.to_owned(), max_attempts)));
        sessions.insert(id, Arc::clone(&s));
        Ok(s)
    }

    pub fn get(&self, id: &str) -> Option<Arc<Mutex<Session>>> {
        self.sessions.lock().expect("store lock").get(id).cloned()
    }

    /// Records an attempt on an already locked session.
    pub(crate) fn record(&self, session: &mut Session, attempt: Attempt) -> std::io::Result<()> {
        self.append(&JournalEntry::Attempt {
            id: session.id.clone(),
            attempt: Box::new(attempt.clone()),
        })?;
        session.record(attempt);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.sessions.lock().expect("store lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Snapshot of every session, ordered by id.
    pub fn snapshot(&self) -> Vec<Session> {
        let sessions = self.sessions.lock().expect("store lock");
        let mut out: Vec<Session> = sessions
            .values()
            .map(|s| s.lock().expect("session lock").clone())
            .collect();
        out.sort_by(|a, b| a.id.cmp(&b.id));
        out
    }
}
