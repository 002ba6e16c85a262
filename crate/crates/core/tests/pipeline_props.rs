use std::collections::VecDeque;
use std::sync::{Arc, Mutex};
use std::thread;

use proptest::prelude::*;
use viassist_core::backend::mock::MockAnswerer;
use viassist_core::backend::{Answer, Answerer, BackendError, PromptEnvelope};
use viassist_core::pipeline::{Pipeline, PipelineError, SessionState, SessionStore, StepClock};
use viassist_core::{BoundingBox, ImageBuffer, QualityConfig};

const QUESTION: &str = "What does the sign say?";

fn sharp() -> ImageBuffer {
    ImageBuffer::from_fn(64, 64, |x, y| {
        let v = if (x / 2 + y / 2) % 2 == 0 { 40 } else { 220 };
        [v, v, v]
    })
    .unwrap()
}

fn dark() -> ImageBuffer {
    ImageBuffer::filled(64, 64, [4, 4, 4]).unwrap()
}

fn sign(x: f64) -> Vec<BoundingBox> {
    vec![BoundingBox::new("sign", 0.9, x, 0.3, 0.4, 0.4).unwrap()]
}

/// Answers or fails according to a script; fails once the script runs out.
#[derive(Default)]
struct ScriptedAnswerer {
    script: Mutex<VecDeque<bool>>,
    calls: Mutex<Vec<String>>,
}

impl Answerer for ScriptedAnswerer {
    fn answer(&self, prompt: &PromptEnvelope, _img: &ImageBuffer) -> Result<Answer, BackendError> {
        self.calls.lock().unwrap().push(prompt.rendered_prompt.clone());
        if self.script.lock().unwrap().pop_front().unwrap_or(false) {
            Ok(Answer {
                text: "EXIT".into(),
                latency_ms: 1,
            })
        } else {
            Err(BackendError::TransportFailure("connection refused".into()))
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Step {
    /// A good capture; `true` when the answerer succeeds.
    Good(bool),
    Cut,
    Dark,
}

fn step() -> impl Strategy<Value = Step> {
    prop_oneof![
        any::<bool>().prop_map(Step::Good),
        Just(Step::Cut),
        Just(Step::Dark),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(120))]

    #[test]
    fn state_machine_matches_model(max in 1usize..6, steps in prop::collection::vec(step(), 1..10)) {
        let answers: VecDeque<bool> = steps
            .iter()
            .filter_map(|s| match s {
                Step::Good(ok) => Some(*ok),
                _ => None,
            })
            .collect();
        let answerer = Arc::new(ScriptedAnswerer { script: Mutex::new(answers), ..Default::default() });
        let p = Pipeline::new(QualityConfig::default())
            .with_answerer(answerer.clone())
            .with_store(SessionStore::new(Some(3)));
        let id = p.open_session(QUESTION, Some(max)).unwrap().id;

        let mut state = SessionState::AwaitingCapture;
        let mut attempts = 0;
        let mut successful_calls = 0;
        for s in steps {
            let (img, boxes) = match s {
                Step::Good(_) => (sharp(), sign(0.3)),
                Step::Cut => (sharp(), sign(0.0)),
                Step::Dark => (dark(), sign(0.3)),
            };
            let before = answerer.calls.lock().unwrap().len();
            let result = p.submit_attempt(&id, &img, Some(boxes));
            let called = answerer.calls.lock().unwrap().len() - before;
            if state != SessionState::AwaitingCapture {
                let closed = matches!(result, Err(PipelineError::SessionClosed { .. }));
                prop_assert!(closed);
                prop_assert_eq!(called, 0);
                continue;
            }
            attempts += 1;
            let answered = matches!(s, Step::Good(true));
            state = if answered {
                SessionState::Answered
            } else if attempts == max {
                SessionState::Exhausted
            } else {
                SessionState::AwaitingCapture
            };
            prop_assert_eq!(called, usize::from(matches!(s, Step::Good(_))));
            successful_calls += usize::from(answered);
            match (s, result) {
                (Step::Good(false), Err(PipelineError::BackendUnavailable { outcome, .. })) => {
                    prop_assert!(outcome.report.mode.is_good());
                    prop_assert_eq!(outcome.state, state);
                }
                (_, Ok(o)) => {
                    prop_assert_eq!(o.state, state);
                    prop_assert_eq!(o.response.answer.is_some(), answered);
                }
                (s, Err(e)) => prop_assert!(false, "{:?}: {}", s, e),
            }
        }
        prop_assert!(successful_calls <= 1);
        let session = p.session(&id).unwrap();
        prop_assert_eq!(session.state, state);
        prop_assert_eq!(session.attempts.len(), attempts);
        prop_assert!(session.is_consistent());
        prop_assert!(answerer.calls.lock().unwrap().iter().all(|c| c == QUESTION));
    }
}

#[test]
fn concurrent_submits_answer_once() {
    for round in 0..20 {
        let mock = Arc::new(MockAnswerer::always("EXIT"));
        let p = Arc::new(Pipeline::new(QualityConfig::default()).with_answerer(mock.clone()));
        let id = p.open_session(QUESTION, Some(8)).unwrap().id;
        let handles: Vec<_> = (0..8)
            .map(|i| {
                let (p, id) = (Arc::clone(&p), id.clone());
                thread::spawn(move || {
                    let boxes = if (i + round) % 3 == 0 { sign(0.3) } else { sign(0.0) };
                    p.submit_attempt(&id, &sharp(), Some(boxes))
                })
            })
            .collect();
        let results: Vec<_> = handles.into_iter().map(|h| h.join().unwrap()).collect();
        assert_eq!(mock.call_count(), 1);
        let answered = results.iter().filter(|r| matches!(r, Ok(o) if o.response.answer.is_some())).count();
        assert_eq!(answered, 1);
        let session = p.session(&id).unwrap();
        assert_eq!(session.state, SessionState::Answered);
        assert!(session.is_consistent());
        let ok = results.iter().filter(|r| r.is_ok()).count();
        assert_eq!(ok, session.attempts.len());
        assert!(results
            .iter()
            .all(|r| r.is_ok() || matches!(r, Err(PipelineError::SessionClosed { .. }))));
    }
}

fn transcript(seed: u64) -> String {
    let p = Pipeline::new(QualityConfig::default())
        .with_answerer(Arc::new(MockAnswerer::always("EXIT")))
        .with_store(SessionStore::new(Some(seed)))
        .with_clock(Arc::new(StepClock::new(1_700_000_000_000, 250)));
    for q in ["What does the sign say?", "Read the sign for me", "Which sign is this?"] {
        let id = p.open_session(q, None).unwrap().id;
        for x in [0.0, 0.6, 0.3] {
            let _ = p.submit_attempt(&id, &sharp(), Some(sign(x)));
        }
        let _ = p.submit_attempt(&id, &dark(), None);
    }
    serde_json::to_string(&p.store().snapshot()).unwrap()
}

#[test]
fn transcripts_are_reproducible() {
    assert_eq!(transcript(42), transcript(42));
    assert_ne!(transcript(42), transcript(43));
}

#[test]
fn journal_survives_restart() {
    let dir = tempfile::tempdir().unwrap();
    let journal = dir.path().join("sessions.jsonl");
    let store = SessionStore::new(Some(9)).with_journal(&journal).unwrap();
    let p = Pipeline::new(QualityConfig::default())
        .with_answerer(Arc::new(MockAnswerer::always("EXIT")))
        .with_store(store);
    let open = p.open_session(QUESTION, Some(3)).unwrap().id;
    p.submit_attempt(&open, &sharp(), Some(sign(0.0))).unwrap();
    let done = p.open_session(QUESTION, None).unwrap().id;
    p.submit_attempt(&done, &sharp(), Some(sign(0.3))).unwrap();
    let before = p.store().snapshot();
    drop(p);

    let store = SessionStore::new(Some(9)).with_journal(&journal).unwrap();
    assert_eq!(store.snapshot(), before);
    let p = Pipeline::new(QualityConfig::default())
        .with_answerer(Arc::new(MockAnswerer::always("EXIT")))
        .with_store(store);
    assert!(matches!(
        p.submit_attempt(&done, &sharp(), Some(sign(0.3))),
        Err(PipelineError::SessionClosed { .. })
    ));
    let o = p.submit_attempt(&open, &sharp(), Some(sign(0.3))).unwrap();
    assert_eq!(o.state, SessionState::Answered);
    assert_eq!(p.session(&open).unwrap().attempts.len(), 2);
}
