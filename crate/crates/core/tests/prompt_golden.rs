use viassist_core::backend::{build_prompt, PromptError, RESHOOT_HINT};

const GOLDEN: &str = include_str!("golden/prompt_with_hint.txt");

#[test]
fn hint_prompt_matches_golden_bytes() {
    let p = build_prompt("What does the sign say?", true).unwrap();
    assert_eq!(p.rendered_prompt.as_bytes(), GOLDEN.as_bytes());
    assert_eq!(p.question, "What does the sign say?");
    assert!(GOLDEN.ends_with(RESHOOT_HINT));
}

#[test]
fn plain_prompt_is_the_question() {
    for q in ["What does the sign say?", "  spaced  ", "Ünïcode?"] {
        assert_eq!(build_prompt(q, false).unwrap().rendered_prompt, q);
        assert_eq!(build_prompt(q, true).unwrap().rendered_prompt, format!("{q} {RESHOOT_HINT}"));
    }
    assert_eq!(build_prompt(" \t", false), Err(PromptError::EmptyQuestion));
}
