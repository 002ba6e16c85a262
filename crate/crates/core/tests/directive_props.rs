mod common;

use proptest::prelude::*;
use viassist_core::directive::{
    generate_directives, has_action_verb, is_sight_free, render_response, Action, DirectiveGenerator, Magnitude,
    GOOD_QUALITY_STATEMENT,
};
use viassist_core::quality::Edge;
use viassist_core::sim::{apply_directive, out_of_view_fraction, Rect, SimCamera, SimWorld, DEFAULT_STEP};
use viassist_core::{FailureMode, QualityReport};

fn report(mode: FailureMode, term: Option<String>, severe: bool) -> QualityReport {
    QualityReport {
        answerable: mode.is_good(),
        mode,
        blur_score: 500.0,
        mean_luma: 120.0,
        target_term: term,
        target_box: None,
        area_ratio: None,
        severe,
    }
}

fn term() -> impl Strategy<Value = Option<String>> {
    prop::option::of(prop::sample::select(vec!["sign", "menu board", "cereal box", "pill bottle"]).prop_map(String::from))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn responses_are_deterministic_and_well_formed(mode in common::mode(), t in term(), severe in any::<bool>()) {
        let r = report(mode, t, severe);
        let (d1, a1) = DirectiveGenerator::default().respond(&r);
        let (d2, a2) = DirectiveGenerator::default().respond(&r);
        prop_assert_eq!(&d1, &d2);
        prop_assert_eq!(&a1, &a2);
        prop_assert!(a1.is_well_formed());
        prop_assert!(a1.answer.is_none());
        prop_assert!(!a1.description.trim().is_empty());
        if r.mode.is_good() {
            prop_assert!(a1.description.starts_with(GOOD_QUALITY_STATEMENT));
            prop_assert!(a1.suggestion.is_none());
        } else {
            let s = a1.suggestion.as_deref().unwrap();
            prop_assert!(has_action_verb(s), "{:?}", s);
        }
    }

    #[test]
    fn directive_invariants(mode in common::mode(), t in term(), severe in any::<bool>()) {
        let r = report(mode, t, severe);
        for d in generate_directives(&r) {
            prop_assert!(!d.text.trim().is_empty());
            prop_assert!(is_sight_free(&d.text), "{:?}", d.text);
            prop_assert_eq!(d.action == Action::NoAction, r.mode.is_good());
            if !d.action.is_movement() {
                prop_assert_eq!(d.magnitude, Magnitude::Moderate);
            } else if severe {
                prop_assert_eq!(d.magnitude, Magnitude::Large);
            }
        }
        let resp = render_response(&r, &generate_directives(&r));
        prop_assert!(is_sight_free(&resp.description));
        prop_assert!(resp.suggestion.as_deref().is_none_or(is_sight_free));
    }

    #[test]
    fn explicit_magnitudes_render(mode in common::mode(), t in term()) {
        let r = report(mode, t, false);
        let g = DirectiveGenerator::default();
        for a in generate_directives(&r) {
            for m in [Magnitude::Slight, Magnitude::Moderate, Magnitude::Large] {
                let d = g.directive(&r, a.action, m);
                prop_assert!(is_sight_free(&d.text));
                prop_assert!(!d.text.is_empty());
            }
        }
    }
}

#[test]
fn single_cut_edge_pans_toward_it() {
    let world = SimWorld::new(Rect { x: 0.4, y: 0.4, w: 0.2, h: 0.2 }, "sign", 1.0);
    let centred = SimCamera::framing(&world, Rect { x: 0.3, y: 0.3, w: 0.4, h: 0.4 });
    let cases = [
        (Edge::Left, "left", 0.2, 0.0),
        (Edge::Right, "right", -0.2, 0.0),
        (Edge::Top, "up", 0.0, 0.2),
        (Edge::Bottom, "down", 0.0, -0.2),
    ];
    for (edge, word, dx, dy) in cases {
        let r = report(FailureMode::incomplete([edge]), Some("sign".into()), false);
        let d = generate_directives(&r);
        assert_eq!(d.len(), 1);
        assert!(d[0].text.contains(word), "{}", d[0].text);
        // shift the view away from the target so it sticks out past `edge`
        let mut cam = centred;
        cam.cx += dx;
        cam.cy += dy;
        let before = out_of_view_fraction(&world, &cam);
        assert!(before > 0.0, "{edge:?}");
        let after = out_of_view_fraction(&world, &apply_directive(&cam, d[0].action, DEFAULT_STEP));
        assert!(after < before, "{edge:?}: {before} -> {after}");
    }
}

#[test]
fn opposite_edges_step_back() {
    for edges in [[Edge::Left, Edge::Right], [Edge::Top, Edge::Bottom]] {
        let r = report(FailureMode::incomplete(edges), Some("menu".into()), false);
        let d = generate_directives(&r);
        assert_eq!(d.iter().map(|d| d.action).collect::<Vec<_>>(), [Action::MoveBack]);
    }
    let r = report(FailureMode::incomplete([Edge::Left, Edge::Top]), Some("menu".into()), false);
    let actions: Vec<Action> = generate_directives(&r).iter().map(|d| d.action).collect();
    assert_eq!(actions, [Action::MoveLeft, Action::MoveUp]);
}
