mod common;

use proptest::prelude::*;
use viassist_core::quality::{compute_blur_score, compute_luma, cut_edges};
use viassist_core::{assess, BoundingBox, FailureMode, QualityConfig};

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn metrics_survive_mirroring(img in common::image()) {
        let blur = compute_blur_score(&img).unwrap();
        let luma = compute_luma(&img);
        for m in [img.mirror_horizontal(), img.mirror_vertical()] {
            prop_assert!(close(compute_blur_score(&m).unwrap(), blur));
            prop_assert!(close(compute_luma(&m), luma));
        }
    }

    #[test]
    fn assess_is_pure(
        img in common::image(),
        q in common::question(),
        boxes in prop::collection::vec(common::bbox(), 0..4),
    ) {
        let cfg = QualityConfig::default();
        let a = assess(&img, &q, &boxes, &cfg).unwrap();
        let b = assess(&img, &q, &boxes, &cfg).unwrap();
        prop_assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn report_invariants(
        img in common::image(),
        q in common::question(),
        boxes in prop::collection::vec(common::bbox(), 0..4),
    ) {
        let cfg = QualityConfig::default();
        let r = assess(&img, &q, &boxes, &cfg).unwrap();
        prop_assert_eq!(r.answerable, r.mode.is_good());
        prop_assert_eq!(r.area_ratio.is_some(), r.target_box.is_some());
        if let (Some(b), Some(a)) = (&r.target_box, r.area_ratio) {
            prop_assert!((b.w * b.h - a).abs() < 1e-9);
        }
        if let FailureMode::IncompleteTarget { cut_edges } = &r.mode {
            prop_assert!(!cut_edges.is_empty());
        }
        if r.mode.is_good() {
            let b = r.target_box.as_ref().unwrap();
            let a = r.area_ratio.unwrap();
            prop_assert!(r.mean_luma >= cfg.lowlight_luma);
            prop_assert!(r.blur_score >= cfg.blur_threshold);
            prop_assert!(cut_edges(b, cfg.edge_margin).is_empty());
            prop_assert!(cfg.tau_far <= a && a <= cfg.tau_near);
        }
    }

    #[test]
    fn pixel_defects_dominate(
        img in common::image(),
        q in common::question(),
        boxes in prop::collection::vec(common::bbox(), 0..4),
    ) {
        let cfg = QualityConfig::default();
        let with = assess(&img, &q, &boxes, &cfg).unwrap();
        let without = assess(&img, &q, &[], &cfg).unwrap();
        if matches!(without.mode, FailureMode::LowQualityImage { .. } | FailureMode::IrrelevantQuestion) {
            prop_assert_eq!(with.mode, without.mode);
        }
    }

    #[test]
    fn box_order_is_irrelevant(
        img in common::image(),
        boxes in prop::collection::vec(common::bbox(), 0..5),
        seed in any::<u64>(),
    ) {
        let cfg = QualityConfig::default();
        let q = "What does the sign say?";
        let mut shuffled = boxes.clone();
        let n = shuffled.len();
        if n > 1 {
            shuffled.rotate_left((seed % n as u64) as usize);
            shuffled.reverse();
        }
        prop_assert_eq!(
            assess(&img, q, &boxes, &cfg).unwrap(),
            assess(&img, q, &shuffled, &cfg).unwrap()
        );
    }

    #[test]
    fn box_validation_matches_invariants(
        x in -0.2..1.2f64, y in -0.2..1.2f64, w in -0.2..1.2f64, h in -0.2..1.2f64, c in -0.5..1.5f64,
    ) {
        let ok = BoundingBox::new("sign", c, x, y, w, h).is_ok();
        let want = x >= 0.0 && y >= 0.0 && w > 0.0 && h > 0.0
            && x + w <= 1.0 + 1e-9 && y + h <= 1.0 + 1e-9
            && (0.0..=1.0).contains(&c);
        prop_assert_eq!(ok, want);
    }
}
