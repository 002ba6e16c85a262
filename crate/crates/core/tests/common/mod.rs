#![allow(dead_code)]

use proptest::prelude::*;
use viassist_core::quality::{DistanceKind, Edge, ImageDefect};
use viassist_core::{BoundingBox, FailureMode, ImageBuffer};

/// Checkerboard with a random cell size, contrast and brightness; covers
/// dark, dim, flat and sharp frames.
pub fn image() -> impl Strategy<Value = ImageBuffer> {
    (16u32..40, 16u32..40, 1u32..6, 0u8..=255, 0u8..=255, any::<u64>()).prop_map(|(w, h, cell, a, b, noise)| {
        ImageBuffer::from_fn(w, h, |x, y| {
            let base = if (x / cell + y / cell) % 2 == 0 { a } else { b };
            let jitter = ((noise >> ((x * 7 + y * 3) % 61)) & 3) as u8;
            let v = base.saturating_add(jitter);
            [v, v.saturating_sub(jitter), v]
        })
        .unwrap()
    })
}

pub const LABELS: [&str; 5] = ["sign", "bottle", "menu", "jar", "letter"];

pub fn bbox() -> impl Strategy<Value = BoundingBox> {
    (0usize..LABELS.len(), 0.0..=1.0f64, 0.0..0.95f64, 0.0..0.95f64, 0.01..1.0f64, 0.01..1.0f64).prop_map(
        |(l, conf, x, y, w, h)| BoundingBox::new(LABELS[l], conf, x, y, w.min(1.0 - x), h.min(1.0 - y)).unwrap(),
    )
}

pub fn question() -> impl Strategy<Value = String> {
    prop_oneof![
        (0usize..LABELS.len()).prop_map(|l| format!("What does the {} say?", LABELS[l])),
        Just("What is this?".to_owned()),
        Just("Can you help me?".to_owned()),
        (0usize..LABELS.len()).prop_map(|l| format!("Read the {} for me", LABELS[l])),
    ]
}

pub fn edge_set() -> impl Strategy<Value = Vec<Edge>> {
    proptest::sample::subsequence(Edge::ALL.to_vec(), 1..=4)
}

pub fn mode() -> impl Strategy<Value = FailureMode> {
    prop_oneof![
        Just(FailureMode::GoodQuality),
        edge_set().prop_map(FailureMode::incomplete),
        Just(FailureMode::TargetAbsent),
        prop_oneof![Just(DistanceKind::TooFar), Just(DistanceKind::TooClose)]
            .prop_map(|distance| FailureMode::InappropriateDistance { distance }),
        prop_oneof![Just(ImageDefect::Blur), Just(ImageDefect::Dark), Just(ImageDefect::LowLight)]
            .prop_map(|defect| FailureMode::LowQualityImage { defect }),
        Just(FailureMode::IrrelevantQuestion),
    ]
}
