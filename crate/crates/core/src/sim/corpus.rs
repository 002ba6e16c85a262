//! Labeled synthetic corpora, one batch per category.
//!
//! Every sample is drawn at least a factor of two past the threshold that
//! defines its category under the default [`QualityConfig`], with two
//! exceptions forced by the geometry: a too-close box cannot reach twice
//! `tau_near` inside a unit frame, and low light cannot sit twice away from
//! both luma thresholds at once.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::scenario::frame_size;
use super::{render_capture, Rect, SimCamera, SimWorld, BACKGROUND};
use crate::backend::wire::{sidecar_json, sidecar_path};
use crate::dataset::{save_dataset, DatasetError, DatasetRecord, ResponseText, Source, IMAGES_DIR, MANIFEST_FILE};
use crate::directive::DirectiveGenerator;
use crate::image::ImageBuffer;
use crate::quality::{
    compute_blur_score, compute_luma, extract_target_term, BoundingBox, Category, DistanceKind, Edge, FailureMode, ImageDefect,
    QualityReport,
};

pub const CORPUS_PIXEL_SIZE: u32 = 64;

pub const LABELS: [&str; 10] = [
    "sign",
    "bottle",
    "cereal box",
    "medicine label",
    "menu",
    "poster",
    "book cover",
    "letter",
    "jar",
    "thermostat",
];

const QUESTION_TEMPLATES: [&str; 5] = [
    "What is written on the {label}?",
    "What does the {label} say?",
    "Can you read the {label} for me?",
    "What is on this {label}?",
    "Please tell me what the {label} says.",
];

/// Questions with no content word left after stopword removal.
pub const IRRELEVANT_QUESTIONS: [&str; 6] = [
    "What is this?",
    "Can you help me?",
    "What do you see?",
    "Is it okay?",
    "What is in front of me?",
    "Tell me about it, please.",
];

pub fn question_for(label: &str, rng: &mut impl Rng) -> String {
    QUESTION_TEMPLATES
        .choose(rng)
        .expect("non-empty")
        .replace("{label}", label)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSample {
    pub record: DatasetRecord,
    pub image: ImageBuffer,
    /// Sidecar detections, equal to the ground truth.
    pub boxes: Vec<BoundingBox>,
    /// The mode the sample was built to exhibit.
    pub expected: FailureMode,
    pub world: SimWorld,
    pub camera: SimCamera,
}

fn random_world(rng: &mut impl Rng) -> SimWorld {
    let w = rng.gen_range(0.1..0.3);
    let h = rng.gen_range(0.1..0.3);
    let target = Rect {
        x: rng.gen_range(0.0..1.0 - w),
        y: rng.gen_range(0.0..1.0 - h),
        w,
        h,
    };
    SimWorld::new(target, *LABELS.choose(rng).expect("non-empty"), rng.gen_range(0.8..=1.0))
}

/// Target area between twice `tau_far` and half `tau_near`, at least 0.04
/// away from every border.
fn good_frame(rng: &mut impl Rng) -> Rect {
    let (w, h) = frame_size(rng.gen_range(0.1..0.3), rng.gen_range(0.6..1.6));
    Rect {
        x: rng.gen_range(0.04..1.0 - 0.04 - w),
        y: rng.gen_range(0.04..1.0 - 0.04 - h),
        w,
        h,
    }
}

fn centered(w: f64, h: f64) -> Rect {
    Rect {
        x: (1.0 - w) / 2.0,
        y: (1.0 - h) / 2.0,
        w,
        h,
    }
}

/// Frame with one or two adjacent edges cut by 20-60% of the target, or a
/// target wider or taller than the frame and overflowing both sides.
fn cut_frame(rng: &mut impl Rng) -> (Rect, Vec<Edge>) {
    let (w, h) = frame_size(rng.gen_range(0.1..0.3), rng.gen_range(0.7..1.4));
    let mut f = Rect {
        x: (1.0 - w) / 2.0,
        y: (1.0 - h) / 2.0,
        w,
        h,
    };
    match rng.gen_range(0..10) {
        0 => {
            f.w = rng.gen_range(1.1..1.4);
            f.x = -(f.w - 1.0) / 2.0;
            (f, vec![Edge::Left, Edge::Right])
        }
        1 => {
            f.h = rng.gen_range(1.1..1.4);
            f.y = -(f.h - 1.0) / 2.0;
            (f, vec![Edge::Top, Edge::Bottom])
        }
        _ => {
            let horizontal = [Edge::Left, Edge::Right].choose(rng).copied();
            let vertical = [Edge::Top, Edge::Bottom].choose(rng).copied();
            let edges: Vec<Edge> = match rng.gen_range(0..3) {
                0 => horizontal.into_iter().collect(),
                1 => vertical.into_iter().collect(),
                _ => horizontal.into_iter().chain(vertical).collect(),
            };
            for e in &edges {
                let cut = rng.gen_range(0.2..0.6);
                match e {
                    Edge::Left => f.x = -cut * f.w,
                    Edge::Right => f.x = 1.0 - (1.0 - cut) * f.w,
                    Edge::Top => f.y = -cut * f.h,
                    Edge::Bottom => f.y = 1.0 - (1.0 - cut) * f.h,
                }
            }
            (f, edges)
        }
    }
}

/// A label other than `label`.
fn other_label(label: &str, rng: &mut impl Rng) -> String {
    let others: Vec<&str> = LABELS.iter().copied().filter(|l| *l != label).collect();
    (*others.choose(rng).expect("several labels")).to_owned()
}

/// Exposure that renders a centered-target frame at roughly `luma`.
fn exposure_for(world: &SimWorld, luma: f64) -> f64 {
    (luma / BACKGROUND / world.ambient_light).clamp(0.0, 1.0)
}

fn sample(category: Category, k: usize, rng: &mut impl Rng, generator: &DirectiveGenerator) -> CorpusSample {
    let world = random_world(rng);
    let mut question = question_for(&world.label, rng);
    let (camera, expected) = match category {
        Category::Good => (SimCamera::framing(&world, good_frame(rng)), FailureMode::GoodQuality),
        Category::TargetAbsent => {
            // a flat frame would read as blurred, so another object is in view
            question = question_for(&other_label(&world.label, rng), rng);
            (SimCamera::framing(&world, good_frame(rng)), FailureMode::TargetAbsent)
        }
        Category::IncompleteTarget => {
            let (frame, edges) = cut_frame(rng);
            (SimCamera::framing(&world, frame), FailureMode::incomplete(edges))
        }
        Category::Distance => {
            if rng.gen_bool(0.5) {
                let (w, h) = frame_size(rng.gen_range(0.005..0.025), rng.gen_range(0.7..1.4));
                let distance = DistanceKind::TooFar;
                (
                    SimCamera::framing(&world, centered(w, h)),
                    FailureMode::InappropriateDistance { distance },
                )
            } else {
                let (w, h) = (rng.gen_range(0.84..0.92), rng.gen_range(0.84..0.92));
                let distance = DistanceKind::TooClose;
                (
                    SimCamera::framing(&world, centered(w, h)),
                    FailureMode::InappropriateDistance { distance },
                )
            }
        }
        Category::LowQuality => {
            let camera = SimCamera::framing(&world, good_frame(rng));
            let defect = match rng.gen_range(0..3) {
                0 => ImageDefect::Dark,
                1 => ImageDefect::LowLight,
                _ => ImageDefect::Blur,
            };
            let camera = match defect {
                ImageDefect::Dark => camera.with_exposure(exposure_for(&world, rng.gen_range(0.0..9.0))),
                ImageDefect::LowLight => {
                    camera.with_exposure(exposure_for(&world, rng.gen_range(22.5..24.5)))
                }
                ImageDefect::Blur => camera.with_blur(rng.gen_range(0.75..=1.0)),
            };
            (camera, FailureMode::LowQualityImage { defect })
        }
        Category::Irrelevant => {
            question = (*IRRELEVANT_QUESTIONS.choose(rng).expect("non-empty")).to_owned();
            (SimCamera::framing(&world, good_frame(rng)), FailureMode::IrrelevantQuestion)
        }
    };

    let capture = render_capture(&world, &camera, CORPUS_PIXEL_SIZE);
    let boxes: Vec<BoundingBox> = capture.ground_truth.clone().into_iter().collect();
    let located = matches!(
        expected.category(),
        Category::Good | Category::IncompleteTarget | Category::Distance
    );
    let report = QualityReport {
        mode: expected.clone(),
        blur_score: compute_blur_score(&capture.image).expect("64x64 frame"),
        mean_luma: compute_luma(&capture.image),
        target_term: extract_target_term(&question),
        area_ratio: located.then(|| capture.ground_truth.as_ref().map(BoundingBox::area)).flatten(),
        target_box: located.then_some(capture.ground_truth).flatten(),
        answerable: expected.is_good(),
        severe: true,
    };
    let (_, response) = generator.respond(&report);
    let id = format!("{}-{k:04}", category.as_str());
    let record = DatasetRecord {
        image: format!("{IMAGES_DIR}/{id}.png"),
        id,
        question,
        category,
        answerable: expected.is_good(),
        response: ResponseText {
            description: response.description,
            suggestion: response.suggestion,
        },
        source: Source::Simulated,
    };
    CorpusSample {
        record,
        image: capture.image,
        boxes,
        expected,
        world,
        camera,
    }
}

/// `n_per_category` samples for each of the six categories, in category
/// order, fully determined by `seed`.
pub fn generate_samples(seed: u64, n_per_category: usize) -> Vec<CorpusSample> {
    let generator = DirectiveGenerator::default();
    let mut out = Vec::with_capacity(6 * n_per_category);
    for (i, category) in Category::ALL.into_iter().enumerate() {
        // one stream per category so growing n never reshuffles other batches
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        out.extend((0..n_per_category).map(|k| sample(category, k, &mut rng, &generator)));
    }
    out
}

/// Writes images, `.boxes.json` sidecars and the manifest under `root`.
pub fn generate_corpus(seed: u64, n_per_category: usize, root: &Path) -> Result<Vec<DatasetRecord>, DatasetError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| DatasetError::Io { path, source }
    };
    let images = root.join(IMAGES_DIR);
    fs::create_dir_all(&images).map_err(io(&images))?;
    let samples = generate_samples(seed, n_per_category);
    for s in &samples {
        let path = root.join(&s.record.image);
        s.image
            .save_png(&path)
            .map_err(std::io::Error::other)
            .map_err(io(&path))?;
        let side = sidecar_path(&path);
        fs::write(&side, sidecar_json(&s.boxes)).map_err(io(&side))?;
    }
    let records: Vec<DatasetRecord> = samples.into_iter().map(|s| s.record).collect();
    save_dataset(&records, &root.join(MANIFEST_FILE))?;
    Ok(records)
}
