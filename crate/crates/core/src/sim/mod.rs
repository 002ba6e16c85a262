//! Synthetic 2D capture world.
//!
//! A single textured target sits in a unit-square world; a camera sees an
//! axis-aligned window of it. Rendering is deterministic, so the simulator
//! doubles as a labeled-corpus generator and as a closed-loop test bed for
//! reshoot directives. "Move left" is modelled as a pure translation of the
//! view window.

mod closed_loop;
mod corpus;
mod scenario;

use serde::{Deserialize, Serialize};

use crate::directive::Action;
use crate::image::ImageBuffer;
use crate::quality::BoundingBox;

pub use closed_loop::{run_closed_loop, ClosedLoop, LoopOutcome, TraceStep};
pub use corpus::{generate_corpus, generate_samples, question_for, CorpusSample, IRRELEVANT_QUESTIONS, LABELS};
pub use scenario::{
    random_reachable, single_defect, violation, Defect, Scenario, SimulationReport, TrialSummary,
};

/// Default pan step as a fraction of the view size.
pub const DEFAULT_STEP: f64 = 0.25;
pub const ZOOM_IN: f64 = 0.8;
pub const ZOOM_OUT: f64 = 1.25;
/// Checker cells across each side of the target.
pub const CHECKER_CELLS: f64 = 12.0;
pub const BACKGROUND: f64 = 128.0;
pub const MIN_PIXEL_SIZE: u32 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimWorld {
    pub target: Rect,
    pub label: String,
    /// Scene illumination in [0, 1].
    pub ambient_light: f64,
}

impl SimWorld {
    pub fn new(target: Rect, label: impl Into<String>, ambient_light: f64) -> Self {
        let w = Self {
            target,
            label: label.into(),
            ambient_light,
        };
        debug_assert!(w.is_valid(), "invalid world {w:?}");
        w
    }

    pub fn is_valid(&self) -> bool {
        let t = &self.target;
        t.w > 0.0
            && t.h > 0.0
            && t.x >= 0.0
            && t.y >= 0.0
            && t.x + t.w <= 1.0
            && t.y + t.h <= 1.0
            && (0.0..=1.0).contains(&self.ambient_light)
            && !self.label.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimCamera {
    pub cx: f64,
    pub cy: f64,
    pub vw: f64,
    pub vh: f64,
    /// 0 is sharp; each quarter adds one box-blur pass.
    pub blur_level: f64,
    pub exposure: f64,
}

impl SimCamera {
    /// Camera that puts the target at `frame` (normalized, unclipped) in the
    /// image.
    pub fn framing(world: &SimWorld, frame: Rect) -> Self {
        let t = &world.target;
        let vw = t.w / frame.w;
        let vh = t.h / frame.h;
        Self {
            cx: t.x - frame.x * vw + vw / 2.0,
            cy: t.y - frame.y * vh + vh / 2.0,
            vw,
            vh,
            blur_level: 0.0,
            exposure: 1.0,
        }
    }

    pub fn with_blur(mut self, blur_level: f64) -> Self {
        self.blur_level = blur_level;
        self
    }

    pub fn with_exposure(mut self, exposure: f64) -> Self {
        self.exposure = exposure;
        self
    }
}

/// Target rectangle in normalized frame coordinates, not clipped.
pub fn target_in_frame(world: &SimWorld, camera: &SimCamera) -> Rect {
    let left = camera.cx - camera.vw / 2.0;
    let top = camera.cy - camera.vh / 2.0;
    let t = &world.target;
    Rect {
        x: (t.x - left) / camera.vw,
        y: (t.y - top) / camera.vh,
        w: t.w / camera.vw,
        h: t.h / camera.vh,
    }
}

/// Target ∩ viewport as a detection, or `None` when nothing is in view.
pub fn ground_truth_box(world: &SimWorld, camera: &SimCamera) -> Option<BoundingBox> {
    let r = target_in_frame(world, camera);
    let x0 = r.x.clamp(0.0, 1.0);
    let y0 = r.y.clamp(0.0, 1.0);
    let x1 = (r.x + r.w).clamp(0.0, 1.0);
    let y1 = (r.y + r.h).clamp(0.0, 1.0);
    if x1 - x0 <= 1e-12 || y1 - y0 <= 1e-12 {
        return None;
    }
    BoundingBox::new(world.label.clone(), 1.0, x0, y0, x1 - x0, y1 - y0).ok()
}

/// Fraction of the target's area outside the viewport.
pub fn out_of_view_fraction(world: &SimWorld, camera: &SimCamera) -> f64 {
    let r = target_in_frame(world, camera);
    let vis_w = ((r.x + r.w).min(1.0) - r.x.max(0.0)).max(0.0);
    let vis_h = ((r.y + r.h).min(1.0) - r.y.max(0.0)).max(0.0);
    1.0 - (vis_w * vis_h) / (r.w * r.h)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Capture {
    pub image: ImageBuffer,
    pub ground_truth: Option<BoundingBox>,
}

fn box_blur(plane: &[f64], w: usize, h: usize) -> Vec<f64> {
    let mut out = vec![0.0; plane.len()];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let sx = (x as i64 + dx).clamp(0, w as i64 - 1) as usize;
                    let sy = (y as i64 + dy).clamp(0, h as i64 - 1) as usize;
                    acc += plane[sy * w + sx];
                }
            }
            out[y * w + x] = acc / 9.0;
        }
    }
    out
}

/// Renders a `pixel_size`×`pixel_size` grey frame of what the camera sees.
///
/// The target is a black/white checker on a mid-grey background; intensity
/// is scaled by `ambient_light × exposure`; blur is `⌈4·blur_level⌉` passes
/// of a 3×3 box filter with replicated borders.
pub fn render_capture(world: &SimWorld, camera: &SimCamera, pixel_size: u32) -> Capture {
    assert!(pixel_size >= MIN_PIXEL_SIZE, "pixel_size must be at least {MIN_PIXEL_SIZE}");
    let n = pixel_size as usize;
    let t = &world.target;
    let (cell_w, cell_h) = (t.w / CHECKER_CELLS, t.h / CHECKER_CELLS);
    let left = camera.cx - camera.vw / 2.0;
    let top = camera.cy - camera.vh / 2.0;

    let mut plane = Vec::with_capacity(n * n);
    for row in 0..n {
        let wy = top + (row as f64 + 0.5) / n as f64 * camera.vh;
        for col in 0..n {
            let wx = left + (col as f64 + 0.5) / n as f64 * camera.vw;
            let inside = wx >= t.x && wx < t.x + t.w && wy >= t.y && wy < t.y + t.h;
            let v = if inside {
                let i = ((wx - t.x) / cell_w).floor() as i64;
                let j = ((wy - t.y) / cell_h).floor() as i64;
                if (i + j).rem_euclid(2) == 0 {
                    0.0
                } else {
                    255.0
                }
            } else {
                BACKGROUND
            };
            plane.push(v);
        }
    }

    let passes = (camera.blur_level.clamp(0.0, 1.0) * 4.0).ceil() as usize;
    for _ in 0..passes {
        plane = box_blur(&plane, n, n);
    }

    let gain = (world.ambient_light * camera.exposure).clamp(0.0, 1.0);
    let data: Vec<u8> = plane
        .iter()
        .flat_map(|v| {
            let p = (v * gain).round().clamp(0.0, 255.0) as u8;
            [p, p, p]
        })
        .collect();
    Capture {
        image: ImageBuffer::new(pixel_size, pixel_size, data).expect("square frame"),
        ground_truth: ground_truth_box(world, camera),
    }
}

/// Moves the camera as a user following `action` would. `step` is the pan
/// distance as a fraction of the view size.
pub fn apply_directive(camera: &SimCamera, action: Action, step: f64) -> SimCamera {
    let mut c = *camera;
    match action {
        Action::MoveLeft => c.cx -= step * c.vw,
        Action::MoveRight => c.cx += step * c.vw,
        Action::MoveUp => c.cy -= step * c.vh,
        Action::MoveDown => c.cy += step * c.vh,
        Action::MoveCloser => {
            c.vw *= ZOOM_IN;
            c.vh *= ZOOM_IN;
        }
        Action::MoveBack => {
            c.vw *= ZOOM_OUT;
            c.vh *= ZOOM_OUT;
        }
        Action::ImproveLighting => c.exposure = 1.0,
        Action::HoldSteady => c.blur_level = 0.0,
        Action::ReaimAndScan => {
            c.cx += step * c.vw;
            if c.cx > 1.0 {
                c.cx -= 1.0;
                c.cy += step * c.vh;
                if c.cy > 1.0 {
                    c.cy -= 1.0;
                }
            }
        }
        Action::NoAction => {}
    }
    c
}
