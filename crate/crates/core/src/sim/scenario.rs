//! Random start states for closed-loop runs.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::closed_loop::{ClosedLoop, LoopOutcome};
use super::corpus::LABELS;
use super::{render_capture, target_in_frame, Rect, SimCamera, SimWorld};
use crate::quality::{compute_luma, QualityConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub world: SimWorld,
    pub camera: SimCamera,
}

/// A single capture defect, with every other constraint well inside its
/// safe range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Defect {
    CutLeft,
    CutRight,
    CutTop,
    CutBottom,
    TooFar,
    TooClose,
    Dark,
    LowLight,
    Blur,
}

impl Defect {
    pub const ALL: [Defect; 9] = [
        Defect::CutLeft,
        Defect::CutRight,
        Defect::CutTop,
        Defect::CutBottom,
        Defect::TooFar,
        Defect::TooClose,
        Defect::Dark,
        Defect::LowLight,
        Defect::Blur,
    ];
}

fn random_world(rng: &mut impl Rng) -> SimWorld {
    let w = rng.gen_range(0.08..0.3);
    let h = rng.gen_range(0.08..0.3);
    let target = Rect {
        x: rng.gen_range(0.0..1.0 - w),
        y: rng.gen_range(0.0..1.0 - h),
        w,
        h,
    };
    let label = LABELS[rng.gen_range(0..LABELS.len())];
    SimWorld::new(target, label, rng.gen_range(0.8..=1.0))
}

/// Normalized size with the given area and width/height ratio.
pub(crate) fn frame_size(area: f64, aspect: f64) -> (f64, f64) {
    ((area * aspect).sqrt(), (area / aspect).sqrt())
}

/// A start state from which the target can be brought into a good frame:
/// the target centre is in view, the scene is lit well enough for full
/// exposure to fix any darkness, and the framed area lies anywhere from
/// far too small to several times larger than the frame.
pub fn random_reachable(rng: &mut impl Rng) -> Scenario {
    let world = random_world(rng);
    let area = rng.gen_range(0.01f64.ln()..1.5f64.ln()).exp();
    let (w, h) = frame_size(area, rng.gen_range(0.5..2.0));
    let (ux, uy) = (rng.gen_range(0.1..0.9), rng.gen_range(0.1..0.9));
    let frame = Rect {
        x: ux - w / 2.0,
        y: uy - h / 2.0,
        w,
        h,
    };
    let mut camera = SimCamera::framing(&world, frame);
    if rng.gen_bool(0.4) {
        camera.exposure = rng.gen_range(0.05..0.35);
    }
    if rng.gen_bool(0.4) {
        camera.blur_level = rng.gen_range(0.3..=1.0);
    }
    Scenario { world, camera }
}

/// A start state with exactly one defect.
pub fn single_defect(rng: &mut impl Rng, defect: Defect) -> Scenario {
    let world = random_world(rng);
    // area twice inside both distance bounds
    let (w, h) = frame_size(rng.gen_range(0.1..0.3), rng.gen_range(0.7..1.4));
    let centered = Rect {
        x: (1.0 - w) / 2.0,
        y: (1.0 - h) / 2.0,
        w,
        h,
    };
    let cut = rng.gen_range(0.1..0.5);
    let frame = match defect {
        Defect::CutLeft => Rect {
            x: -cut * w,
            ..centered
        },
        Defect::CutRight => Rect {
            x: 1.0 - (1.0 - cut) * w,
            ..centered
        },
        Defect::CutTop => Rect {
            y: -cut * h,
            ..centered
        },
        Defect::CutBottom => Rect {
            y: 1.0 - (1.0 - cut) * h,
            ..centered
        },
        Defect::TooFar => {
            let (w, h) = frame_size(rng.gen_range(0.005..0.025), rng.gen_range(0.7..1.4));
            Rect {
                x: (1.0 - w) / 2.0,
                y: (1.0 - h) / 2.0,
                w,
                h,
            }
        }
        Defect::TooClose => {
            let (w, h) = (rng.gen_range(0.84..0.92), rng.gen_range(0.84..0.92));
            Rect {
                x: (1.0 - w) / 2.0,
                y: (1.0 - h) / 2.0,
                w,
                h,
            }
        }
        _ => centered,
    };
    let mut camera = SimCamera::framing(&world, frame);
    let gain_for = |luma: f64| luma / super::BACKGROUND / world.ambient_light;
    match defect {
        Defect::Dark => camera.exposure = gain_for(rng.gen_range(0.0..9.0)),
        Defect::LowLight => camera.exposure = gain_for(rng.gen_range(22.0..24.0)),
        Defect::Blur => camera.blur_level = rng.gen_range(0.75..=1.0),
        _ => {}
    }
    Scenario { world, camera }
}

/// How far a capture is from satisfying the constraint behind `defect`;
/// zero once satisfied.
///
/// Cuts measure how far the target sticks out past the edge margin, distance
/// is the gap between the framed area and the nearest allowed bound, light
/// is the luma shortfall below `lowlight_luma`, blur is the blur level.
pub fn violation(scenario: &Scenario, defect: Defect, cfg: &QualityConfig, pixel_size: u32) -> f64 {
    let (world, camera) = (&scenario.world, &scenario.camera);
    let r = target_in_frame(world, camera);
    let m = cfg.edge_margin;
    match defect {
        Defect::CutLeft => (m - r.x).max(0.0),
        Defect::CutRight => (r.x + r.w - (1.0 - m)).max(0.0),
        Defect::CutTop => (m - r.y).max(0.0),
        Defect::CutBottom => (r.y + r.h - (1.0 - m)).max(0.0),
        Defect::TooFar | Defect::TooClose => {
            let area = super::ground_truth_box(world, camera).map_or(0.0, |b| b.area());
            if area < cfg.tau_far {
                cfg.tau_far - area
            } else if area > cfg.tau_near {
                area - cfg.tau_near
            } else {
                0.0
            }
        }
        Defect::Dark | Defect::LowLight => {
            let luma = compute_luma(&render_capture(world, camera, pixel_size).image);
            (cfg.lowlight_luma - luma).max(0.0)
        }
        Defect::Blur => camera.blur_level,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub trial: usize,
    pub scenario: Scenario,
    pub outcome: LoopOutcome,
}

/// Result of a batch of seeded closed-loop trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub seed: u64,
    pub trials: usize,
    pub max_steps: usize,
    pub converged: usize,
    pub convergence_rate: f64,
    /// `step_histogram[k]` = converged trials that needed exactly k steps.
    pub step_histogram: Vec<usize>,
    pub runs: Vec<TrialSummary>,
}

impl SimulationReport {
    /// Runs `trials` reachable scenarios drawn from `seed`.
    pub fn run(seed: u64, trials: usize, looper: &ClosedLoop) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scenarios: Vec<Scenario> = (0..trials).map(|_| random_reachable(&mut rng)).collect();
        let runs: Vec<TrialSummary> = scenarios
            .into_iter()
            .enumerate()
            .map(|(trial, scenario)| TrialSummary {
                trial,
                outcome: looper.run(&scenario.world, &scenario.camera),
                scenario,
            })
            .collect();
        let mut step_histogram = vec![0; looper.max_steps + 1];
        for r in runs.iter().filter(|r| r.outcome.converged) {
            step_histogram[r.outcome.steps_taken] += 1;
        }
        let converged = runs.iter().filter(|r| r.outcome.converged).count();
        Self {
            seed,
            trials,
            max_steps: looper.max_steps,
            converged,
            convergence_rate: if trials == 0 {
                0.0
            } else {
                converged as f64 / trials as f64
            },
            step_histogram,
            runs,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_defects_shrink_every_step() {
        let cfg = QualityConfig::default();
        let looper = ClosedLoop::new(cfg, 12);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for defect in Defect::ALL {
            for _ in 0..20 {
                let s = single_defect(&mut rng, defect);
                assert!(violation(&s, defect, &cfg, looper.pixel_size) > 0.0, "{defect:?}");
                let out = looper.run(&s.world, &s.camera);
                assert!(out.converged, "{defect:?} {:?}", out.trace);
                let v: Vec<f64> = out
                    .trace
                    .iter()
                    .map(|t| {
                        let at = Scenario {
                            world: s.world.clone(),
                            camera: t.camera,
                        };
                        violation(&at, defect, &cfg, looper.pixel_size)
                    })
                    .collect();
                assert!(v.windows(2).all(|w| w[1] < w[0]), "{defect:?} {v:?}");
            }
        }
    }

    #[test]
    fn report_is_seed_deterministic() {
        let looper = ClosedLoop::new(QualityConfig::default(), 12);
        let a = SimulationReport::run(9, 20, &looper);
        let b = SimulationReport::run(9, 20, &looper);
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        assert_eq!(a.step_histogram.iter().sum::<usize>(), a.converged);
    }
}
