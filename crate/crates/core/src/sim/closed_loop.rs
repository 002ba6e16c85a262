use serde::{Deserialize, Serialize};

use super::{apply_directive, render_capture, SimCamera, SimWorld, DEFAULT_STEP};
use crate::directive::{Action, Directive, DirectiveGenerator, Magnitude};
use crate::quality::{assess, FailureMode, QualityConfig};

/// One render → assess → act iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub camera: SimCamera,
    pub mode: FailureMode,
    /// Directive applied after this frame; absent on the final frame.
    pub directive: Option<Directive>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopOutcome {
    pub steps_taken: usize,
    pub final_mode: FailureMode,
    pub converged: bool,
    pub trace: Vec<TraceStep>,
}

/// Simulated user who follows every first directive literally.
///
/// Pans start at `step` of the view size. Once a pan reverses an earlier
/// pan on the same axis the user has overshot, and from then on every pan
/// on that axis is half the previous one (a bisection), issued at `Slight`
/// magnitude. Zooming rescales the view and resets both axes.
#[derive(Debug, Clone)]
pub struct ClosedLoop {
    pub quality: QualityConfig,
    pub max_steps: usize,
    pub pixel_size: u32,
    pub step: f64,
    pub generator: DirectiveGenerator,
}

impl ClosedLoop {
    pub fn new(quality: QualityConfig, max_steps: usize) -> Self {
        Self {
            quality,
            max_steps,
            pixel_size: 64,
            step: DEFAULT_STEP,
            generator: DirectiveGenerator::default(),
        }
    }

    pub fn question(world: &SimWorld) -> String {
        format!("What is written on the {}?", world.label)
    }

    /// Assesses what `camera` currently sees, using the ground-truth box as
    /// the only detection.
    pub fn observe(&self, world: &SimWorld, camera: &SimCamera) -> crate::quality::QualityReport {
        let capture = render_capture(world, camera, self.pixel_size);
        let detections: Vec<_> = capture.ground_truth.into_iter().collect();
        assess(&capture.image, &Self::question(world), &detections, &self.quality)
            .expect("simulated frames are at least 16x16")
    }

    pub fn run(&self, world: &SimWorld, camera0: &SimCamera) -> LoopOutcome {
        let mut camera = *camera0;
        let mut trace = Vec::new();
        let mut axes = [(self.step, None::<Action>, false); 2];
        for step in 0..=self.max_steps {
            let report = self.observe(world, &camera);
            let mode = report.mode.clone();
            let done = mode.is_good() || step == self.max_steps;
            let next = if done {
                None
            } else {
                self.generator.generate(&report).into_iter().next()
            };
            let Some(mut directive) = next else {
                let converged = mode.is_good();
                trace.push(TraceStep {
                    camera,
                    mode: mode.clone(),
                    directive: None,
                });
                return LoopOutcome {
                    steps_taken: step,
                    final_mode: mode,
                    converged,
                    trace,
                };
            };
            let mut pan = self.step;
            match axis(directive.action) {
                Some(i) => {
                    let (p, last, bracketed) = &mut axes[i];
                    if last.and_then(Action::opposite) == Some(directive.action) {
                        *bracketed = true;
                    }
                    if *bracketed {
                        *p /= 2.0;
                        directive = self.generator.directive(&report, directive.action, Magnitude::Slight);
                    }
                    *last = Some(directive.action);
                    pan = *p;
                }
                None if matches!(directive.action, Action::MoveCloser | Action::MoveBack) => {
                    axes = [(self.step, None, false); 2];
                }
                None => {}
            }
            let next_camera = apply_directive(&camera, directive.action, pan);
            trace.push(TraceStep {
                camera,
                mode,
                directive: Some(directive),
            });
            camera = next_camera;
        }
        unreachable!("loop returns on its final iteration")
    }
}

fn axis(action: Action) -> Option<usize> {
    match action {
        Action::MoveLeft | Action::MoveRight => Some(0),
        Action::MoveUp | Action::MoveDown => Some(1),
        _ => None,
    }
}

/// Runs the loop with a 64-pixel sensor and the default pan step.
pub fn run_closed_loop(
    world: &SimWorld,
    camera0: &SimCamera,
    cfg: &QualityConfig,
    max_steps: usize,
) -> LoopOutcome {
    ClosedLoop::new(*cfg, max_steps).run(world, camera0)
}
