//! JSON payloads exchanged with model services, and the sidecar detection
//! file that shares the detector's response schema.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::BackendError;
use crate::quality::BoundingBox;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnswerRequest {
    pub prompt: String,
    pub image_b64: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnswerResponse {
    pub answer: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetectRequest {
    pub image_b64: String,
}

/// A box exactly as a detector reported it; nothing is validated yet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireBox {
    pub label: String,
    pub confidence: f64,
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl From<&BoundingBox> for WireBox {
    fn from(b: &BoundingBox) -> Self {
        Self {
            label: b.label.clone(),
            confidence: b.confidence,
            x: b.x,
            y: b.y,
            w: b.w,
            h: b.h,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct DetectResponse {
    pub boxes: Vec<WireBox>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbedRequest {
    pub tokens: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbedResponse {
    pub vectors: Vec<Vec<f64>>,
}

/// A detector value that was out of range and had to be pulled back in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClampWarning {
    pub index: usize,
    pub field: String,
    pub original: f64,
    pub clamped: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Detections {
    pub boxes: Vec<BoundingBox>,
    pub warnings: Vec<ClampWarning>,
}

/// Normalizes raw detector output.
///
/// Sizes are clamped into (0, 1], positions into [0, 1 - size], confidence
/// into [0, 1]; each adjustment is recorded as a warning. Boxes that cannot
/// be repaired (non-finite values, empty labels, non-positive sizes) fail
/// the whole response.
pub fn sanitize_boxes(raw: &[WireBox]) -> Result<Detections, BackendError> {
    let mut out = Detections::default();
    for (index, b) in raw.iter().enumerate() {
        let malformed = |reason: String| BackendError::MalformedDetection { index, reason };
        if b.label.trim().is_empty() {
            return Err(malformed("empty label".into()));
        }
        for (field, v) in [("confidence", b.confidence), ("x", b.x), ("y", b.y), ("w", b.w), ("h", b.h)] {
            if !v.is_finite() {
                return Err(malformed(format!("{field} is not finite")));
            }
        }
        if b.w <= 0.0 || b.h <= 0.0 {
            return Err(malformed(format!("non-positive size {}x{}", b.w, b.h)));
        }
        let mut clamp = |field: &str, v: f64, lo: f64, hi: f64| {
            let c = v.clamp(lo, hi);
            if c != v {
                out.warnings.push(ClampWarning {
                    index,
                    field: field.to_owned(),
                    original: v,
                    clamped: c,
                });
            }
            c
        };
        let confidence = clamp("confidence", b.confidence, 0.0, 1.0);
        let w = clamp("w", b.w, f64::MIN_POSITIVE, 1.0);
        let h = clamp("h", b.h, f64::MIN_POSITIVE, 1.0);
        let x = clamp("x", b.x, 0.0, 1.0 - w);
        let y = clamp("y", b.y, 0.0, 1.0 - h);
        let bbox = BoundingBox::new(b.label.trim(), confidence, x, y, w, h)
            .map_err(|e| malformed(e.to_string()))?;
        out.boxes.push(bbox);
    }
    Ok(out)
}

/// `<image>.boxes.json` beside an image file.
pub fn sidecar_path(image: &Path) -> PathBuf {
    let mut name = image.as_os_str().to_owned();
    name.push(".boxes.json");
    PathBuf::from(name)
}

pub fn read_sidecar(path: &Path) -> Result<Detections, BackendError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| BackendError::TransportFailure(format!("{}: {e}", path.display())))?;
    let parsed: DetectResponse = serde_json::from_str(&text)
        .map_err(|e| BackendError::MalformedResponse(format!("{}: {e}", path.display())))?;
    sanitize_boxes(&parsed.boxes)
}

pub fn sidecar_json(boxes: &[BoundingBox]) -> String {
    let body = DetectResponse {
        boxes: boxes.iter().map(WireBox::from).collect(),
    };
    serde_json::to_string(&body).expect("boxes serialize")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wire(x: f64, y: f64, w: f64, h: f64) -> WireBox {
        WireBox {
            label: "Sign".into(),
            confidence: 0.9,
            x,
            y,
            w,
            h,
        }
    }

    #[test]
    fn in_range_boxes_pass_untouched() {
        let d = sanitize_boxes(&[wire(0.1, 0.2, 0.3, 0.4)]).unwrap();
        assert!(d.warnings.is_empty());
        assert_eq!(d.boxes[0], BoundingBox::new("sign", 0.9, 0.1, 0.2, 0.3, 0.4).unwrap());
    }

    #[test]
    fn x_past_frame_is_clamped() {
        let d = sanitize_boxes(&[wire(1.2, 0.2, 0.3, 0.4)]).unwrap();
        assert!((d.boxes[0].x - 0.7).abs() < 1e-12);
        assert_eq!(d.warnings.len(), 1);
        assert_eq!(d.warnings[0].field, "x");
        assert_eq!(d.warnings[0].original, 1.2);
    }

    #[test]
    fn unrepairable_boxes_fail() {
        assert!(matches!(
            sanitize_boxes(&[wire(0.1, 0.1, 0.0, 0.3)]),
            Err(BackendError::MalformedDetection { index: 0, .. })
        ));
        assert!(matches!(
            sanitize_boxes(&[wire(0.1, 0.1, 0.2, 0.2), wire(f64::NAN, 0.1, 0.2, 0.3)]),
            Err(BackendError::MalformedDetection { index: 1, .. })
        ));
        let mut unlabeled = wire(0.1, 0.1, 0.2, 0.2);
        unlabeled.label = " ".into();
        assert!(sanitize_boxes(&[unlabeled]).is_err());
    }

    #[test]
    fn empty_scene() {
        assert_eq!(sanitize_boxes(&[]).unwrap(), Detections::default());
    }

    #[test]
    fn sidecar_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let img = dir.path().join("a.png");
        let boxes = vec![BoundingBox::new("cereal box", 1.0, 0.0, 0.25, 0.5, 0.5).unwrap()];
        std::fs::write(sidecar_path(&img), sidecar_json(&boxes)).unwrap();
        assert!(sidecar_path(&img).to_string_lossy().ends_with("a.png.boxes.json"));
        assert_eq!(read_sidecar(&sidecar_path(&img)).unwrap().boxes, boxes);
    }
}
