//! Pixel-level measurements: brightness and sharpness.

use crate::image::{ImageBuffer, ImageError};

const LUMA_R: f64 = 0.299;
const LUMA_G: f64 = 0.587;
const LUMA_B: f64 = 0.114;

#[inline]
pub fn pixel_luma(p: [u8; 3]) -> f64 {
    LUMA_R * p[0] as f64 + LUMA_G * p[1] as f64 + LUMA_B * p[2] as f64
}

/// Mean Rec. 601 luma over every pixel, in 0..=255.
pub fn compute_luma(img: &ImageBuffer) -> f64 {
    let n = img.width() as f64 * img.height() as f64;
    img.pixels().map(pixel_luma).sum::<f64>() / n
}

/// Variance of the 4-neighbour Laplacian over the interior of the luma plane.
///
/// Border pixels have no full neighbourhood and are left out.
pub fn compute_blur_score(img: &ImageBuffer) -> Result<f64, ImageError> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    if w < 3 || h < 3 {
        return Err(ImageError::TooSmall {
            width: img.width(),
            height: img.height(),
        });
    }
    let gray: Vec<f64> = img.pixels().map(pixel_luma).collect();
    let at = |x: usize, y: usize| gray[y * w + x];

    let count = ((w - 2) * (h - 2)) as f64;
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let r = at(x, y - 1) + at(x - 1, y) + at(x + 1, y) + at(x, y + 1) - 4.0 * at(x, y);
            sum += r;
            sum_sq += r * r;
        }
    }
    let mean = sum / count;
    // Guard against tiny negative values from cancellation.
    Ok((sum_sq / count - mean * mean).max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Straight-loop reference: materialise the response grid, then a
    /// two-pass variance.
    fn blur_oracle(img: &ImageBuffer) -> f64 {
        let w = img.width() as i64;
        let h = img.height() as i64;
        let g = |x: i64, y: i64| pixel_luma(img.pixel(x as u32, y as u32));
        let kernel = [[0.0, 1.0, 0.0], [1.0, -4.0, 1.0], [0.0, 1.0, 0.0]];
        let mut responses = Vec::new();
        for y in 1..h - 1 {
            for x in 1..w - 1 {
                let mut acc = 0.0;
                for (ky, row) in kernel.iter().enumerate() {
                    for (kx, k) in row.iter().enumerate() {
                        acc += k * g(x + kx as i64 - 1, y + ky as i64 - 1);
                    }
                }
                responses.push(acc);
            }
        }
        let n = responses.len() as f64;
        let mean = responses.iter().sum::<f64>() / n;
        responses.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n
    }

    fn checkerboard(size: u32) -> ImageBuffer {
        ImageBuffer::from_fn(size, size, |x, y| {
            if (x + y) % 2 == 0 {
                [0, 0, 0]
            } else {
                [255, 255, 255]
            }
        })
        .unwrap()
    }

    #[test]
    fn luma_extremes() {
        let black = ImageBuffer::filled(4, 4, [0, 0, 0]).unwrap();
        let white = ImageBuffer::filled(4, 4, [255, 255, 255]).unwrap();
        assert_eq!(compute_luma(&black), 0.0);
        assert!((compute_luma(&white) - 255.0).abs() < 1e-6);
    }

    #[test]
    fn luma_half_red_half_blue() {
        let img = ImageBuffer::from_fn(4, 4, |x, _| if x < 2 { [255, 0, 0] } else { [0, 0, 255] })
            .unwrap();
        let oracle: f64 = img.pixels().map(pixel_luma).sum::<f64>() / 16.0;
        assert!((oracle - 52.6575).abs() < 1e-9);
        assert!((compute_luma(&img) - 52.6575).abs() < 1e-9);
    }

    #[test]
    fn blur_uniform_is_zero() {
        let img = ImageBuffer::filled(9, 7, [90, 120, 30]).unwrap();
        assert_eq!(compute_blur_score(&img).unwrap(), 0.0);
    }

    #[test]
    fn blur_checkerboard_matches_oracle() {
        let img = checkerboard(8);
        let expected = blur_oracle(&img);
        // 1-px checker: every interior response is +-4*255 in alternation.
        assert!((expected - 1_040_400.0).abs() < 1e-6);
        assert!((compute_blur_score(&img).unwrap() - expected).abs() < 1e-6);
    }

    #[test]
    fn blur_ignores_constant_offset() {
        let img = ImageBuffer::from_fn(12, 10, |x, y| {
            let v = ((x * 31 + y * 17) % 200) as u8;
            [v, v / 2, 200 - v]
        })
        .unwrap();
        let shifted = ImageBuffer::new(
            img.width(),
            img.height(),
            img.data().iter().map(|v| v + 10).collect(),
        )
        .unwrap();
        let a = compute_blur_score(&img).unwrap();
        let b = compute_blur_score(&shifted).unwrap();
        assert!((a - b).abs() < 1e-6 * a.max(1.0), "{a} vs {b}");
    }

    #[test]
    fn blur_rejects_tiny_images() {
        let img = ImageBuffer::filled(2, 5, [1, 2, 3]).unwrap();
        assert!(matches!(
            compute_blur_score(&img),
            Err(ImageError::TooSmall { width: 2, height: 5 })
        ));
    }
}
