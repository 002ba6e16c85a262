//! RGB frame buffer and the codecs used to move frames in and out of files
//! and wire payloads.

use std::io::Cursor;
use std::path::Path;

use base64::Engine;
use thiserror::Error;

/// Default cap for an image attached to a backend request.
pub const WIRE_IMAGE_CAP_BYTES: usize = 8 * 1024 * 1024;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("image dimensions must be at least 1x1, got {width}x{height}")]
    EmptyDimensions { width: u32, height: u32 },
    #[error("pixel data length {actual} does not match {width}x{height}x3 = {expected}")]
    DataLength {
        width: u32,
        height: u32,
        expected: usize,
        actual: usize,
    },
    #[error("image too small: {width}x{height}, need at least 3x3")]
    TooSmall { width: u32, height: u32 },
    #[error("failed to decode image: {0}")]
    Decode(String),
    #[error("failed to encode image: {0}")]
    Encode(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// A packed 8-bit RGB image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageBuffer {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl ImageBuffer {
    pub fn new(width: u32, height: u32, data: Vec<u8>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::EmptyDimensions { width, height });
        }
        let expected = width as usize * height as usize * 3;
        if data.len() != expected {
            return Err(ImageError::DataLength {
                width,
                height,
                expected,
                actual: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Image filled with a single colour.
    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Result<Self, ImageError> {
        let n = width as usize * height as usize;
        let data = rgb.iter().copied().cycle().take(n * 3).collect();
        Self::new(width, height, data)
    }

    /// Builds an image by evaluating `f(x, y)` for every pixel.
    pub fn from_fn(
        width: u32,
        height: u32,
        mut f: impl FnMut(u32, u32) -> [u8; 3],
    ) -> Result<Self, ImageError> {
        let mut data = Vec::with_capacity(width as usize * height as usize * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        Self::new(width, height, data)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn pixels(&self) -> impl Iterator<Item = [u8; 3]> + '_ {
        self.data.chunks_exact(3).map(|p| [p[0], p[1], p[2]])
    }

    pub fn mirror_horizontal(&self) -> Self {
        Self::from_fn(self.width, self.height, |x, y| {
            self.pixel(self.width - 1 - x, y)
        })
        .expect("same dimensions")
    }

    pub fn mirror_vertical(&self) -> Self {
        Self::from_fn(self.width, self.height, |x, y| {
            self.pixel(x, self.height - 1 - y)
        })
        .expect("same dimensions")
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, ImageError> {
        let decoded = image::load_from_memory(bytes)
            .map_err(|e| ImageError::Decode(e.to_string()))?
            .into_rgb8();
        let (w, h) = decoded.dimensions();
        Self::new(w, h, decoded.into_raw())
    }

    pub fn open(path: impl AsRef<Path>) -> Result<Self, ImageError> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|source| ImageError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::decode(&bytes)
    }

    pub fn to_png(&self) -> Result<Vec<u8>, ImageError> {
        let mut out = Vec::new();
        image::write_buffer_with_format(
            &mut Cursor::new(&mut out),
            &self.data,
            self.width,
            self.height,
            image::ExtendedColorType::Rgb8,
            image::ImageFormat::Png,
        )
        .map_err(|e| ImageError::Encode(e.to_string()))?;
        Ok(out)
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<(), ImageError> {
        let path = path.as_ref();
        let bytes = self.to_png()?;
        std::fs::write(path, bytes).map_err(|source| ImageError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    /// 2x box downscale; odd trailing rows/columns are dropped.
    pub fn halve(&self) -> Self {
        let w = (self.width / 2).max(1);
        let h = (self.height / 2).max(1);
        Self::from_fn(w, h, |x, y| {
            let mut acc = [0u32; 3];
            let mut n = 0u32;
            for dy in 0..2 {
                for dx in 0..2 {
                    let sx = (2 * x + dx).min(self.width - 1);
                    let sy = (2 * y + dy).min(self.height - 1);
                    let p = self.pixel(sx, sy);
                    for c in 0..3 {
                        acc[c] += p[c] as u32;
                    }
                    n += 1;
                }
            }
            acc.map(|v| ((v + n / 2) / n) as u8)
        })
        .expect("non-empty dimensions")
    }
}

/// PNG-encodes and base64-encodes an image for a request body, halving the
/// resolution until the encoded PNG fits under `cap_bytes`.
pub fn encode_for_wire(img: &ImageBuffer, cap_bytes: usize) -> Result<String, ImageError> {
    let mut current = img.clone();
    loop {
        let png = current.to_png()?;
        if png.len() <= cap_bytes || (current.width == 1 && current.height == 1) {
            return Ok(base64::engine::general_purpose::STANDARD.encode(png));
        }
        current = current.halve();
    }
}

pub fn decode_from_wire(b64: &str) -> Result<ImageBuffer, ImageError> {
    let bytes = base64::engine::general_purpose::STANDARD
        .decode(b64.trim())
        .map_err(|e| ImageError::Decode(e.to_string()))?;
    ImageBuffer::decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_lengths() {
        assert!(matches!(
            ImageBuffer::new(2, 2, vec![0; 11]),
            Err(ImageError::DataLength { expected: 12, .. })
        ));
        assert!(matches!(
            ImageBuffer::new(0, 2, vec![]),
            Err(ImageError::EmptyDimensions { .. })
        ));
    }

    #[test]
    fn png_roundtrip() {
        let img = ImageBuffer::from_fn(5, 4, |x, y| [x as u8 * 40, y as u8 * 60, 7]).unwrap();
        let back = ImageBuffer::decode(&img.to_png().unwrap()).unwrap();
        assert_eq!(img, back);
    }

    #[test]
    fn wire_encoding_downscales_past_cap() {
        let img = ImageBuffer::from_fn(64, 64, |x, y| {
            [(x * 37 % 251) as u8, (y * 91 % 253) as u8, ((x ^ y) * 13) as u8]
        })
        .unwrap();
        let full = img.to_png().unwrap().len();
        let b64 = encode_for_wire(&img, full / 2).unwrap();
        let back = decode_from_wire(&b64).unwrap();
        assert!(back.width() < 64);
        let b64 = encode_for_wire(&img, WIRE_IMAGE_CAP_BYTES).unwrap();
        assert_eq!(decode_from_wire(&b64).unwrap(), img);
    }
}
