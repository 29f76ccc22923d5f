//! Screenshot handling: decoding, content hashing, PNG encoding and a few
//! pixel helpers used by fallback grounding and element detection.

use std::collections::HashMap;
use std::io::Cursor;

use base64::Engine;
use image::{ImageFormat, Rgba, RgbaImage};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::geometry::Rect;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("cannot decode image: {0}")]
    Decode(String),
    #[error("cannot encode image: {0}")]
    Encode(String),
    #[error("image is {width}x{height}, at least {min}x{min} is required")]
    TooSmall { width: u32, height: u32, min: u32 },
}

/// Decoded screenshot plus a content hash of its pixels.
#[derive(Debug, Clone)]
pub struct PageImage {
    rgba: RgbaImage,
    hash: String,
}

impl PageImage {
    pub fn decode(bytes: &[u8]) -> Result<Self, ImageError> {
        let img = image::load_from_memory(bytes).map_err(|e| ImageError::Decode(e.to_string()))?;
        Ok(Self::from_rgba(img.to_rgba8()))
    }

    pub fn open(path: &std::path::Path) -> Result<Self, ImageError> {
        let bytes = std::fs::read(path).map_err(|e| ImageError::Decode(e.to_string()))?;
        Self::decode(&bytes)
    }

    pub fn from_rgba(rgba: RgbaImage) -> Self {
        let hash = pixel_hash(&rgba);
        Self { rgba, hash }
    }

    pub fn rgba(&self) -> &RgbaImage {
        &self.rgba
    }

    pub fn width(&self) -> u32 {
        self.rgba.width()
    }

    pub fn height(&self) -> u32 {
        self.rgba.height()
    }

    /// Hex SHA-256 over the dimensions and raw RGBA pixels, independent of
    /// the container format the image arrived in.
    pub fn content_hash(&self) -> &str {
        &self.hash
    }

    pub fn page_rect(&self) -> Rect {
        Rect {
            x: 0.0,
            y: 0.0,
            w: self.width() as f64,
            h: self.height() as f64,
        }
    }

    pub fn to_png(&self) -> Result<Vec<u8>, ImageError> {
        encode_png(&self.rgba)
    }

    pub fn to_base64_png(&self) -> Result<String, ImageError> {
        Ok(base64::engine::general_purpose::STANDARD.encode(self.to_png()?))
    }
}

fn pixel_hash(img: &RgbaImage) -> String {
    let mut h = Sha256::new();
    h.update(img.width().to_le_bytes());
    h.update(img.height().to_le_bytes());
    h.update(img.as_raw());
    hex::encode(h.finalize())
}

pub fn encode_png(img: &RgbaImage) -> Result<Vec<u8>, ImageError> {
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png)
        .map_err(|e| ImageError::Encode(e.to_string()))?;
    Ok(out.into_inner())
}

/// Integer pixel window covering `r`, clipped to the image. `None` when empty.
pub fn pixel_window(img: &RgbaImage, r: &Rect) -> Option<(u32, u32, u32, u32)> {
    let x0 = r.x.floor().max(0.0) as u32;
    let y0 = r.y.floor().max(0.0) as u32;
    let x1 = (r.right().ceil() as u32).min(img.width());
    let y1 = (r.bottom().ceil() as u32).min(img.height());
    (x1 > x0 && y1 > y0).then_some((x0, y0, x1 - x0, y1 - y0))
}

/// Most frequent color along the border of the `(x, y, w, h)` window.
pub fn dominant_border_color(img: &RgbaImage, window: (u32, u32, u32, u32)) -> Rgba<u8> {
    let (x0, y0, w, h) = window;
    let mut counts: HashMap<[u8; 4], usize> = HashMap::new();
    let mut bump = |x: u32, y: u32| *counts.entry(img.get_pixel(x, y).0).or_default() += 1;
    for x in x0..x0 + w {
        bump(x, y0);
        bump(x, y0 + h - 1);
    }
    for y in y0..y0 + h {
        bump(x0, y);
        bump(x0 + w - 1, y);
    }
    // ties resolved by the color value so the result does not depend on hash order
    let (color, _) = counts
        .into_iter()
        .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
        .unwrap_or(([255, 255, 255, 255], 0));
    Rgba(color)
}

/// Sum of absolute channel differences over RGB.
pub fn color_distance(a: Rgba<u8>, b: Rgba<u8>) -> u32 {
    (0..3).map(|i| (a.0[i] as i32 - b.0[i] as i32).unsigned_abs()).sum()
}

/// Mean RGB over a window as unit fractions.
pub fn mean_color(img: &RgbaImage, window: (u32, u32, u32, u32)) -> [f64; 3] {
    let (x0, y0, w, h) = window;
    let mut acc = [0u64; 3];
    for y in y0..y0 + h {
        for x in x0..x0 + w {
            let p = img.get_pixel(x, y).0;
            for c in 0..3 {
                acc[c] += p[c] as u64;
            }
        }
    }
    let n = (w as u64 * h as u64).max(1) as f64 * 255.0;
    [acc[0] as f64 / n, acc[1] as f64 / n, acc[2] as f64 / n]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_ignores_container_format() {
        let mut img = RgbaImage::from_pixel(40, 40, Rgba([255, 255, 255, 255]));
        img.put_pixel(3, 3, Rgba([0, 0, 0, 255]));
        let a = PageImage::from_rgba(img);
        let b = PageImage::decode(&a.to_png().unwrap()).unwrap();
        assert_eq!(a.content_hash(), b.content_hash());
        assert_eq!(a.content_hash().len(), 64);
    }

    #[test]
    fn border_color_and_mean() {
        let mut img = RgbaImage::from_pixel(10, 10, Rgba([255, 255, 255, 255]));
        for y in 3..7 {
            for x in 3..7 {
                img.put_pixel(x, y, Rgba([0, 0, 0, 255]));
            }
        }
        assert_eq!(dominant_border_color(&img, (0, 0, 10, 10)), Rgba([255, 255, 255, 255]));
        assert_eq!(mean_color(&img, (3, 3, 4, 4)), [0.0, 0.0, 0.0]);
        assert_eq!(pixel_window(&img, &Rect::new(8.5, 8.5, 5.0, 5.0).unwrap()), Some((8, 8, 2, 2)));
    }

    #[test]
    fn garbage_does_not_decode() {
        assert!(matches!(PageImage::decode(b"not an image"), Err(ImageError::Decode(_))));
    }
}
