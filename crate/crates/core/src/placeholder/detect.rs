//! Baseline UI element detector and the detection ingestion format.
//!
//! Detection: the dominant border color is taken as background, pixels far
//! from it are foreground, 8-connected foreground components become
//! candidate boxes, and boxes closer than the merge gap are fused.

use serde::{Deserialize, Serialize};

use super::PlaceholderError;
use crate::geometry::Rect;
use crate::raster::{color_distance, dominant_border_color, PageImage};

pub const DETECTION_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ElementKind {
    Image,
    Text,
    Icon,
    Other,
}

impl ElementKind {
    pub fn as_label(&self) -> &'static str {
        match self {
            ElementKind::Image => "image",
            ElementKind::Text => "text",
            ElementKind::Icon => "icon",
            ElementKind::Other => "other",
        }
    }

    pub fn is_visual(&self) -> bool {
        matches!(self, ElementKind::Image | ElementKind::Icon)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectedElement {
    #[serde(rename = "box")]
    pub rect: Rect,
    pub kind: ElementKind,
    #[serde(default = "one")]
    pub confidence: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    /// RGB L1 distance from the background above which a pixel is foreground.
    pub foreground_distance: u32,
    /// Components closer than this many pixels are merged.
    pub merge_gap: f64,
    /// Components with fewer foreground pixels are noise.
    pub min_pixels: usize,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            foreground_distance: 30,
            merge_gap: 4.0,
            min_pixels: 16,
        }
    }
}

struct Component {
    rect: Rect,
    pixels: usize,
}

pub fn detect_elements_baseline(image: &PageImage, config: &DetectorConfig) -> Vec<DetectedElement> {
    let img = image.rgba();
    let (w, h) = (img.width() as usize, img.height() as usize);
    if w == 0 || h == 0 {
        return Vec::new();
    }
    let bg = dominant_border_color(img, (0, 0, w as u32, h as u32));
    let fg: Vec<bool> = img
        .pixels()
        .map(|p| color_distance(*p, bg) > config.foreground_distance)
        .collect();
    let mut seen = vec![false; w * h];
    let mut comps = Vec::new();
    let mut stack = Vec::new();
    for start in 0..w * h {
        if !fg[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
        let mut pixels = 0;
        while let Some(i) = stack.pop() {
            let (x, y) = (i % w, i / w);
            pixels += 1;
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                    if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                        continue;
                    }
                    let j = ny as usize * w + nx as usize;
                    if fg[j] && !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
        comps.push(Component {
            rect: Rect {
                x: x0 as f64,
                y: y0 as f64,
                w: (x1 - x0 + 1) as f64,
                h: (y1 - y0 + 1) as f64,
            },
            pixels,
        });
    }
    let merged = merge_close(comps, config.merge_gap);
    let mut out: Vec<DetectedElement> = merged
        .into_iter()
        .filter(|c| c.pixels >= config.min_pixels)
        .map(|c| {
            let fill = c.pixels as f64 / c.rect.area();
            DetectedElement {
                rect: c.rect,
                kind: classify(&c.rect, fill),
                confidence: fill.clamp(0.0, 1.0),
            }
        })
        .collect();
    out.sort_by(|a, b| {
        b.rect
            .area()
            .partial_cmp(&a.rect.area())
            .expect("finite")
            .then((a.rect.y, a.rect.x).partial_cmp(&(b.rect.y, b.rect.x)).expect("finite"))
    });
    out
}

/// Axis gap between two boxes; zero when they overlap on that axis.
fn gap(a0: f64, a1: f64, b0: f64, b1: f64) -> f64 {
    (b0 - a1).max(a0 - b1).max(0.0)
}

fn merge_close(mut comps: Vec<Component>, max_gap: f64) -> Vec<Component> {
    loop {
        let mut merged_any = false;
        let mut i = 0;
        while i < comps.len() {
            let mut j = i + 1;
            while j < comps.len() {
                let (a, b) = (&comps[i].rect, &comps[j].rect);
                let close = gap(a.x, a.right(), b.x, b.right()) < max_gap && gap(a.y, a.bottom(), b.y, b.bottom()) < max_gap;
                if close {
                    let b = comps.swap_remove(j);
                    let a = &mut comps[i];
                    a.rect = Rect::from_edges(
                        a.rect.x.min(b.rect.x),
                        a.rect.y.min(b.rect.y),
                        a.rect.right().max(b.rect.right()),
                        a.rect.bottom().max(b.rect.bottom()),
                    )
                    .expect("union of valid boxes");
                    a.pixels += b.pixels;
                    merged_any = true;
                } else {
                    j += 1;
                }
            }
            i += 1;
        }
        if !merged_any {
            return comps;
        }
    }
}

/// Small solid marks are icons, solid areas images, sparse wide strips text.
fn classify(r: &Rect, fill: f64) -> ElementKind {
    let aspect = r.w / r.h;
    if r.w <= 32.0 && r.h <= 32.0 && fill >= 0.6 {
        ElementKind::Icon
    } else if fill >= 0.6 {
        ElementKind::Image
    } else if aspect >= 1.5 && r.h <= 64.0 {
        ElementKind::Text
    } else {
        ElementKind::Other
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionFile {
    pub version: u32,
    pub elements: Vec<DetectedElement>,
}

/// Reads an external detection file; boxes are clipped to the screenshot and
/// boxes wholly outside it are dropped.
pub fn ingest_detections(text: &str, width: u32, height: u32) -> Result<(Vec<DetectedElement>, Vec<String>), PlaceholderError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let file: DetectionFile = serde_path_to_error::deserialize(de)
        .map_err(|e| PlaceholderError::Detections(format!("field `{}`: {}", e.path(), e.inner())))?;
    if file.version != DETECTION_SCHEMA_VERSION {
        return Err(PlaceholderError::Detections(format!("unsupported version {}", file.version)));
    }
    let page = Rect {
        x: 0.0,
        y: 0.0,
        w: width as f64,
        h: height as f64,
    };
    let mut warnings = Vec::new();
    let mut out = Vec::new();
    for (i, mut e) in file.elements.into_iter().enumerate() {
        match e.rect.clip_to(&page) {
            Some(r) => {
                if r != e.rect {
                    warnings.push(format!("elements[{i}] clipped to the screenshot"));
                }
                e.rect = r;
                out.push(e);
            }
            None => warnings.push(format!("elements[{i}] lies outside the screenshot and was dropped")),
        }
    }
    Ok((out, warnings))
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::{Rgba, RgbaImage};

    fn page_with(rects: &[(u32, u32, u32, u32)]) -> PageImage {
        let mut img = RgbaImage::from_pixel(300, 200, Rgba([255, 255, 255, 255]));
        for &(x, y, w, h) in rects {
            for yy in y..y + h {
                for xx in x..x + w {
                    img.put_pixel(xx, yy, Rgba([200, 30, 30, 255]));
                }
            }
        }
        PageImage::from_rgba(img)
    }

    #[test]
    fn uniform_background_has_no_elements() {
        assert!(detect_elements_baseline(&page_with(&[]), &DetectorConfig::default()).is_empty());
    }

    #[test]
    fn two_solid_rectangles() {
        let found = detect_elements_baseline(&page_with(&[(20, 30, 100, 60), (180, 120, 50, 40)]), &DetectorConfig::default());
        assert_eq!(found.len(), 2);
        let expect = [(20.0, 30.0, 100.0, 60.0), (180.0, 120.0, 50.0, 40.0)];
        for (e, (x, y, w, h)) in found.iter().zip(expect) {
            assert!((e.rect.x - x).abs() <= 2.0 && (e.rect.y - y).abs() <= 2.0);
            assert!((e.rect.w - w).abs() <= 2.0 && (e.rect.h - h).abs() <= 2.0);
            assert_eq!(e.kind, ElementKind::Image);
        }
    }

    #[test]
    fn nearby_components_merge() {
        let found = detect_elements_baseline(&page_with(&[(20, 20, 40, 40), (62, 20, 40, 40)]), &DetectorConfig::default());
        assert_eq!(found.len(), 1);
        assert_eq!(found[0].rect, Rect::new(20.0, 20.0, 82.0, 40.0).unwrap());
    }

    #[test]
    fn ingestion_clips_and_drops() {
        let text = r#"{"version": 1, "elements": [
            {"box": [10, 10, 500, 20], "kind": "image", "confidence": 0.9},
            {"box": [900, 900, 5, 5], "kind": "text"}]}"#;
        let (els, warnings) = ingest_detections(text, 300, 200).unwrap();
        assert_eq!(els.len(), 1);
        assert_eq!(els[0].rect.w, 290.0);
        assert_eq!(warnings.len(), 2);
        assert!(ingest_detections(r#"{"version": 1, "elements": [{"box": [0, 0, 1, 1], "kind": "blob"}]}"#, 10, 10).is_err());
    }
}
