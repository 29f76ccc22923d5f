//! Spatial-prior recovery of labels the backend did not return.

use image::RgbaImage;
use serde::{Deserialize, Serialize};

use super::{GroundedRegion, RegionSource, HEADER, NAVIGATION, SIDEBAR};
use crate::geometry::{iou, Rect};
use crate::raster::{color_distance, dominant_border_color};

/// Thresholds of the fallback priors, as fractions of the page size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FallbackPriors {
    /// Strips must start within this top fraction of the page height.
    pub top_band: f64,
    pub min_strip_width: f64,
    pub max_strip_height: f64,
    /// Height of the synthesized strip when the image offers no better guess.
    pub strip_height: f64,
    pub max_sidebar_width: f64,
    /// Width of the synthesized sidebar when the image offers no better guess.
    pub sidebar_width: f64,
    pub min_sidebar_height: f64,
    /// A candidate overlapping a resolved region beyond this IoU is vetoed.
    pub max_overlap_iou: f64,
    /// Minimum RGB L1 distance from the background for a pixel to count as content.
    pub foreground_distance: u32,
}

impl Default for FallbackPriors {
    fn default() -> Self {
        Self {
            top_band: 0.15,
            min_strip_width: 0.70,
            max_strip_height: 0.12,
            strip_height: 0.10,
            max_sidebar_width: 0.25,
            sidebar_width: 0.20,
            min_sidebar_height: 0.60,
            max_overlap_iou: 0.3,
            foreground_distance: 30,
        }
    }
}

impl FallbackPriors {
    /// Whether `r` has the shape a recovered `label` must have.
    pub fn admits(&self, label: &str, r: &Rect, page: &Rect) -> bool {
        let eps = 1e-9;
        match label {
            HEADER | NAVIGATION => {
                r.y - page.y <= self.top_band * page.h + eps
                    && r.w >= self.min_strip_width * page.w - eps
                    && r.h <= self.max_strip_height * page.h + eps
            }
            SIDEBAR => {
                let flush = (r.x - page.x).abs() < eps || (r.right() - page.right()).abs() < eps;
                flush
                    && r.w <= self.max_sidebar_width * page.w + eps
                    && r.h >= self.min_sidebar_height * page.h - eps
            }
            _ => false,
        }
    }
}

/// Proposes a box for `missing_label` from the priors alone.
pub fn fallback_recover(
    missing_label: &str,
    detected: &[GroundedRegion],
    page: &Rect,
    priors: &FallbackPriors,
) -> Option<GroundedRegion> {
    recover(missing_label, detected, page, priors, None)
}

/// Like [`fallback_recover`], but first looks for a matching band of content
/// in the screenshot and only falls back to the synthesized prior box when
/// none satisfies the priors.
pub fn fallback_recover_guided(
    missing_label: &str,
    detected: &[GroundedRegion],
    page: &Rect,
    priors: &FallbackPriors,
    image: &RgbaImage,
) -> Option<GroundedRegion> {
    recover(missing_label, detected, page, priors, Some(image))
}

fn recover(
    label: &str,
    detected: &[GroundedRegion],
    page: &Rect,
    priors: &FallbackPriors,
    image: Option<&RgbaImage>,
) -> Option<GroundedRegion> {
    if detected.iter().any(|d| d.label == label) {
        return None;
    }
    let mask = image.map(|img| ContentMask::new(img, priors.foreground_distance));
    let candidates: Vec<Rect> = match label {
        HEADER | NAVIGATION => strip_candidates(label, detected, page, priors, mask.as_ref()),
        SIDEBAR => sidebar_candidates(detected, page, priors, mask.as_ref()),
        _ => Vec::new(),
    };
    candidates
        .into_iter()
        .find(|c| {
            priors.admits(label, c, page)
                && detected
                    .iter()
                    .all(|d| iou(&d.rect, c) <= priors.max_overlap_iou)
        })
        .map(|rect| GroundedRegion {
            rect,
            label: label.to_string(),
            confidence: 0.0,
            source: RegionSource::Fallback,
        })
}

fn strip_candidates(
    label: &str,
    detected: &[GroundedRegion],
    page: &Rect,
    priors: &FallbackPriors,
    mask: Option<&ContentMask>,
) -> Vec<Rect> {
    let start = if label == NAVIGATION {
        detected
            .iter()
            .filter(|d| d.label == HEADER)
            .map(|d| d.rect.bottom())
            .fold(page.y, f64::max)
    } else {
        page.y
    };
    if start - page.y > priors.top_band * page.h {
        return Vec::new();
    }
    let found = mask.and_then(|m| m.find_strip(start, page, priors));
    let prior = Rect::new(page.x, start, page.w, priors.strip_height * page.h)
        .ok()
        .and_then(|r| r.clip_to(page));
    found.into_iter().chain(prior).collect()
}

fn sidebar_candidates(
    detected: &[GroundedRegion],
    page: &Rect,
    priors: &FallbackPriors,
    mask: Option<&ContentMask>,
) -> Vec<Rect> {
    let top = detected
        .iter()
        .filter(|d| d.label == HEADER || d.label == NAVIGATION)
        .map(|d| d.rect.bottom())
        .fold(page.y, f64::max);
    let height = page.bottom() - top;
    if height <= 0.0 {
        return Vec::new();
    }
    let width = priors.sidebar_width * page.w;
    let mut out: Vec<Rect> = [true, false]
        .into_iter()
        .filter_map(|from_left| mask.and_then(|m| m.find_column_band(top, page, priors, from_left)))
        .collect();
    for x in [page.x, page.right() - width] {
        if let Ok(r) = Rect::new(x, top, width, height) {
            out.push(r);
        }
    }
    out
}

/// Foreground/background classification of a screenshot.
struct ContentMask {
    width: u32,
    height: u32,
    fg: Vec<bool>,
}

impl ContentMask {
    fn new(img: &RgbaImage, threshold: u32) -> Self {
        let bg = dominant_border_color(img, (0, 0, img.width(), img.height()));
        let fg = img
            .pixels()
            .map(|p| color_distance(*p, bg) > threshold)
            .collect();
        Self {
            width: img.width(),
            height: img.height(),
            fg,
        }
    }

    fn at(&self, x: u32, y: u32) -> bool {
        self.fg[(y * self.width + x) as usize]
    }

    fn row_fraction(&self, y: u32) -> f64 {
        (0..self.width).filter(|&x| self.at(x, y)).count() as f64 / self.width as f64
    }

    fn col_fraction(&self, x: u32, y0: u32) -> f64 {
        (y0..self.height).filter(|&y| self.at(x, y)).count() as f64 / self.height as f64
    }

    /// First run of rows, starting inside the top band, that is mostly content.
    fn find_strip(&self, start: f64, page: &Rect, priors: &FallbackPriors) -> Option<Rect> {
        let band_end = ((page.y + priors.top_band * page.h).floor() as u32).min(self.height);
        let mut y = start.ceil() as u32;
        while y < band_end && self.row_fraction(y) < priors.min_strip_width {
            y += 1;
        }
        if y >= band_end {
            return None;
        }
        let y0 = y;
        while y < self.height && self.row_fraction(y) >= priors.min_strip_width {
            y += 1;
        }
        let (mut x0, mut x1) = (self.width, 0);
        for yy in y0..y {
            for x in 0..self.width {
                if self.at(x, yy) {
                    x0 = x0.min(x);
                    x1 = x1.max(x + 1);
                }
            }
        }
        Rect::from_edges(x0 as f64, y0 as f64, x1 as f64, y as f64)
    }

    /// Run of mostly-content columns touching the left or right page edge.
    fn find_column_band(
        &self,
        top: f64,
        page: &Rect,
        priors: &FallbackPriors,
        from_left: bool,
    ) -> Option<Rect> {
        let y0 = (top.ceil() as u32).min(self.height);
        let max_w = (priors.max_sidebar_width * page.w).floor() as u32 + 1;
        let dense = |x: u32| self.col_fraction(x, y0) >= priors.min_sidebar_height;
        let mut run = 0u32;
        while run < self.width && run <= max_w {
            let x = if from_left { run } else { self.width - 1 - run };
            if !dense(x) {
                break;
            }
            run += 1;
        }
        if run == 0 {
            return None;
        }
        let (x0, x1) = if from_left {
            (0, run)
        } else {
            (self.width - run, self.width)
        };
        let (mut ya, mut yb) = (self.height, y0);
        for x in x0..x1 {
            for y in y0..self.height {
                if self.at(x, y) {
                    ya = ya.min(y);
                    yb = yb.max(y + 1);
                }
            }
        }
        Rect::from_edges(x0 as f64, ya as f64, x1 as f64, yb as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::Rgba;

    fn r(x: f64, y: f64, w: f64, h: f64) -> Rect {
        Rect::new(x, y, w, h).unwrap()
    }

    fn resolved(label: &str, rect: Rect) -> GroundedRegion {
        GroundedRegion {
            rect,
            label: label.to_string(),
            confidence: 1.0,
            source: RegionSource::Backend,
        }
    }

    #[test]
    fn header_prior_on_empty_page() {
        let page = r(0.0, 0.0, 1000.0, 800.0);
        let got = fallback_recover(HEADER, &[], &page, &FallbackPriors::default()).unwrap();
        assert_eq!(got.rect, r(0.0, 0.0, 1000.0, 80.0));
        assert_eq!(got.source, RegionSource::Fallback);
    }

    #[test]
    fn sidebar_prior_on_free_left_edge() {
        let page = r(0.0, 0.0, 1000.0, 800.0);
        let got = fallback_recover(SIDEBAR, &[], &page, &FallbackPriors::default()).unwrap();
        assert_eq!(got.rect.x, 0.0);
        assert_eq!(got.rect.w, 200.0);
        assert!(got.rect.h >= 480.0);
    }

    #[test]
    fn sidebar_moves_right_when_left_is_taken() {
        let page = r(0.0, 0.0, 1000.0, 800.0);
        let taken = [resolved("banner", r(0.0, 100.0, 150.0, 700.0))];
        let got = fallback_recover(SIDEBAR, &taken, &page, &FallbackPriors::default()).unwrap();
        assert_eq!(got.rect, r(800.0, 0.0, 200.0, 800.0));
    }

    #[test]
    fn navigation_goes_below_header() {
        let page = r(0.0, 0.0, 1000.0, 800.0);
        let header = [resolved(HEADER, r(0.0, 0.0, 1000.0, 60.0))];
        let got = fallback_recover(NAVIGATION, &header, &page, &FallbackPriors::default()).unwrap();
        assert_eq!(got.rect, r(0.0, 60.0, 1000.0, 80.0));
    }

    #[test]
    fn blocked_when_header_fills_top_band() {
        let page = r(0.0, 0.0, 1000.0, 800.0);
        let header = [resolved(HEADER, r(0.0, 0.0, 1000.0, 200.0))];
        assert!(fallback_recover(NAVIGATION, &header, &page, &FallbackPriors::default()).is_none());
    }

    #[test]
    fn overlap_veto() {
        let page = r(0.0, 0.0, 1000.0, 800.0);
        // a resolved sidebar-like box overlapping the would-be header strip
        let other = [resolved("banner", r(0.0, 0.0, 1000.0, 70.0))];
        assert!(fallback_recover(HEADER, &other, &page, &FallbackPriors::default()).is_none());
    }

    #[test]
    fn unknown_labels_have_no_prior() {
        let page = r(0.0, 0.0, 100.0, 100.0);
        assert!(fallback_recover("footer", &[], &page, &FallbackPriors::default()).is_none());
    }

    #[test]
    fn guided_strip_follows_image() {
        let mut img = RgbaImage::from_pixel(200, 200, Rgba([255, 255, 255, 255]));
        for y in 10..30 {
            for x in 0..200 {
                img.put_pixel(x, y, Rgba([30, 60, 90, 255]));
            }
        }
        let page = r(0.0, 0.0, 200.0, 200.0);
        let got =
            fallback_recover_guided(HEADER, &[], &page, &FallbackPriors::default(), &img).unwrap();
        assert_eq!(got.rect, r(0.0, 10.0, 200.0, 20.0));
    }

    #[test]
    fn guided_sidebar_follows_image() {
        let mut img = RgbaImage::from_pixel(200, 200, Rgba([255, 255, 255, 255]));
        for y in 20..200 {
            for x in 160..200 {
                img.put_pixel(x, y, Rgba([20, 20, 20, 255]));
            }
        }
        let page = r(0.0, 0.0, 200.0, 200.0);
        let got =
            fallback_recover_guided(SIDEBAR, &[], &page, &FallbackPriors::default(), &img).unwrap();
        assert_eq!(got.rect, r(160.0, 20.0, 40.0, 180.0));
    }
}
