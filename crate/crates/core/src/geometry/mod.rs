//! Geometric primitives shared by every pipeline stage.
//!
//! Pixel-space [`Rect`]s are the currency of grounding and detection,
//! [`NormRect`]s (fractions of the page) are the currency of the layout tree
//! and of the evaluation blocks. Everything in this module is a pure function
//! over values.

mod affine;
mod assignment;
mod coverage;
mod max_rect;
mod nms;
mod overlap;

pub use affine::{fit_affine, AffineFit, AffineTransform};
pub use assignment::{hungarian_min_cost, CostMatrix};
pub use coverage::covered_area;
pub use max_rect::max_empty_rect;
pub use nms::{nms_per_class, Scored, DEFAULT_NMS_THRESHOLD};
pub use overlap::{ciou, intersection_area, iou, union_area};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance used when checking that normalized boxes stay inside the unit square.
pub const NORM_EPS: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("invalid rectangle ({x}, {y}, {w}, {h}): {reason}")]
    InvalidRect {
        x: f64,
        y: f64,
        w: f64,
        h: f64,
        reason: &'static str,
    },
    #[error("invalid normalized rectangle ({l}, {t}, {w}, {h})")]
    InvalidNormRect { l: f64, t: f64, w: f64, h: f64 },
    #[error("obstacles cover the entire page; no empty rectangle remains")]
    FullyCovered,
    #[error("degenerate affine configuration: {0}")]
    DegenerateAffine(&'static str),
    #[error("cost matrix has {got} entries, expected {rows}x{cols}")]
    CostMatrixShape { rows: usize, cols: usize, got: usize },
    #[error("cost matrix entry ({row}, {col}) is not finite")]
    NonFiniteCost { row: usize, col: usize },
}

/// Axis-aligned box in pixel coordinates, `(x, y)` is the top-left corner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct Rect {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl Rect {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self, GeometryError> {
        let bad = |reason| GeometryError::InvalidRect { x, y, w, h, reason };
        if !(x.is_finite() && y.is_finite() && w.is_finite() && h.is_finite()) {
            return Err(bad("coordinates must be finite"));
        }
        if x < 0.0 || y < 0.0 {
            return Err(bad("origin must be non-negative"));
        }
        if w <= 0.0 || h <= 0.0 {
            return Err(bad("width and height must be positive"));
        }
        Ok(Self { x, y, w, h })
    }

    /// Builds a rect from its edges; `None` when the span is empty.
    pub fn from_edges(left: f64, top: f64, right: f64, bottom: f64) -> Option<Self> {
        Self::new(left, top, right - left, bottom - top).ok()
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    /// Corners in clockwise order starting at the top-left.
    pub fn corners(&self) -> [(f64, f64); 4] {
        [
            (self.x, self.y),
            (self.right(), self.y),
            (self.right(), self.bottom()),
            (self.x, self.bottom()),
        ]
    }

    /// Intersection with `bounds`, or `None` when nothing of positive area remains.
    pub fn clip_to(&self, bounds: &Rect) -> Option<Rect> {
        Rect::from_edges(
            self.x.max(bounds.x),
            self.y.max(bounds.y),
            self.right().min(bounds.right()),
            self.bottom().min(bounds.bottom()),
        )
    }

    pub fn contains(&self, other: &Rect) -> bool {
        other.x >= self.x
            && other.y >= self.y
            && other.right() <= self.right()
            && other.bottom() <= self.bottom()
    }

    /// True when the open interiors of the two rects share any point.
    pub fn interiors_overlap(&self, other: &Rect) -> bool {
        self.x < other.right()
            && other.x < self.right()
            && self.y < other.bottom()
            && other.y < self.bottom()
    }

    pub fn normalize(&self, page_w: f64, page_h: f64) -> Result<NormRect, GeometryError> {
        NormRect::new(
            self.x / page_w,
            self.y / page_h,
            self.w / page_w,
            self.h / page_h,
        )
    }
}

impl TryFrom<[f64; 4]> for Rect {
    type Error = GeometryError;
    fn try_from(v: [f64; 4]) -> Result<Self, Self::Error> {
        Rect::new(v[0], v[1], v[2], v[3])
    }
}

impl From<Rect> for [f64; 4] {
    fn from(r: Rect) -> Self {
        [r.x, r.y, r.w, r.h]
    }
}

/// Box expressed as fractions of the page width (`l`, `w`) and height (`t`, `h`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct NormRect {
    pub l: f64,
    pub t: f64,
    pub w: f64,
    pub h: f64,
}

impl NormRect {
    pub const UNIT: NormRect = NormRect {
        l: 0.0,
        t: 0.0,
        w: 1.0,
        h: 1.0,
    };

    pub fn new(l: f64, t: f64, w: f64, h: f64) -> Result<Self, GeometryError> {
        let in_unit = |v: f64| v.is_finite() && (-NORM_EPS..=1.0 + NORM_EPS).contains(&v);
        let ok = in_unit(l)
            && in_unit(t)
            && in_unit(w)
            && in_unit(h)
            && l + w <= 1.0 + NORM_EPS
            && t + h <= 1.0 + NORM_EPS;
        if !ok {
            return Err(GeometryError::InvalidNormRect { l, t, w, h });
        }
        let c = |v: f64| v.clamp(0.0, 1.0);
        Ok(Self {
            l: c(l),
            t: c(t),
            w: c(w),
            h: c(h),
        })
    }

    pub fn right(&self) -> f64 {
        self.l + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.t + self.h
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn center(&self) -> (f64, f64) {
        (self.l + self.w / 2.0, self.t + self.h / 2.0)
    }

    /// Containment with the shared normalized tolerance.
    pub fn contains(&self, other: &NormRect) -> bool {
        other.l >= self.l - NORM_EPS
            && other.t >= self.t - NORM_EPS
            && other.right() <= self.right() + NORM_EPS
            && other.bottom() <= self.bottom() + NORM_EPS
    }

    /// Rounds every field to `places` decimals.
    pub fn rounded(&self, places: i32) -> NormRect {
        let f = 10f64.powi(places);
        let r = |v: f64| (v * f).round() / f;
        NormRect {
            l: r(self.l),
            t: r(self.t),
            w: r(self.w),
            h: r(self.h),
        }
    }

    pub fn to_pixels(&self, page_w: f64, page_h: f64) -> Result<Rect, GeometryError> {
        Rect::new(
            self.l * page_w,
            self.t * page_h,
            self.w * page_w,
            self.h * page_h,
        )
    }

    /// The same box viewed as a rect in a unit-scale coordinate space, used to
    /// run the pixel-space overlap measures on normalized boxes.
    pub fn as_unit_rect(&self) -> Option<Rect> {
        Rect::new(self.l, self.t, self.w, self.h).ok()
    }
}

impl TryFrom<[f64; 4]> for NormRect {
    type Error = GeometryError;
    fn try_from(v: [f64; 4]) -> Result<Self, Self::Error> {
        NormRect::new(v[0], v[1], v[2], v[3])
    }
}

impl From<NormRect> for [f64; 4] {
    fn from(r: NormRect) -> Self {
        [r.l, r.t, r.w, r.h]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rect_rejects_degenerate_and_negative() {
        assert!(Rect::new(0.0, 0.0, 0.0, 1.0).is_err());
        assert!(Rect::new(-1.0, 0.0, 1.0, 1.0).is_err());
        assert!(Rect::new(0.0, 0.0, f64::NAN, 1.0).is_err());
        assert!(Rect::new(0.0, 0.0, 1.0, 1.0).is_ok());
    }

    #[test]
    fn norm_rect_tolerates_epsilon_overflow() {
        let r = NormRect::new(0.5, 0.0, 0.5 + 5e-7, 1.0).unwrap();
        assert!(r.w <= 1.0);
        assert!(NormRect::new(0.5, 0.0, 0.6, 1.0).is_err());
    }

    #[test]
    fn clip_drops_outside_boxes() {
        let page = Rect::new(0.0, 0.0, 100.0, 100.0).unwrap();
        let inside = Rect::new(90.0, 90.0, 30.0, 30.0).unwrap();
        assert_eq!(
            inside.clip_to(&page),
            Some(Rect::new(90.0, 90.0, 10.0, 10.0).unwrap())
        );
        let outside = Rect::new(150.0, 0.0, 10.0, 10.0).unwrap();
        assert_eq!(outside.clip_to(&page), None);
    }

    #[test]
    fn serde_uses_xywh_arrays() {
        let r = Rect::new(1.0, 2.0, 3.0, 4.0).unwrap();
        assert_eq!(serde_json::to_string(&r).unwrap(), "[1.0,2.0,3.0,4.0]");
        assert!(serde_json::from_str::<Rect>("[0,0,0,4]").is_err());
    }
}
