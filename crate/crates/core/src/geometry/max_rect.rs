//! Largest empty axis-aligned rectangle among rectangular obstacles.
//!
//! The page is compressed onto the grid induced by the page and obstacle edges.
//! Any maximum-area empty rectangle has its edges on grid lines, so a
//! largest-rectangle-in-histogram sweep over the free cells is exact.

use std::cmp::Ordering;

use super::{GeometryError, Rect};

/// Maximum-area rectangle inside `page` whose interior meets no obstacle interior.
///
/// Among equal areas the rectangle with the topmost, then leftmost, top-left
/// corner wins.
pub fn max_empty_rect(page: &Rect, obstacles: &[Rect]) -> Result<Rect, GeometryError> {
    let clipped: Vec<Rect> = obstacles.iter().filter_map(|o| o.clip_to(page)).collect();

    let xs = compress(page.x, page.right(), clipped.iter().flat_map(|o| [o.x, o.right()]));
    let ys = compress(page.y, page.bottom(), clipped.iter().flat_map(|o| [o.y, o.bottom()]));
    let cols = xs.len() - 1;
    let rows = ys.len() - 1;

    // occupied cells: obstacles align with grid lines, so testing cell centers is exact
    let mut blocked = vec![vec![false; cols]; rows];
    for (r, row) in blocked.iter_mut().enumerate() {
        let cy = (ys[r] + ys[r + 1]) / 2.0;
        for (c, cell) in row.iter_mut().enumerate() {
            let cx = (xs[c] + xs[c + 1]) / 2.0;
            *cell = clipped
                .iter()
                .any(|o| cx > o.x && cx < o.right() && cy > o.y && cy < o.bottom());
        }
    }

    let mut best: Option<Candidate> = None;
    let mut heights = vec![0usize; cols];
    for r in 0..rows {
        for c in 0..cols {
            heights[c] = if blocked[r][c] { 0 } else { heights[c] + 1 };
        }
        let (left, right) = extents(&heights);
        for c in 0..cols {
            let k = heights[c];
            if k == 0 {
                continue;
            }
            let cand = Candidate {
                left: xs[left[c]],
                top: ys[r + 1 - k],
                right: xs[right[c]],
                bottom: ys[r + 1],
            };
            if best.as_ref().is_none_or(|b| cand.better_than(b)) {
                best = Some(cand);
            }
        }
    }

    best.and_then(|b| Rect::from_edges(b.left, b.top, b.right, b.bottom))
        .ok_or(GeometryError::FullyCovered)
}

fn compress(lo: f64, hi: f64, inner: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = std::iter::once(lo)
        .chain(std::iter::once(hi))
        .chain(inner.filter(|&c| c > lo && c < hi))
        .collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

/// For each bar, the grid-line index just right of the nearest lower bar on the
/// left, and the grid-line index of the nearest lower bar on the right.
fn extents(heights: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let n = heights.len();
    let mut left = vec![0; n];
    let mut right = vec![n; n];
    let mut stack: Vec<usize> = Vec::new();
    for i in 0..n {
        while stack.last().is_some_and(|&j| heights[j] >= heights[i]) {
            stack.pop();
        }
        left[i] = stack.last().map_or(0, |&j| j + 1);
        stack.push(i);
    }
    stack.clear();
    for i in (0..n).rev() {
        while stack.last().is_some_and(|&j| heights[j] >= heights[i]) {
            stack.pop();
        }
        right[i] = stack.last().copied().unwrap_or(n);
        stack.push(i);
    }
    (left, right)
}

struct Candidate {
    left: f64,
    top: f64,
    right: f64,
    bottom: f64,
}

impl Candidate {
    fn area(&self) -> f64 {
        (self.right - self.left) * (self.bottom - self.top)
    }

    fn better_than(&self, other: &Candidate) -> bool {
        match self.area().total_cmp(&other.area()) {
            Ordering::Greater => true,
            Ordering::Less => false,
            Ordering::Equal => (self.top, self.left) < (other.top, other.left),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(x: f64, y: f64, w: f64, h: f64) -> Rect {
        Rect::new(x, y, w, h).unwrap()
    }

    #[test]
    fn empty_page_is_whole_page() {
        let page = r(0.0, 0.0, 1000.0, 800.0);
        assert_eq!(max_empty_rect(&page, &[]).unwrap(), page);
    }

    #[test]
    fn header_strip_leaves_bottom_band() {
        let page = r(0.0, 0.0, 100.0, 100.0);
        let got = max_empty_rect(&page, &[r(0.0, 0.0, 100.0, 10.0)]).unwrap();
        assert_eq!(got, r(0.0, 10.0, 100.0, 90.0));
    }

    #[test]
    fn header_and_sidebar_leave_bottom_right() {
        let page = r(0.0, 0.0, 1000.0, 800.0);
        let got = max_empty_rect(
            &page,
            &[r(0.0, 0.0, 1000.0, 100.0), r(0.0, 100.0, 200.0, 700.0)],
        )
        .unwrap();
        assert_eq!(got, r(200.0, 100.0, 800.0, 700.0));
    }

    #[test]
    fn full_cover_is_an_error() {
        let page = r(0.0, 0.0, 10.0, 10.0);
        let err = max_empty_rect(&page, &[r(0.0, 0.0, 6.0, 10.0), r(5.0, 0.0, 5.0, 10.0)]);
        assert_eq!(err, Err(GeometryError::FullyCovered));
    }

    #[test]
    fn ties_prefer_top_then_left() {
        // a vertical bar in the middle leaves two equal halves
        let page = r(0.0, 0.0, 30.0, 10.0);
        let got = max_empty_rect(&page, &[r(10.0, 0.0, 10.0, 10.0)]).unwrap();
        assert_eq!(got, r(0.0, 0.0, 10.0, 10.0));
        // a horizontal bar gives a top and a bottom half
        let page = r(0.0, 0.0, 10.0, 30.0);
        let got = max_empty_rect(&page, &[r(0.0, 10.0, 10.0, 10.0)]).unwrap();
        assert_eq!(got, r(0.0, 0.0, 10.0, 10.0));
    }

    #[test]
    fn obstacles_outside_page_are_ignored() {
        let page = r(0.0, 0.0, 10.0, 10.0);
        assert_eq!(
            max_empty_rect(&page, &[r(20.0, 20.0, 5.0, 5.0)]).unwrap(),
            page
        );
    }
}
