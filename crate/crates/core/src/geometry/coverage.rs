use super::Rect;

/// Exact area of the union of `rects`: a sweep over compressed x slabs, with
/// the covered y intervals merged inside each slab.
pub fn covered_area(rects: &[Rect]) -> f64 {
    let mut xs: Vec<f64> = rects.iter().flat_map(|r| [r.x, r.right()]).collect();
    xs.sort_by(|a, b| a.partial_cmp(b).expect("finite coordinates"));
    xs.dedup();
    let mut total = 0.0;
    let mut spans: Vec<(f64, f64)> = Vec::with_capacity(rects.len());
    for slab in xs.windows(2) {
        let (x0, x1) = (slab[0], slab[1]);
        spans.clear();
        spans.extend(
            rects
                .iter()
                .filter(|r| r.x <= x0 && r.right() >= x1 && r.h > 0.0)
                .map(|r| (r.y, r.bottom())),
        );
        if spans.is_empty() {
            continue;
        }
        spans.sort_by(|a, b| a.partial_cmp(b).expect("finite coordinates"));
        let mut covered = 0.0;
        let (mut lo, mut hi) = spans[0];
        for &(a, b) in &spans[1..] {
            if a > hi {
                covered += hi - lo;
                lo = a;
                hi = b;
            } else {
                hi = hi.max(b);
            }
        }
        covered += hi - lo;
        total += covered * (x1 - x0);
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn r(x: f64, y: f64, w: f64, h: f64) -> Rect {
        Rect::new(x, y, w, h).unwrap()
    }

    #[test]
    fn small_cases() {
        assert_eq!(covered_area(&[]), 0.0);
        assert_eq!(covered_area(&[r(0.0, 0.0, 2.0, 3.0)]), 6.0);
        assert_eq!(covered_area(&[r(0.0, 0.0, 2.0, 2.0), r(1.0, 1.0, 2.0, 2.0)]), 7.0);
        assert_eq!(covered_area(&[r(0.0, 0.0, 1.0, 1.0), r(5.0, 5.0, 1.0, 1.0)]), 2.0);
        assert_eq!(covered_area(&[r(0.0, 0.0, 4.0, 4.0), r(1.0, 1.0, 1.0, 1.0)]), 16.0);
    }

    proptest! {
        // unit-cell counting is exact for integer rectangles
        #[test]
        fn matches_cell_count(boxes in prop::collection::vec((0u32..20, 0u32..20, 1u32..8, 1u32..8), 0..8)) {
            let rects: Vec<Rect> = boxes.iter().map(|&(x, y, w, h)| r(x as f64, y as f64, w as f64, h as f64)).collect();
            let mut cells = 0u32;
            for cx in 0..28 {
                for cy in 0..28 {
                    if boxes.iter().any(|&(x, y, w, h)| cx >= x && cx < x + w && cy >= y && cy < y + h) {
                        cells += 1;
                    }
                }
            }
            prop_assert_eq!(covered_area(&rects), cells as f64);
        }
    }
}
