use proptest::prelude::*;

use screencoder_core::eval::text_similarity;
use screencoder_core::generation::{generate, parse_html, render_html, GenerationConfig, TemplateBackend};
use screencoder_core::geometry::{ciou, covered_area, iou, max_empty_rect, Rect};
use screencoder_core::grounding::{LayoutMap, PageSize, Provenance};
use screencoder_core::planning::{build_tree, parse_tree, serialize_tree};

fn int_rect(max: u32) -> impl Strategy<Value = Rect> {
    (0..max, 0..max, 1..max, 1..max).prop_map(|(x, y, w, h)| Rect::new(x as f64, y as f64, w as f64, h as f64).unwrap())
}

/// Counts covered unit cells on an integer grid.
fn cell_count(rects: &[Rect]) -> f64 {
    let mut n = 0;
    for y in 0..80 {
        for x in 0..80 {
            let (cx, cy) = (x as f64 + 0.5, y as f64 + 0.5);
            if rects.iter().any(|r| cx > r.x && cx < r.right() && cy > r.y && cy < r.bottom()) {
                n += 1;
            }
        }
    }
    n as f64
}

proptest! {
    #[test]
    fn covered_area_counts_cells(rects in prop::collection::vec(int_rect(40), 0..8)) {
        prop_assert_eq!(covered_area(&rects), cell_count(&rects));
    }

    #[test]
    fn max_empty_rect_is_free_and_inside(obstacles in prop::collection::vec(int_rect(60), 0..8)) {
        let page = Rect::new(0.0, 0.0, 60.0, 45.0).unwrap();
        if let Ok(r) = max_empty_rect(&page, &obstacles) {
            prop_assert!(page.contains(&r));
            prop_assert!(obstacles.iter().all(|o| !r.interiors_overlap(o)));
            prop_assert_eq!(cell_count(&[r]), r.area());
        }
    }

    #[test]
    fn overlap_scores_are_bounded(a in int_rect(50), b in int_rect(50)) {
        let (i, c) = (iou(&a, &b), ciou(&a, &b));
        prop_assert!((0.0..=1.0).contains(&i));
        prop_assert!((-1.0..=1.0).contains(&c));
        prop_assert!(c <= i);
        prop_assert!((i - iou(&b, &a)).abs() < 1e-12);
        prop_assert!((c - ciou(&b, &a)).abs() < 1e-12);
    }

    #[test]
    fn text_similarity_is_symmetric(a in "[a-c ]{0,8}", b in "[a-c ]{0,8}") {
        let s = text_similarity(&a, &b);
        prop_assert!((0.0..=1.0).contains(&s));
        prop_assert_eq!(s, text_similarity(&b, &a));
        prop_assert_eq!(text_similarity(&a, &a), 1.0);
    }

    #[test]
    fn plan_and_html_round_trip(header in 20u32..120, side in 60u32..300, left in any::<bool>()) {
        let (w, h) = (1000u32, 800u32);
        let mut layout = LayoutMap::new(PageSize { width: w, height: h });
        let r = |x: u32, y: u32, rw: u32, rh: u32| Rect::new(x as f64, y as f64, rw as f64, rh as f64).unwrap();
        layout.insert("header", r(0, 0, w, header), Provenance::Backend);
        let side_x = if left { 0 } else { w - side };
        layout.insert("sidebar", r(side_x, header, side, h - header), Provenance::Backend);
        let tree = build_tree(&layout);
        let text = serialize_tree(&tree);
        let parsed = parse_tree(&text).unwrap();
        prop_assert_eq!(&parsed, &tree);
        prop_assert_eq!(serialize_tree(&parsed), text);

        let (doc, _) = generate(&tree, &TemplateBackend, &GenerationConfig::default(), None).unwrap();
        let html = render_html(&doc);
        let again = parse_html(&html).unwrap();
        prop_assert_eq!(render_html(&again), html);
    }
}
