use super::{iou, Rect};

pub const DEFAULT_NMS_THRESHOLD: f64 = 0.5;

/// A labeled, scored box as produced by a detector or grounding backend.
#[derive(Debug, Clone, PartialEq)]
pub struct Scored<L> {
    pub rect: Rect,
    pub label: L,
    pub confidence: f64,
}

/// Greedy class-specific non-maximum suppression.
///
/// Boxes are visited in descending confidence (input order breaks ties). A box
/// is dropped when its IoU with an already retained box of the same label
/// exceeds `iou_threshold`. Boxes of different labels never suppress each
/// other. The result keeps the visiting order.
pub fn nms_per_class<L: PartialEq + Clone>(
    regions: &[Scored<L>],
    iou_threshold: f64,
) -> Vec<Scored<L>> {
    let mut order: Vec<usize> = (0..regions.len()).collect();
    // stable sort keeps input order among equal confidences
    order.sort_by(|&a, &b| regions[b].confidence.total_cmp(&regions[a].confidence));

    let mut kept: Vec<&Scored<L>> = Vec::new();
    for idx in order {
        let cand = &regions[idx];
        let suppressed = kept
            .iter()
            .any(|k| k.label == cand.label && iou(&k.rect, &cand.rect) > iou_threshold);
        if !suppressed {
            kept.push(cand);
        }
    }
    kept.into_iter().cloned().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn s(x: f64, y: f64, w: f64, h: f64, label: &'static str, c: f64) -> Scored<&'static str> {
        Scored {
            rect: Rect::new(x, y, w, h).unwrap(),
            label,
            confidence: c,
        }
    }

    #[test]
    fn exact_duplicates_keep_most_confident() {
        let out = nms_per_class(
            &[
                s(0.0, 0.0, 10.0, 10.0, "navigation", 0.7),
                s(0.0, 0.0, 10.0, 10.0, "navigation", 0.9),
            ],
            0.5,
        );
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].confidence, 0.9);
    }

    #[test]
    fn different_labels_never_suppress() {
        let out = nms_per_class(
            &[
                s(0.0, 0.0, 10.0, 10.0, "header", 0.9),
                s(0.0, 0.0, 10.0, 10.0, "sidebar", 0.8),
            ],
            0.5,
        );
        assert_eq!(out.len(), 2);
    }

    #[test]
    fn chain_matches_reference() {
        // a overlaps b and b overlaps c beyond the threshold, a and c do not:
        // b is suppressed by a, so c survives
        let a = s(0.0, 0.0, 10.0, 10.0, "x", 0.9);
        let b = s(2.0, 0.0, 10.0, 10.0, "x", 0.8);
        let c = s(4.0, 0.0, 10.0, 10.0, "x", 0.7);
        assert!(iou(&a.rect, &b.rect) > 0.5);
        assert!(iou(&b.rect, &c.rect) > 0.5);
        assert!(iou(&a.rect, &c.rect) < 0.5);
        let input = [c.clone(), a.clone(), b.clone()];
        let out = nms_per_class(&input, 0.5);
        assert_eq!(out, reference_nms(&input, 0.5));
        assert_eq!(out, vec![a, c]);
    }

    #[test]
    fn ties_preserve_input_order() {
        let a = s(0.0, 0.0, 10.0, 10.0, "x", 0.5);
        let b = s(100.0, 0.0, 10.0, 10.0, "y", 0.5);
        assert_eq!(nms_per_class(&[b.clone(), a.clone()], 0.5), vec![b, a]);
    }

    /// Recursive definition: the i-th box in sorted order survives iff no
    /// surviving earlier box of its label overlaps it beyond the threshold.
    fn reference_nms<L: PartialEq + Clone>(input: &[Scored<L>], thr: f64) -> Vec<Scored<L>> {
        let mut sorted: Vec<(usize, &Scored<L>)> = input.iter().enumerate().collect();
        for i in 1..sorted.len() {
            let mut j = i;
            while j > 0
                && (sorted[j - 1].1.confidence < sorted[j].1.confidence
                    || (sorted[j - 1].1.confidence == sorted[j].1.confidence
                        && sorted[j - 1].0 > sorted[j].0))
            {
                sorted.swap(j - 1, j);
                j -= 1;
            }
        }
        fn survives<L: PartialEq>(i: usize, sorted: &[(usize, &Scored<L>)], thr: f64) -> bool {
            (0..i).all(|j| {
                !(survives(j, sorted, thr)
                    && sorted[j].1.label == sorted[i].1.label
                    && iou(&sorted[j].1.rect, &sorted[i].1.rect) > thr)
            })
        }
        (0..sorted.len())
            .filter(|&i| survives(i, &sorted, thr))
            .map(|i| sorted[i].1.clone())
            .collect()
    }

    proptest! {
        #[test]
        fn matches_reference_and_respects_invariants(
            boxes in prop::collection::vec(
                (0.0..50.0f64, 0.0..50.0f64, 5.0..30.0f64, 5.0..30.0f64, 0usize..2, 0u8..5),
                0..8,
            ),
            thr in 0.1..0.9f64,
        ) {
            let labels = ["a", "b"];
            let input: Vec<_> = boxes
                .iter()
                .map(|&(x, y, w, h, l, c)| s(x, y, w, h, labels[l], c as f64 / 4.0))
                .collect();
            let out = nms_per_class(&input, thr);
            prop_assert_eq!(&out, &reference_nms(&input, thr));
            for (i, p) in out.iter().enumerate() {
                for q in &out[i + 1..] {
                    prop_assert!(p.label != q.label || iou(&p.rect, &q.rect) <= thr);
                }
            }
            for b in &input {
                let kept = out.contains(b);
                let covered = out.iter().any(|k| {
                    k.label == b.label && k.confidence >= b.confidence && iou(&k.rect, &b.rect) > thr
                });
                prop_assert!(kept || covered);
            }
        }
    }
}
