use std::f64::consts::PI;

use super::Rect;

pub fn intersection_area(a: &Rect, b: &Rect) -> f64 {
    let w = (a.right().min(b.right()) - a.x.max(b.x)).max(0.0);
    let h = (a.bottom().min(b.bottom()) - a.y.max(b.y)).max(0.0);
    w * h
}

pub fn union_area(a: &Rect, b: &Rect) -> f64 {
    a.area() + b.area() - intersection_area(a, b)
}

/// Intersection over union, in `[0, 1]`.
pub fn iou(a: &Rect, b: &Rect) -> f64 {
    let inter = intersection_area(a, b);
    if inter <= 0.0 {
        return 0.0;
    }
    (inter / union_area(a, b)).clamp(0.0, 1.0)
}

/// Complete IoU: IoU minus the normalized squared center distance and the
/// aspect-ratio consistency penalty. Lies in `(-2, 1]`, and equals 1 only for
/// identical boxes.
pub fn ciou(a: &Rect, b: &Rect) -> f64 {
    let iou = iou(a, b);

    let (acx, acy) = a.center();
    let (bcx, bcy) = b.center();
    let center_dist_sq = (acx - bcx).powi(2) + (acy - bcy).powi(2);

    let enclose_w = a.right().max(b.right()) - a.x.min(b.x);
    let enclose_h = a.bottom().max(b.bottom()) - a.y.min(b.y);
    let diag_sq = enclose_w * enclose_w + enclose_h * enclose_h;

    let v = (4.0 / (PI * PI)) * ((a.w / a.h).atan() - (b.w / b.h).atan()).powi(2);
    // alpha is 0/0 for same-aspect identical boxes
    let alpha = if v == 0.0 { 0.0 } else { v / (1.0 - iou + v) };

    iou - center_dist_sq / diag_sq - alpha * v
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn r(x: f64, y: f64, w: f64, h: f64) -> Rect {
        Rect::new(x, y, w, h).unwrap()
    }

    #[test]
    fn iou_examples() {
        let a = r(0.0, 0.0, 2.0, 2.0);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&a, &r(5.0, 5.0, 1.0, 1.0)), 0.0);
        // touching edges share no area
        assert_eq!(iou(&a, &r(2.0, 0.0, 2.0, 2.0)), 0.0);
        assert!((iou(&a, &r(1.0, 1.0, 2.0, 2.0)) - 1.0 / 7.0).abs() < 1e-15);
    }

    #[test]
    fn ciou_examples() {
        let a = r(0.0, 0.0, 2.0, 2.0);
        assert_eq!(ciou(&a, &a), 1.0);
        assert!(ciou(&a, &r(50.0, 50.0, 2.0, 2.0)) < 0.0);

        // hand evaluation of the penalty terms for the shifted pair:
        // rho^2 = 0.5^2 * 2 * 4 = 2, enclosing box 3x3 so c^2 = 18, v = 0
        let b = r(1.0, 1.0, 2.0, 2.0);
        let expected = 1.0 / 7.0 - 2.0 / 18.0;
        assert!((ciou(&a, &b) - expected).abs() < 1e-15);
        assert!(ciou(&a, &b) < iou(&a, &b));
    }

    #[test]
    fn ciou_aspect_penalty_applies() {
        let a = r(0.0, 0.0, 4.0, 2.0);
        let b = r(0.0, 0.0, 2.0, 4.0);
        let i = iou(&a, &b);
        let v = (4.0 / (PI * PI)) * (2f64.atan() - 0.5f64.atan()).powi(2);
        let alpha = v / (1.0 - i + v);
        // centers (2,1) vs (1,2): rho^2 = 2, enclosing 4x4 so c^2 = 32
        let expected = i - 2.0 / 32.0 - alpha * v;
        assert!((ciou(&a, &b) - expected).abs() < 1e-15);
    }

    fn arb_rect() -> impl Strategy<Value = Rect> {
        (0.0..100.0f64, 0.0..100.0f64, 0.1..50.0f64, 0.1..50.0f64)
            .prop_map(|(x, y, w, h)| Rect::new(x, y, w, h).unwrap())
    }

    proptest! {
        #[test]
        fn iou_symmetric_and_bounded(a in arb_rect(), b in arb_rect()) {
            let ab = iou(&a, &b);
            prop_assert_eq!(ab, iou(&b, &a));
            prop_assert!((0.0..=1.0).contains(&ab));
        }

        #[test]
        fn ciou_never_exceeds_iou(a in arb_rect(), b in arb_rect()) {
            let c = ciou(&a, &b);
            prop_assert!(c <= iou(&a, &b) + 1e-12);
            prop_assert!(c > -2.0);
        }

        #[test]
        fn ciou_of_self_is_one(a in arb_rect()) {
            prop_assert!((ciou(&a, &a) - 1.0).abs() < 1e-12);
        }
    }
}
