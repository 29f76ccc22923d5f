//! CIELAB color comparison.

const WHITE_D65: [f64; 3] = [0.950_47, 1.0, 1.088_83];

fn linearize(c: f64) -> f64 {
    if c <= 0.040_45 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

fn lab_f(t: f64) -> f64 {
    const D: f64 = 6.0 / 29.0;
    if t > D * D * D {
        t.cbrt()
    } else {
        t / (3.0 * D * D) + 4.0 / 29.0
    }
}

/// sRGB in unit fractions to CIELAB under D65.
pub fn srgb_to_lab(rgb: [f64; 3]) -> [f64; 3] {
    let [r, g, b] = rgb.map(|c| linearize(c.clamp(0.0, 1.0)));
    let x = 0.412_456_4 * r + 0.357_576_1 * g + 0.180_437_5 * b;
    let y = 0.212_672_9 * r + 0.715_152_2 * g + 0.072_175_0 * b;
    let z = 0.019_333_9 * r + 0.119_192_0 * g + 0.950_304_1 * b;
    let (fx, fy, fz) = (lab_f(x / WHITE_D65[0]), lab_f(y / WHITE_D65[1]), lab_f(z / WHITE_D65[2]));
    [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}

fn delta_e(a: [f64; 3], b: [f64; 3]) -> f64 {
    let (la, lb) = (srgb_to_lab(a), srgb_to_lab(b));
    ((la[0] - lb[0]).powi(2) + (la[1] - lb[1]).powi(2) + (la[2] - lb[2]).powi(2)).sqrt()
}

/// `1 - ΔE / ΔE(black, white)`, clamped to `[0, 1]`.
pub fn color_similarity(a: [f64; 3], b: [f64; 3]) -> f64 {
    let max = delta_e([0.0; 3], [1.0; 3]);
    (1.0 - delta_e(a, b) / max).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints() {
        assert_eq!(color_similarity([0.2, 0.4, 0.6], [0.2, 0.4, 0.6]), 1.0);
        assert_eq!(color_similarity([0.0; 3], [1.0; 3]), 0.0);
        let lab = srgb_to_lab([1.0; 3]);
        assert!((lab[0] - 100.0).abs() < 1e-3 && lab[1].abs() < 1e-2 && lab[2].abs() < 1e-2);
    }

    #[test]
    fn reference_colors() {
        // published sRGB -> Lab values for pure red and mid gray
        let red = srgb_to_lab([1.0, 0.0, 0.0]);
        assert!((red[0] - 53.24).abs() < 0.01 && (red[1] - 80.09).abs() < 0.01 && (red[2] - 67.20).abs() < 0.01, "{red:?}");
        let gray = srgb_to_lab([0.5; 3]);
        assert!((gray[0] - 53.39).abs() < 0.01, "{gray:?}");
    }
}
