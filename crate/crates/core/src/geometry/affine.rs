use serde::{Deserialize, Serialize};

use super::{GeometryError, Rect};

/// Axis-aligned scale plus translation: `x' = scale_x * x + offset_x`, same for y.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineTransform {
    pub scale_x: f64,
    pub scale_y: f64,
    pub offset_x: f64,
    pub offset_y: f64,
}

impl AffineTransform {
    pub const IDENTITY: AffineTransform = AffineTransform {
        scale_x: 1.0,
        scale_y: 1.0,
        offset_x: 0.0,
        offset_y: 0.0,
    };

    pub fn apply_point(&self, (x, y): (f64, f64)) -> (f64, f64) {
        (
            self.scale_x * x + self.offset_x,
            self.scale_y * y + self.offset_y,
        )
    }

    /// Maps a rect; positive scales keep it axis-aligned and non-degenerate.
    /// Fails only when the image lands at negative coordinates.
    pub fn apply_rect(&self, r: &Rect) -> Result<Rect, GeometryError> {
        let (x, y) = self.apply_point((r.x, r.y));
        Rect::new(x, y, r.w * self.scale_x, r.h * self.scale_y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineFit {
    pub transform: AffineTransform,
    /// Sum of squared residuals over both axes.
    pub residual: f64,
}

/// Least-squares fit of the axis-aligned model mapping `src` onto `dst`.
///
/// The two axes decouple, so each is an ordinary simple linear regression.
pub fn fit_affine(src: &[(f64, f64)], dst: &[(f64, f64)]) -> Result<AffineFit, GeometryError> {
    if src.len() != dst.len() {
        return Err(GeometryError::DegenerateAffine(
            "source and target point lists differ in length",
        ));
    }
    if src.len() < 2 {
        return Err(GeometryError::DegenerateAffine("at least two points are required"));
    }
    let (scale_x, offset_x, res_x) = fit_axis(src.iter().map(|p| p.0), dst.iter().map(|p| p.0))
        .ok_or(GeometryError::DegenerateAffine("all source points share one x"))?;
    let (scale_y, offset_y, res_y) = fit_axis(src.iter().map(|p| p.1), dst.iter().map(|p| p.1))
        .ok_or(GeometryError::DegenerateAffine("all source points share one y"))?;
    if scale_x <= 0.0 || scale_y <= 0.0 {
        return Err(GeometryError::DegenerateAffine("fitted scale is not positive"));
    }
    Ok(AffineFit {
        transform: AffineTransform {
            scale_x,
            scale_y,
            offset_x,
            offset_y,
        },
        residual: res_x + res_y,
    })
}

fn fit_axis(
    src: impl Iterator<Item = f64> + Clone,
    dst: impl Iterator<Item = f64> + Clone,
) -> Option<(f64, f64, f64)> {
    let n = src.clone().count() as f64;
    let mean_s = src.clone().sum::<f64>() / n;
    let mean_d = dst.clone().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (s, d) in src.clone().zip(dst.clone()) {
        sxx += (s - mean_s) * (s - mean_s);
        sxy += (s - mean_s) * (d - mean_d);
    }
    if sxx <= f64::EPSILON * mean_s.abs().max(1.0) {
        return None;
    }
    let scale = sxy / sxx;
    let offset = mean_d - scale * mean_s;
    let residual = src
        .zip(dst)
        .map(|(s, d)| (scale * s + offset - d).powi(2))
        .sum();
    Some((scale, offset, residual))
}

#[cfg(test)]
mod tests {
    use super::*;

    const CORNERS: [(f64, f64); 4] = [(0.0, 0.0), (100.0, 0.0), (100.0, 50.0), (0.0, 50.0)];

    #[test]
    fn identity_fit() {
        let fit = fit_affine(&CORNERS, &CORNERS).unwrap();
        assert_eq!(fit.transform, AffineTransform::IDENTITY);
        assert_eq!(fit.residual, 0.0);
    }

    #[test]
    fn recovers_scale_and_offset() {
        let dst: Vec<_> = CORNERS
            .iter()
            .map(|&(x, y)| (2.0 * x + 10.0, 2.0 * y + 20.0))
            .collect();
        let t = fit_affine(&CORNERS, &dst).unwrap().transform;
        assert!((t.scale_x - 2.0).abs() < 1e-9);
        assert!((t.scale_y - 2.0).abs() < 1e-9);
        assert!((t.offset_x - 10.0).abs() < 1e-9);
        assert!((t.offset_y - 20.0).abs() < 1e-9);
    }

    #[test]
    fn noisy_residual_matches_normal_equations() {
        let src = [(0.0, 0.0), (10.0, 3.0), (20.0, 9.0), (35.0, 12.0), (50.0, 30.0)];
        let dst = [(1.2, -0.4), (21.5, 6.9), (40.1, 17.8), (71.3, 24.6), (99.2, 59.0)];
        let fit = fit_affine(&src, &dst).unwrap();

        // independent route: solve [sum x^2, sum x; sum x, n] [s; o] = [sum xd; sum d]
        // per axis by Cramer's rule
        let oracle = |s: &[f64], d: &[f64]| {
            let n = s.len() as f64;
            let sx: f64 = s.iter().sum();
            let sxx: f64 = s.iter().map(|v| v * v).sum();
            let sd: f64 = d.iter().sum();
            let sxd: f64 = s.iter().zip(d).map(|(a, b)| a * b).sum();
            let det = sxx * n - sx * sx;
            let scale = (sxd * n - sx * sd) / det;
            let offset = (sxx * sd - sx * sxd) / det;
            let res: f64 = s
                .iter()
                .zip(d)
                .map(|(a, b)| (scale * a + offset - b).powi(2))
                .sum();
            (scale, offset, res)
        };
        let xs: Vec<f64> = src.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = src.iter().map(|p| p.1).collect();
        let xd: Vec<f64> = dst.iter().map(|p| p.0).collect();
        let yd: Vec<f64> = dst.iter().map(|p| p.1).collect();
        let (sx, ox, rx) = oracle(&xs, &xd);
        let (sy, oy, ry) = oracle(&ys, &yd);
        assert!((fit.transform.scale_x - sx).abs() < 1e-9);
        assert!((fit.transform.offset_x - ox).abs() < 1e-9);
        assert!((fit.transform.scale_y - sy).abs() < 1e-9);
        assert!((fit.transform.offset_y - oy).abs() < 1e-9);
        assert!((fit.residual - (rx + ry)).abs() < 1e-9);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(fit_affine(&[(1.0, 1.0)], &[(1.0, 1.0)]).is_err());
        let same_x = [(5.0, 0.0), (5.0, 10.0)];
        assert!(matches!(
            fit_affine(&same_x, &same_x),
            Err(GeometryError::DegenerateAffine(_))
        ));
        let flipped: Vec<_> = CORNERS.iter().map(|&(x, y)| (-x + 200.0, y)).collect();
        assert!(fit_affine(&CORNERS, &flipped).is_err());
    }
}
