//! Robust automatic threshold selection: the gradient-weighted mean level.

use crate::raster::{BinaryMask, GrayPlane};

use super::{Degeneracy, Thresholded};

/// Gradient magnitude from central differences, borders replicated.
pub fn gradient_magnitude(plane: &GrayPlane) -> Vec<f64> {
    let (w, h) = (plane.width(), plane.height());
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        let up = y.saturating_sub(1);
        let down = (y + 1).min(h - 1);
        for x in 0..w {
            let left = x.saturating_sub(1);
            let right = (x + 1).min(w - 1);
            let gx = (plane.get(right, y) - plane.get(left, y)) / 2.0;
            let gy = (plane.get(x, down) - plane.get(x, up)) / 2.0;
            out.push(gx.hypot(gy));
        }
    }
    out
}

/// Threshold `T = sum(w v) / sum(w)` with `w` the gradient magnitude. The
/// mask marks samples strictly above `T`.
pub fn rats_threshold(plane: &GrayPlane) -> Thresholded {
    let weights = gradient_magnitude(plane);
    let (mut num, mut den) = (0.0, 0.0);
    for (&w, &v) in weights.iter().zip(plane.values()) {
        num += w * v;
        den += w;
    }
    let (w, h) = (plane.width(), plane.height());
    if den <= 0.0 {
        return Thresholded {
            threshold: 0.0,
            mask: BinaryMask::empty(w, h),
            degenerate: Some(Degeneracy::ZeroGradient),
        };
    }
    let t = num / den;
    Thresholded {
        threshold: t,
        mask: BinaryMask::new(w, h, plane.values().iter().map(|&v| v > t).collect())
            .expect("plane dimensions are valid"),
        degenerate: None,
    }
}
