//! Global Otsu thresholding over a 256-bin histogram.

use crate::raster::{BinaryMask, GrayPlane};

use super::{Degeneracy, Thresholded};

pub const BINS: usize = 256;

/// Rescale plane values affinely onto 0..=255 and round to integer bins.
///
/// The minimum maps to bin 0 and the maximum to bin 255. A constant plane
/// maps every sample to bin 0.
pub fn quantize(plane: &GrayPlane) -> Vec<u8> {
    let values = plane.values();
    let (min, max) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if max <= min {
        return vec![0; values.len()];
    }
    let scale = 255.0 / (max - min);
    values
        .iter()
        .map(|&v| ((v - min) * scale).round().clamp(0.0, 255.0) as u8)
        .collect()
}

pub fn histogram(bins: &[u8]) -> [u64; BINS] {
    let mut hist = [0u64; BINS];
    for &b in bins {
        hist[b as usize] += 1;
    }
    hist
}

/// Threshold bin maximising between-class variance, lowest bin on ties.
///
/// Class 0 holds bins `<= t`, class 1 bins `> t`. Returns `None` when no
/// threshold splits the histogram into two non-empty classes.
pub fn otsu_bin(hist: &[u64; BINS]) -> Option<u8> {
    let total: u64 = hist.iter().sum();
    let total_sum: u64 = hist.iter().enumerate().map(|(i, &c)| i as u64 * c).sum();

    let mut n0 = 0u64;
    let mut s0 = 0u64;
    let mut best: Option<(u8, Score)> = None;
    for (t, &count) in hist.iter().enumerate() {
        n0 += count;
        s0 += t as u64 * count;
        let n1 = total - n0;
        if n0 == 0 || n1 == 0 {
            continue;
        }
        let s1 = total_sum - s0;
        // w0 w1 (mu0 - mu1)^2 scaled by N^2 equals (s0 n1 - s1 n0)^2 / (n0 n1)
        let diff = (s0 as i128 * n1 as i128 - s1 as i128 * n0 as i128).unsigned_abs();
        let score = Score {
            num: diff.checked_mul(diff),
            den: n0 as u128 * n1 as u128,
            approx: (diff as f64).powi(2) / (n0 as f64 * n1 as f64),
        };
        match &best {
            Some((_, b)) if !score.greater_than(b) => {}
            _ => best = Some((t as u8, score)),
        }
    }
    best.map(|(t, _)| t)
}

/// Between-class variance as an exact fraction where it fits in 128 bits.
struct Score {
    num: Option<u128>,
    den: u128,
    approx: f64,
}

impl Score {
    fn greater_than(&self, other: &Score) -> bool {
        if let (Some(a), Some(c)) = (self.num, other.num) {
            if let (Some(lhs), Some(rhs)) = (a.checked_mul(other.den), c.checked_mul(self.den)) {
                return lhs > rhs;
            }
        }
        self.approx > other.approx
    }
}

/// Otsu threshold of a plane. The mask marks samples whose quantised value
/// lies above the threshold bin.
pub fn otsu_threshold(plane: &GrayPlane) -> Thresholded {
    let bins = quantize(plane);
    let (w, h) = (plane.width(), plane.height());
    match otsu_bin(&histogram(&bins)) {
        Some(t) => Thresholded {
            threshold: t as f64,
            mask: BinaryMask::new(w, h, bins.iter().map(|&b| b > t).collect())
                .expect("plane dimensions are valid"),
            degenerate: None,
        },
        None => Thresholded {
            threshold: 0.0,
            mask: BinaryMask::empty(w, h),
            degenerate: Some(Degeneracy::ConstantPlane),
        },
    }
}
