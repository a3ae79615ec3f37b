//! Polygon patches and even-odd scanline rasterization.

use serde::{Deserialize, Serialize};

use crate::raster::BinaryMask;

use super::{MaskError, MaskResult};

/// Closed polygon in image coordinates; pixel `(x, y)` has its centre at
/// `(x + 0.5, y + 0.5)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<[f64; 2]>", into = "Vec<[f64; 2]>")]
pub struct Polygon {
    vertices: Vec<[f64; 2]>,
}

impl Polygon {
    pub fn new(vertices: Vec<[f64; 2]>) -> MaskResult<Self> {
        if vertices.len() < 3 {
            return Err(MaskError::DegeneratePolygon(format!(
                "{} vertices, need at least 3",
                vertices.len()
            )));
        }
        if vertices.iter().flatten().any(|c| !c.is_finite()) {
            return Err(MaskError::DegeneratePolygon("non-finite coordinate".into()));
        }
        if !has_non_collinear_triple(&vertices) {
            return Err(MaskError::DegeneratePolygon("all vertices are collinear".into()));
        }
        Ok(Self { vertices })
    }

    /// Axis-aligned rectangle with corners `(x0, y0)` and `(x1, y1)`.
    pub fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> MaskResult<Self> {
        Self::new(vec![[x0, y0], [x1, y0], [x1, y1], [x0, y1]])
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    fn edges(&self) -> impl Iterator<Item = ([f64; 2], [f64; 2])> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }
}

impl TryFrom<Vec<[f64; 2]>> for Polygon {
    type Error = MaskError;

    fn try_from(v: Vec<[f64; 2]>) -> Result<Self, Self::Error> {
        Polygon::new(v)
    }
}

impl From<Polygon> for Vec<[f64; 2]> {
    fn from(p: Polygon) -> Self {
        p.vertices
    }
}

fn has_non_collinear_triple(v: &[[f64; 2]]) -> bool {
    let p0 = v[0];
    let Some(p1) = v.iter().copied().find(|p| *p != p0) else {
        return false;
    };
    v.iter().any(|p| {
        let cross = (p1[0] - p0[0]) * (p[1] - p0[1]) - (p1[1] - p0[1]) * (p[0] - p0[0]);
        cross != 0.0
    })
}

/// Fill `poly` into a `width` x `height` mask by the even-odd rule, sampling
/// at pixel centres. Parts outside the raster are clipped.
pub fn rasterize(poly: &Polygon, width: usize, height: usize) -> BinaryMask {
    let mut mask = BinaryMask::empty(width, height);
    let mut crossings: Vec<f64> = Vec::with_capacity(poly.vertices.len());
    for y in 0..height {
        let cy = y as f64 + 0.5;
        crossings.clear();
        for (a, b) in poly.edges() {
            // half-open in y so shared vertices count once
            if (a[1] > cy) != (b[1] > cy) {
                crossings.push((b[0] - a[0]) * (cy - a[1]) / (b[1] - a[1]) + a[0]);
            }
        }
        crossings.sort_by(f64::total_cmp);
        for span in crossings.chunks_exact(2) {
            let (lo, hi) = (span[0], span[1]);
            // centre cx is inside when lo <= cx < hi
            let first = ((lo - 0.5).floor().max(0.0) as usize).min(width);
            let last = ((hi - 0.5).ceil() + 1.0).clamp(0.0, width as f64) as usize;
            for x in first..last {
                let cx = x as f64 + 0.5;
                if lo <= cx && cx < hi {
                    mask.set(x, y, true);
                }
            }
        }
    }
    mask
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EditKind {
    Add,
    Delete,
}

/// One ADD PATCH / DELETE PATCH step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditOp {
    pub kind: EditKind,
    pub polygon: Polygon,
    pub sequence: u32,
}

/// Add ORs the rasterized polygon into the mask; delete clears it.
pub fn apply_patch(mask: &BinaryMask, op: &EditOp) -> BinaryMask {
    let patch = rasterize(&op.polygon, mask.width(), mask.height());
    let out = match op.kind {
        EditKind::Add => mask.union(&patch),
        EditKind::Delete => mask.difference(&patch),
    };
    out.expect("patch rasterized at mask dimensions")
}

/// Apply a sequence of edits in order.
pub fn apply_edits<'a>(mask: &BinaryMask, ops: impl IntoIterator<Item = &'a EditOp>) -> BinaryMask {
    ops.into_iter().fold(mask.clone(), |m, op| apply_patch(&m, op))
}

/// Sequence numbers must start at 1 or above and strictly increase.
pub fn check_sequence(ops: &[EditOp]) -> MaskResult<()> {
    let mut last = 0;
    for op in ops {
        if op.sequence <= last {
            return Err(MaskError::EditSequence {
                previous: last,
                next: op.sequence,
            });
        }
        last = op.sequence;
    }
    Ok(())
}
