//! Reading-order connected-component labeling.

use std::collections::VecDeque;

use crate::raster::BinaryMask;

use super::{MaskError, MaskResult};

/// Component-labelled mask. Label 0 is background; components are numbered
/// 1..=N left to right (smallest column first, then smallest row).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SegMask {
    width: usize,
    height: usize,
    labels: Vec<u32>,
    component_count: u32,
}

impl SegMask {
    /// Build from raw labels, checking that they form exactly the set
    /// {0} ∪ {1..=N} and that each label is one 8-connected component
    /// numbered in reading order.
    pub fn from_labels(width: usize, height: usize, labels: Vec<u32>) -> MaskResult<Self> {
        if width == 0 || height == 0 || labels.len() != width * height {
            return Err(MaskError::Corrupt(format!(
                "{} labels for a {width}x{height} mask",
                labels.len()
            )));
        }
        let max = labels.iter().copied().max().unwrap_or(0);
        if max as usize > labels.len() {
            return Err(MaskError::Corrupt(format!(
                "label {max} exceeds the pixel count {}",
                labels.len()
            )));
        }
        let mut present = vec![false; max as usize + 1];
        for &l in &labels {
            present[l as usize] = true;
        }
        if let Some(gap) = present.iter().skip(1).position(|&p| !p) {
            return Err(MaskError::Corrupt(format!(
                "label {} missing below maximum label {max}",
                gap + 1
            )));
        }
        let mask = BinaryMask::new(width, height, labels.iter().map(|&l| l != 0).collect())
            .expect("dimensions checked");
        let canonical = label_components(&mask);
        if canonical.labels != labels {
            return Err(MaskError::Corrupt(
                "labels are not 8-connected components in reading order".into(),
            ));
        }
        Ok(canonical)
    }

    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            labels: vec![0; width * height],
            component_count: 0,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn label(&self, x: usize, y: usize) -> u32 {
        self.labels[y * self.width + x]
    }

    pub fn component_count(&self) -> u32 {
        self.component_count
    }

    pub fn to_binary(&self) -> BinaryMask {
        BinaryMask::new(self.width, self.height, self.labels.iter().map(|&l| l != 0).collect())
            .expect("valid dimensions")
    }
}

struct Component {
    pixels: Vec<usize>,
    min_col: usize,
    min_row: usize,
    /// First pixel in column-major order; separates components that share
    /// both minima.
    lead: (usize, usize),
}

/// Label 8-connected foreground components in reading order.
pub fn label_components(mask: &BinaryMask) -> SegMask {
    let (w, h) = (mask.width(), mask.height());
    let bits = mask.bits();
    let mut seen = vec![false; bits.len()];
    let mut components: Vec<Component> = Vec::new();
    let mut queue = VecDeque::new();

    for start in 0..bits.len() {
        if !bits[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        let mut comp = Component {
            pixels: Vec::new(),
            min_col: usize::MAX,
            min_row: usize::MAX,
            lead: (usize::MAX, usize::MAX),
        };
        while let Some(i) = queue.pop_front() {
            let (x, y) = (i % w, i / w);
            comp.pixels.push(i);
            comp.min_col = comp.min_col.min(x);
            comp.min_row = comp.min_row.min(y);
            comp.lead = comp.lead.min((x, y));
            for ny in y.saturating_sub(1)..=(y + 1).min(h - 1) {
                for nx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                    let j = ny * w + nx;
                    if bits[j] && !seen[j] {
                        seen[j] = true;
                        queue.push_back(j);
                    }
                }
            }
        }
        components.push(comp);
    }

    components.sort_by_key(|c| (c.min_col, c.min_row, c.lead));
    let mut labels = vec![0u32; bits.len()];
    for (k, comp) in components.iter().enumerate() {
        for &i in &comp.pixels {
            labels[i] = k as u32 + 1;
        }
    }
    SegMask {
        width: w,
        height: h,
        labels,
        component_count: components.len() as u32,
    }
}
