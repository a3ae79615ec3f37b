//! Mask refinement and persistence: polygon patches, reading-order
//! component labels, overlays, and the on-disk mask format.

mod io;
mod label;
mod overlay;
mod polygon;

use std::path::Path;

use thiserror::Error;

pub use io::{
    encode_mask_png, load_mask, load_mask_with_meta, save_mask, sidecar_path, MaskMeta, MAX_COMPONENTS,
    SIDECAR_VERSION,
};
pub use label::{label_components, SegMask};
pub use overlay::{component_color, overlay, COMPONENT_COLORS};
pub use polygon::{apply_edits, apply_patch, check_sequence, rasterize, EditKind, EditOp, Polygon};

#[derive(Debug, Error)]
pub enum MaskError {
    #[error("degenerate polygon: {0}")]
    DegeneratePolygon(String),

    #[error("dimension mismatch: expected {expected:?}, got {actual:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },

    #[error("edit sequence numbers must increase: {next} follows {previous}")]
    EditSequence { previous: u32, next: u32 },

    #[error("corrupt mask file: {0}")]
    Corrupt(String),

    #[error("mask has {0} components; at most 255 can be stored")]
    TooManyComponents(u32),

    #[error("failed to encode mask: {0}")]
    Encode(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl MaskError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        MaskError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

pub type MaskResult<T> = Result<T, MaskError>;
