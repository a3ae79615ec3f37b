use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::bank::{MethodDescriptor, Polarity};
use crate::mask::EditOp;

use super::{StoreError, StoreResult};

pub const RECORD_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnnotationStatus {
    #[default]
    Untagged,
    Skipped,
    Tagged,
}

impl fmt::Display for AnnotationStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AnnotationStatus::Untagged => "untagged",
            AnnotationStatus::Skipped => "skipped",
            AnnotationStatus::Tagged => "tagged",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub version: u32,
    pub image_id: String,
    pub status: AnnotationStatus,
    pub polarity: Polarity,
    /// 0 means none of the candidates was acceptable.
    pub selected_candidate: u8,
    pub method: Option<MethodDescriptor>,
    pub edits: Vec<EditOp>,
    /// Relative to the annotation directory.
    pub mask_path: Option<String>,
    pub updated_at: Option<DateTime<Utc>>,
}

impl AnnotationRecord {
    pub fn untagged(image_id: impl Into<String>) -> Self {
        Self {
            version: RECORD_VERSION,
            image_id: image_id.into(),
            status: AnnotationStatus::Untagged,
            polarity: Polarity::Normal,
            selected_candidate: 0,
            method: None,
            edits: Vec::new(),
            mask_path: None,
            updated_at: None,
        }
    }

    /// Checks that hold for any record a commit would produce.
    pub fn check_committable(&self) -> StoreResult<()> {
        if self.selected_candidate as usize > crate::bank::BANK_SIZE {
            return Err(StoreError::CandidateOutOfRange(self.selected_candidate as usize));
        }
        if self.selected_candidate == 0 && self.edits.is_empty() {
            return Err(StoreError::InvariantViolation(
                "candidate 0 with no edits generates no mask".into(),
            ));
        }
        if self.selected_candidate == 0 && self.method.is_some() {
            return Err(StoreError::InvariantViolation(
                "candidate 0 cannot carry a method descriptor".into(),
            ));
        }
        crate::mask::check_sequence(&self.edits)
            .map_err(|e| StoreError::InvariantViolation(e.to_string()))
    }

    /// Invariants every stored record satisfies.
    pub fn check(&self) -> StoreResult<()> {
        if self.status == AnnotationStatus::Tagged {
            if self.mask_path.is_none() {
                return Err(StoreError::InvariantViolation(
                    "tagged record without a mask".into(),
                ));
            }
            self.check_committable()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Next,
    Prev,
}

/// Position within a manifest, always in `0..len`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SessionCursor {
    position: usize,
    len: usize,
}

impl SessionCursor {
    pub fn new(len: usize) -> StoreResult<Self> {
        if len == 0 {
            return Err(StoreError::InvariantViolation("empty dataset".into()));
        }
        Ok(Self { position: 0, len })
    }

    pub fn at(position: usize, len: usize) -> StoreResult<Self> {
        if position >= len {
            return Err(StoreError::InvariantViolation(format!(
                "position {position} outside 0..{len}"
            )));
        }
        Ok(Self { position, len })
    }

    pub fn position(&self) -> usize {
        self.position
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Move one step, clamped at both ends.
    pub fn advance(self, direction: Direction) -> Self {
        let position = match direction {
            Direction::Next => (self.position + 1).min(self.len - 1),
            Direction::Prev => self.position.saturating_sub(1),
        };
        Self { position, ..self }
    }
}
