//! Annotation sessions over a dataset manifest.
//!
//! Layout of an annotation directory:
//!
//! ```text
//! <dir>/.lock               writer lock (pid inside)
//! <dir>/index.json          status summary, rebuilt on open
//! <dir>/<id>.ann.json       committed record
//! <dir>/<id>.png            component-labelled mask
//! <dir>/<id>.mask.json      mask sidecar
//! ```
//!
//! Candidate selection and polygon edits accumulate in an in-memory draft
//! per image. Only [`AnnotationStore::commit`] and [`AnnotationStore::skip`]
//! touch disk, so abandoning an edit leaves the last committed record.

mod manifest;
mod record;

use std::collections::HashMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::Utc;
use serde::Serialize;
use thiserror::Error;

use crate::bank::{build_bank, CandidateBank, MethodDescriptor, Polarity, BANK_SIZE};
use crate::fsutil::write_atomic;
use crate::mask::{
    apply_patch, label_components, load_mask_with_meta, save_mask, EditKind, EditOp, MaskError,
    MaskMeta, Polygon, SegMask,
};
use crate::raster::{BinaryMask, RasterError, WordImage};

pub use manifest::{load_manifest, parse_manifest, valid_image_id, DatasetManifest, ManifestEntry};
pub use record::{AnnotationRecord, AnnotationStatus, Direction, SessionCursor, RECORD_VERSION};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("manifest line {line}: {message}")]
    ManifestParse { line: usize, message: String },

    #[error("image `{image_id}` not found at {path}")]
    MissingImage { image_id: String, path: String },

    #[error("unknown image `{0}`")]
    UnknownImage(String),

    #[error("candidate {0} out of range 0..=16")]
    CandidateOutOfRange(usize),

    #[error("invariant violation: {0}")]
    InvariantViolation(String),

    #[error("annotation directory is locked by another session ({0})")]
    LockHeld(String),

    #[error("store was opened read-only")]
    ReadOnly,

    #[error("storage error at {path}: {source}")]
    Storage {
        path: String,
        #[source]
        source: io::Error,
    },

    #[error("corrupt record {path}: {message}")]
    CorruptRecord { path: String, message: String },

    #[error(transparent)]
    Raster(#[from] RasterError),

    #[error(transparent)]
    Mask(#[from] MaskError),
}

impl StoreError {
    pub(crate) fn storage(path: &Path, source: io::Error) -> Self {
        StoreError::Storage {
            path: path.display().to_string(),
            source,
        }
    }
}

pub type StoreResult<T> = Result<T, StoreError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpenMode {
    ReadWrite,
    ReadOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct StatusCounts {
    pub untagged: usize,
    pub skipped: usize,
    pub tagged: usize,
}

impl StatusCounts {
    pub fn total(&self) -> usize {
        self.untagged + self.skipped + self.tagged
    }
}

/// Uncommitted selection and edits for one image.
#[derive(Debug, Clone, PartialEq)]
pub struct Draft {
    pub polarity: Polarity,
    pub selected_candidate: u8,
    pub method: Option<MethodDescriptor>,
    pub edits: Vec<EditOp>,
    /// Mask after applying `edits` to the selected candidate.
    pub mask: BinaryMask,
}

struct LockGuard {
    path: PathBuf,
}

impl LockGuard {
    fn acquire(dir: &Path) -> StoreResult<Self> {
        let path = dir.join(".lock");
        match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(Self { path })
            }
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => {
                Err(StoreError::LockHeld(path.display().to_string()))
            }
            Err(e) => Err(StoreError::storage(&path, e)),
        }
    }
}

impl Drop for LockGuard {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

const BANK_CACHE_SIZE: usize = 16;

pub struct AnnotationStore {
    manifest: DatasetManifest,
    dir: PathBuf,
    seed: u64,
    records: HashMap<String, AnnotationRecord>,
    drafts: HashMap<String, Draft>,
    banks: HashMap<(String, Polarity), Arc<CandidateBank>>,
    lock: Option<LockGuard>,
}

impl AnnotationStore {
    /// Open the annotation directory for `manifest`, rebuilding the index
    /// from the record sidecars found there.
    pub fn open(
        manifest: DatasetManifest,
        dir: impl Into<PathBuf>,
        mode: OpenMode,
        seed: u64,
    ) -> StoreResult<Self> {
        let dir = dir.into();
        let lock = match mode {
            OpenMode::ReadWrite => {
                fs::create_dir_all(&dir).map_err(|e| StoreError::storage(&dir, e))?;
                Some(LockGuard::acquire(&dir)?)
            }
            OpenMode::ReadOnly => None,
        };
        let mut records = HashMap::new();
        for entry in &manifest.entries {
            let path = record_path(&dir, &entry.image_id);
            if !path.exists() {
                continue;
            }
            let bytes = fs::read(&path).map_err(|e| StoreError::storage(&path, e))?;
            let record: AnnotationRecord =
                serde_json::from_slice(&bytes).map_err(|e| StoreError::CorruptRecord {
                    path: path.display().to_string(),
                    message: e.to_string(),
                })?;
            if record.image_id != entry.image_id {
                return Err(StoreError::CorruptRecord {
                    path: path.display().to_string(),
                    message: format!("record names `{}`", record.image_id),
                });
            }
            record.check().map_err(|e| StoreError::CorruptRecord {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
            records.insert(entry.image_id.clone(), record);
        }
        let store = Self {
            manifest,
            dir,
            seed,
            records,
            drafts: HashMap::new(),
            banks: HashMap::new(),
            lock,
        };
        if store.lock.is_some() {
            store.write_index()?;
        }
        Ok(store)
    }

    pub fn manifest(&self) -> &DatasetManifest {
        &self.manifest
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn is_read_only(&self) -> bool {
        self.lock.is_none()
    }

    fn entry(&self, image_id: &str) -> StoreResult<&ManifestEntry> {
        self.manifest
            .entry(image_id)
            .ok_or_else(|| StoreError::UnknownImage(image_id.to_string()))
    }

    fn require_writable(&self) -> StoreResult<()> {
        if self.lock.is_none() {
            return Err(StoreError::ReadOnly);
        }
        Ok(())
    }

    pub fn status(&self, image_id: &str) -> StoreResult<AnnotationStatus> {
        self.entry(image_id)?;
        Ok(self.records.get(image_id).map(|r| r.status).unwrap_or_default())
    }

    /// `(image_id, status)` in manifest order.
    pub fn list(&self) -> Vec<(String, AnnotationStatus)> {
        self.manifest
            .entries
            .iter()
            .map(|e| {
                let status = self.records.get(&e.image_id).map(|r| r.status).unwrap_or_default();
                (e.image_id.clone(), status)
            })
            .collect()
    }

    pub fn counts(&self) -> StatusCounts {
        let mut counts = StatusCounts::default();
        for (_, status) in self.list() {
            match status {
                AnnotationStatus::Untagged => counts.untagged += 1,
                AnnotationStatus::Skipped => counts.skipped += 1,
                AnnotationStatus::Tagged => counts.tagged += 1,
            }
        }
        counts
    }

    pub fn load_image(&self, image_id: &str) -> StoreResult<WordImage> {
        let entry = self.entry(image_id)?;
        Ok(WordImage::open(image_id, self.manifest.resolve(entry))?)
    }

    /// Candidate bank for an image, cached per polarity.
    pub fn bank(&mut self, image_id: &str, polarity: Polarity) -> StoreResult<Arc<CandidateBank>> {
        let key = (image_id.to_string(), polarity);
        if let Some(bank) = self.banks.get(&key) {
            return Ok(bank.clone());
        }
        let img = self.load_image(image_id)?;
        let bank = Arc::new(build_bank(&img, polarity, self.seed));
        if self.banks.len() >= BANK_CACHE_SIZE {
            self.banks.clear();
        }
        self.banks.insert(key, bank.clone());
        Ok(bank)
    }

    pub fn draft(&self, image_id: &str) -> Option<&Draft> {
        self.drafts.get(image_id)
    }

    pub fn discard_draft(&mut self, image_id: &str) -> bool {
        self.drafts.remove(image_id).is_some()
    }

    /// Pick candidate `candidate` (0 = none) as the base mask, dropping any
    /// edits of the current draft.
    pub fn select(&mut self, image_id: &str, candidate: usize, polarity: Polarity) -> StoreResult<&Draft> {
        self.require_writable()?;
        self.entry(image_id)?;
        if candidate > BANK_SIZE {
            return Err(StoreError::CandidateOutOfRange(candidate));
        }
        let bank = self.bank(image_id, polarity)?;
        let (mask, method) = match bank.get(candidate) {
            Some(c) => (c.mask.clone(), Some(c.method.clone())),
            None => (BinaryMask::empty(bank.width, bank.height), None),
        };
        let draft = Draft {
            polarity,
            selected_candidate: candidate as u8,
            method,
            edits: Vec::new(),
            mask,
        };
        self.drafts.insert(image_id.to_string(), draft);
        Ok(&self.drafts[image_id])
    }

    /// Apply one polygon patch to the working mask. Without a draft, editing
    /// continues from the committed mask (or an empty mask, candidate 0).
    pub fn patch(&mut self, image_id: &str, kind: EditKind, polygon: Polygon) -> StoreResult<&Draft> {
        self.require_writable()?;
        self.entry(image_id)?;
        if !self.drafts.contains_key(image_id) {
            let draft = self.draft_from_committed(image_id)?;
            self.drafts.insert(image_id.to_string(), draft);
        }
        let draft = self.drafts.get_mut(image_id).expect("inserted above");
        let op = EditOp {
            kind,
            polygon,
            sequence: draft.edits.last().map_or(1, |e| e.sequence + 1),
        };
        draft.mask = apply_patch(&draft.mask, &op);
        draft.edits.push(op);
        Ok(draft)
    }

    fn draft_from_committed(&mut self, image_id: &str) -> StoreResult<Draft> {
        let (record, mask) = self.reload_annotation(image_id)?;
        if let Some(mask) = mask {
            return Ok(Draft {
                polarity: record.polarity,
                selected_candidate: record.selected_candidate,
                method: record.method,
                edits: record.edits,
                mask: mask.to_binary(),
            });
        }
        let (w, h) = self.image_dimensions(image_id)?;
        Ok(Draft {
            polarity: record.polarity,
            selected_candidate: 0,
            method: None,
            edits: Vec::new(),
            mask: BinaryMask::empty(w, h),
        })
    }

    fn image_dimensions(&self, image_id: &str) -> StoreResult<(usize, usize)> {
        let entry = self.entry(image_id)?;
        let path = self.manifest.resolve(entry);
        let (w, h) = image::image_dimensions(&path).map_err(|source| RasterError::Decode {
            path: path.display().to_string(),
            source,
        })?;
        Ok((w as usize, h as usize))
    }

    /// Mask shown for an image: the draft if one exists, else the committed mask.
    pub fn current_mask(&self, image_id: &str) -> StoreResult<Option<SegMask>> {
        if let Some(d) = self.drafts.get(image_id) {
            return Ok(Some(label_components(&d.mask)));
        }
        Ok(self.reload_annotation(image_id)?.1)
    }

    /// Commit the draft for `image_id`.
    pub fn commit(&mut self, image_id: &str) -> StoreResult<AnnotationRecord> {
        self.require_writable()?;
        self.entry(image_id)?;
        let draft = self
            .drafts
            .get(image_id)
            .ok_or_else(|| StoreError::InvariantViolation("nothing selected or edited to commit".into()))?;
        let record = AnnotationRecord {
            polarity: draft.polarity,
            selected_candidate: draft.selected_candidate,
            method: draft.method.clone(),
            edits: draft.edits.clone(),
            ..AnnotationRecord::untagged(image_id)
        };
        let mask = label_components(&draft.mask);
        let committed = self.commit_annotation(record, &mask)?;
        self.drafts.remove(image_id);
        Ok(committed)
    }

    /// Persist `mask` and mark the record tagged.
    pub fn commit_annotation(&mut self, mut record: AnnotationRecord, mask: &SegMask) -> StoreResult<AnnotationRecord> {
        self.require_writable()?;
        self.entry(&record.image_id)?;
        record.check_committable()?;
        let dims = self.image_dimensions(&record.image_id)?;
        if dims != (mask.width(), mask.height()) {
            return Err(StoreError::InvariantViolation(format!(
                "mask is {}x{} but image is {}x{}",
                mask.width(),
                mask.height(),
                dims.0,
                dims.1
            )));
        }
        let mask_name = format!("{}.png", record.image_id);
        let meta = MaskMeta {
            polarity: record.polarity,
            method: record.method.clone(),
            edits: record.edits.clone(),
        };
        save_mask(mask, &meta, self.dir.join(&mask_name))?;
        record.version = RECORD_VERSION;
        record.status = AnnotationStatus::Tagged;
        record.mask_path = Some(mask_name);
        record.updated_at = Some(Utc::now());
        self.write_record(&record)?;
        Ok(record)
    }

    /// Mark an untagged image as skipped. Tagged images stay tagged.
    pub fn skip(&mut self, image_id: &str) -> StoreResult<AnnotationRecord> {
        self.require_writable()?;
        self.entry(image_id)?;
        let mut record = self
            .records
            .get(image_id)
            .cloned()
            .unwrap_or_else(|| AnnotationRecord::untagged(image_id));
        if record.status == AnnotationStatus::Untagged {
            record.status = AnnotationStatus::Skipped;
            record.updated_at = Some(Utc::now());
            self.write_record(&record)?;
        }
        Ok(record)
    }

    /// Latest committed record, with its mask when tagged.
    pub fn reload_annotation(&self, image_id: &str) -> StoreResult<(AnnotationRecord, Option<SegMask>)> {
        self.entry(image_id)?;
        let Some(record) = self.records.get(image_id) else {
            return Ok((AnnotationRecord::untagged(image_id), None));
        };
        let mask = match (&record.status, &record.mask_path) {
            (AnnotationStatus::Tagged, Some(rel)) => Some(load_mask_with_meta(self.dir.join(rel))?.0),
            _ => None,
        };
        Ok((record.clone(), mask))
    }

    fn write_record(&mut self, record: &AnnotationRecord) -> StoreResult<()> {
        let path = record_path(&self.dir, &record.image_id);
        let json = serde_json::to_vec_pretty(record).expect("record serializes");
        write_atomic(&path, &json).map_err(|e| StoreError::storage(&path, e))?;
        self.records.insert(record.image_id.clone(), record.clone());
        self.write_index()
    }

    fn write_index(&self) -> StoreResult<()> {
        #[derive(Serialize)]
        struct IndexRow<'a> {
            image_id: &'a str,
            status: AnnotationStatus,
        }
        #[derive(Serialize)]
        struct Index<'a> {
            version: u32,
            dataset: &'a str,
            counts: StatusCounts,
            images: Vec<IndexRow<'a>>,
        }
        let images = self
            .manifest
            .entries
            .iter()
            .map(|e| IndexRow {
                image_id: &e.image_id,
                status: self.records.get(&e.image_id).map(|r| r.status).unwrap_or_default(),
            })
            .collect();
        let index = Index {
            version: 1,
            dataset: &self.manifest.name,
            counts: self.counts(),
            images,
        };
        let path = self.dir.join("index.json");
        let json = serde_json::to_vec_pretty(&index).expect("index serializes");
        write_atomic(&path, &json).map_err(|e| StoreError::storage(&path, e))
    }
}

pub fn record_path(dir: &Path, image_id: &str) -> PathBuf {
    dir.join(format!("{image_id}.ann.json"))
}

/// Path of the committed mask for `image_id` inside an annotation directory.
pub fn mask_path(dir: &Path, image_id: &str) -> PathBuf {
    dir.join(format!("{image_id}.png"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mask::{load_mask, rasterize};

    struct Fixture {
        _tmp: tempfile::TempDir,
        manifest: DatasetManifest,
        ann: PathBuf,
    }

    fn fixture(n: usize) -> Fixture {
        let tmp = tempfile::tempdir().unwrap();
        let mut text = String::new();
        for i in 0..n {
            let img = WordImage::new(
                format!("w{i}"),
                12,
                8,
                (0..96)
                    .map(|k| if (k % 12) > 3 && (k % 12) < 8 && k / 12 > 1 { [10, 10, 10] } else { [240, 240, 240] })
                    .collect(),
            )
            .unwrap();
            fs::write(tmp.path().join(format!("w{i}.png")), img.to_png_bytes()).unwrap();
            text.push_str(&format!("w{i}\tw{i}.png\tWORD {i}\n"));
        }
        let mpath = tmp.path().join("set.tsv");
        fs::write(&mpath, text).unwrap();
        let manifest = load_manifest(&mpath).unwrap();
        let ann = tmp.path().join("ann");
        Fixture {
            _tmp: tmp,
            manifest,
            ann,
        }
    }

    fn open(f: &Fixture) -> AnnotationStore {
        AnnotationStore::open(f.manifest.clone(), &f.ann, OpenMode::ReadWrite, 0).unwrap()
    }

    #[test]
    fn untagged_reload_has_no_mask() {
        let f = fixture(2);
        let store = open(&f);
        let (rec, mask) = store.reload_annotation("w1").unwrap();
        assert_eq!(rec.status, AnnotationStatus::Untagged);
        assert!(mask.is_none());
        assert!(matches!(store.reload_annotation("nope"), Err(StoreError::UnknownImage(_))));
    }

    #[test]
    fn select_commit_reload_round_trip() {
        let f = fixture(2);
        let mut store = open(&f);
        store.select("w0", 1, Polarity::Normal).unwrap();
        let committed = store.commit("w0").unwrap();
        assert_eq!(committed.status, AnnotationStatus::Tagged);
        assert_eq!(committed.selected_candidate, 1);
        assert_eq!(committed.method.as_ref().unwrap().to_string(), "otsu:R:t=0");
        let (rec, mask) = store.reload_annotation("w0").unwrap();
        assert_eq!(rec, committed);
        let mask = mask.unwrap();
        assert_eq!(mask.component_count(), 1);
        assert_eq!(mask.to_binary().count_foreground(), 4 * 6);
        drop(store);

        let reopened = open(&f);
        assert_eq!(reopened.reload_annotation("w0").unwrap().0, committed);
        assert_eq!(reopened.counts(), StatusCounts { untagged: 1, skipped: 0, tagged: 1 });
    }

    #[test]
    fn candidate_zero_without_edits_is_rejected() {
        let f = fixture(1);
        let mut store = open(&f);
        store.select("w0", 0, Polarity::Normal).unwrap();
        assert!(matches!(store.commit("w0"), Err(StoreError::InvariantViolation(_))));
        assert!(matches!(
            store.commit_annotation(AnnotationRecord::untagged("w0"), &SegMask::empty(12, 8)),
            Err(StoreError::InvariantViolation(_))
        ));
        assert!(matches!(
            store.select("w0", 17, Polarity::Normal),
            Err(StoreError::CandidateOutOfRange(17))
        ));
    }

    #[test]
    fn candidate_zero_with_patch_commits() {
        let f = fixture(1);
        let mut store = open(&f);
        store.select("w0", 0, Polarity::Normal).unwrap();
        let poly = Polygon::rect(1.0, 1.0, 5.0, 4.0).unwrap();
        store.patch("w0", EditKind::Add, poly.clone()).unwrap();
        let rec = store.commit("w0").unwrap();
        assert_eq!(rec.edits.len(), 1);
        assert_eq!(rec.edits[0].sequence, 1);
        let mask = load_mask(f.ann.join("w0.png")).unwrap();
        assert_eq!(mask.to_binary(), rasterize(&poly, 12, 8));
    }

    #[test]
    fn patch_continues_from_committed_mask() {
        let f = fixture(1);
        let mut store = open(&f);
        store.select("w0", 1, Polarity::Normal).unwrap();
        store.patch("w0", EditKind::Add, Polygon::rect(0.0, 0.0, 1.0, 1.0).unwrap()).unwrap();
        store.commit("w0").unwrap();
        let d = store
            .patch("w0", EditKind::Delete, Polygon::rect(0.0, 0.0, 1.0, 1.0).unwrap())
            .unwrap();
        assert_eq!(d.edits.len(), 2);
        assert_eq!(d.edits[1].sequence, 2);
        assert_eq!(d.selected_candidate, 1);
        // abandon the edit: committed state stays
        store.discard_draft("w0");
        let (rec, _) = store.reload_annotation("w0").unwrap();
        assert_eq!(rec.edits.len(), 1);
    }

    #[test]
    fn skip_semantics_and_counts() {
        let f = fixture(3);
        let mut store = open(&f);
        assert_eq!(store.skip("w1").unwrap().status, AnnotationStatus::Skipped);
        store.select("w2", 1, Polarity::Normal).unwrap();
        store.commit("w2").unwrap();
        assert_eq!(store.skip("w2").unwrap().status, AnnotationStatus::Tagged);
        let c = store.counts();
        assert_eq!((c.untagged, c.skipped, c.tagged), (1, 1, 1));
        assert_eq!(c.total(), store.manifest().len());
    }

    #[test]
    fn second_writer_is_locked_out() {
        let f = fixture(1);
        let store = open(&f);
        assert!(matches!(
            AnnotationStore::open(f.manifest.clone(), &f.ann, OpenMode::ReadWrite, 0),
            Err(StoreError::LockHeld(_))
        ));
        let mut ro = AnnotationStore::open(f.manifest.clone(), &f.ann, OpenMode::ReadOnly, 0).unwrap();
        assert!(matches!(ro.skip("w0"), Err(StoreError::ReadOnly)));
        drop(store);
        assert!(AnnotationStore::open(f.manifest.clone(), &f.ann, OpenMode::ReadWrite, 0).is_ok());
    }

    #[test]
    fn ground_truth_untouched() {
        let f = fixture(2);
        let before = fs::read(f.manifest.root.join("set.tsv")).unwrap();
        let mut store = open(&f);
        store.select("w0", 4, Polarity::Inverted).unwrap();
        store.commit("w0").unwrap();
        store.skip("w1").unwrap();
        assert_eq!(store.manifest(), &f.manifest);
        assert_eq!(fs::read(f.manifest.root.join("set.tsv")).unwrap(), before);
    }
}
