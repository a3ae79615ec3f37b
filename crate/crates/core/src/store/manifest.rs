//! Dataset manifests: one `image_id<TAB>relative/path.png<TAB>ground truth`
//! record per line.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use super::{StoreError, StoreResult};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub image_id: String,
    /// Path as written in the manifest, relative to the manifest's directory.
    pub image_path: PathBuf,
    pub ground_truth: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetManifest {
    pub name: String,
    /// Directory that relative image paths resolve against.
    pub root: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entry(&self, image_id: &str) -> Option<&ManifestEntry> {
        self.entries.iter().find(|e| e.image_id == image_id)
    }

    pub fn position(&self, image_id: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.image_id == image_id)
    }

    pub fn resolve(&self, entry: &ManifestEntry) -> PathBuf {
        self.root.join(&entry.image_path)
    }
}

/// Image ids double as file names in the annotation directory.
pub fn valid_image_id(id: &str) -> bool {
    !id.is_empty()
        && !id.starts_with('.')
        && !id.chars().any(|c| c == '/' || c == '\\' || c.is_control())
}

/// Parse manifest text without touching the filesystem.
///
/// Blank lines and lines starting with `#` are ignored. Every other line
/// must hold exactly three tab-separated fields.
pub fn parse_manifest(text: &str, name: &str, root: &Path) -> StoreResult<DatasetManifest> {
    let mut seen = HashSet::new();
    let mut entries = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |message: String| StoreError::ManifestParse {
            line: line_no,
            message,
        };
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(err(format!("expected 3 tab-separated fields, found {}", fields.len())));
        }
        let (id, path, truth) = (fields[0].trim(), fields[1].trim(), fields[2]);
        if !valid_image_id(id) {
            return Err(err(format!("invalid image id `{id}`")));
        }
        if path.is_empty() {
            return Err(err(format!("empty image path for `{id}`")));
        }
        if !seen.insert(id.to_string()) {
            return Err(err(format!("duplicate image id `{id}`")));
        }
        entries.push(ManifestEntry {
            image_id: id.to_string(),
            image_path: PathBuf::from(path),
            ground_truth: truth.to_string(),
        });
    }
    Ok(DatasetManifest {
        name: name.to_string(),
        root: root.to_path_buf(),
        entries,
    })
}

/// Read a manifest and check that every image path resolves.
pub fn load_manifest(path: impl AsRef<Path>) -> StoreResult<DatasetManifest> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| StoreError::storage(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let manifest = parse_manifest(&text, &name, &root)?;
    for entry in &manifest.entries {
        let resolved = manifest.resolve(entry);
        if !resolved.is_file() {
            return Err(StoreError::MissingImage {
                image_id: entry.image_id.clone(),
                path: resolved.display().to_string(),
            });
        }
    }
    Ok(manifest)
}
