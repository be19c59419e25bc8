//! Flat-file state under the output root.
//!
//! ```text
//! <root>/registry.json          sequence id -> source directory
//! <root>/jobs.json              job history
//! <root>/<id>/roi.json          stored ROI
//! <root>/<id>/flags.json        review verdicts
//! <root>/<id>/overlays, coords, summary.json
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{de::DeserializeOwned, Deserialize, Serialize};
use thiserror::Error;

use linemark_core::frame::{load_sequence, FrameSequence, SequenceError, SequenceInfo};
use linemark_core::pipeline::OutputLayout;
use linemark_core::roi::{Roi, RoiFileError};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("unknown sequence `{0}`")]
    UnknownSequence(String),
    #[error(transparent)]
    Sequence(#[from] SequenceError),
    #[error(transparent)]
    Roi(#[from] RoiFileError),
    #[error("cannot access {path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("corrupt state file {path}: {message}")]
    Corrupt { path: PathBuf, message: String },
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> StoreError {
    StoreError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// Reads JSON, returning `None` when the file does not exist.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<Option<T>, StoreError> {
    match std::fs::read_to_string(path) {
        Ok(text) => serde_json::from_str(&text).map(Some).map_err(|e| StoreError::Corrupt {
            path: path.to_path_buf(),
            message: e.to_string(),
        }),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(io_err(path, e)),
    }
}

/// Writes through a temporary file and rename so readers never see a partial file.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), StoreError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
    }
    let tmp = path.with_extension("json.tmp");
    let text = serde_json::to_string_pretty(value).expect("state serializes") + "\n";
    std::fs::write(&tmp, text).map_err(|e| io_err(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| io_err(path, e))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegistryEntry {
    pub dir: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Accepted,
    Flagged,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewFlag {
    pub frame_index: usize,
    pub verdict: Verdict,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone)]
pub struct Store {
    root: PathBuf,
}

impl Store {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn registry_path(&self) -> PathBuf {
        self.root.join("registry.json")
    }

    pub fn jobs_path(&self) -> PathBuf {
        self.root.join("jobs.json")
    }

    pub fn layout(&self, id: &str) -> OutputLayout {
        OutputLayout::new(&self.root, id)
    }

    pub fn roi_path(&self, id: &str) -> PathBuf {
        self.layout(id).root.join("roi.json")
    }

    pub fn flags_path(&self, id: &str) -> PathBuf {
        self.layout(id).root.join("flags.json")
    }

    pub fn registry(&self) -> Result<BTreeMap<String, RegistryEntry>, StoreError> {
        Ok(read_json(&self.registry_path())?.unwrap_or_default())
    }

    /// Validates the directory as a sequence and records it under its name.
    pub fn ingest(&self, dir: &Path) -> Result<SequenceInfo, StoreError> {
        let seq = load_sequence(dir)?;
        let dir = std::fs::canonicalize(dir).map_err(|e| io_err(dir, e))?;
        let mut reg = self.registry()?;
        reg.insert(seq.id().to_string(), RegistryEntry { dir });
        write_json(&self.registry_path(), &reg)?;
        Ok(seq.info())
    }

    pub fn sequence(&self, id: &str) -> Result<FrameSequence, StoreError> {
        let reg = self.registry()?;
        let entry = reg.get(id).ok_or_else(|| StoreError::UnknownSequence(id.to_string()))?;
        Ok(load_sequence(&entry.dir)?)
    }

    pub fn list(&self) -> Result<Vec<SequenceInfo>, StoreError> {
        self.registry()?
            .keys()
            .map(|id| self.sequence(id).map(|s| s.info()))
            .collect()
    }

    pub fn roi(&self, id: &str) -> Result<Option<Roi>, StoreError> {
        let path = self.roi_path(id);
        if !path.exists() {
            return Ok(None);
        }
        Ok(Some(Roi::load(&path)?))
    }

    pub fn save_roi(&self, id: &str, roi: &Roi) -> Result<(), StoreError> {
        write_json(&self.roi_path(id), roi)
    }

    pub fn flags(&self, id: &str) -> Result<BTreeMap<usize, ReviewFlag>, StoreError> {
        let list: Vec<ReviewFlag> = read_json(&self.flags_path(id))?.unwrap_or_default();
        Ok(list.into_iter().map(|f| (f.frame_index, f)).collect())
    }

    /// Replaces any earlier verdict for the same frame.
    pub fn save_flag(&self, id: &str, flag: ReviewFlag) -> Result<(), StoreError> {
        let mut flags = self.flags(id)?;
        flags.insert(flag.frame_index, flag);
        let list: Vec<&ReviewFlag> = flags.values().collect();
        write_json(&self.flags_path(id), &list)
    }
}
