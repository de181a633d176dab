use std::collections::{BTreeSet, HashMap};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::write_atomic;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub image_id: String,
    pub image_path: PathBuf,
    pub mask_path: PathBuf,
    /// Organ or scanner label.
    pub domain: String,
}

/// Images of one task with their domain labels.
///
/// Relative paths are resolved against the directory holding the manifest
/// file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub task_id: String,
    pub entries: Vec<ManifestEntry>,
    #[serde(skip)]
    base_dir: Option<PathBuf>,
}

impl DatasetManifest {
    pub fn new(task_id: impl Into<String>, entries: Vec<ManifestEntry>) -> Self {
        Self {
            task_id: task_id.into(),
            entries,
            base_dir: None,
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::read(path, e))?;
        let mut manifest: Self = serde_json::from_str(&text)
            .map_err(|e| Error::InvalidManifest(format!("{}: {e}", path.display())))?;
        manifest.base_dir = path.parent().map(Path::to_path_buf);
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        write_atomic(path.as_ref(), |w| w.write_all(text.as_bytes()))
    }

    pub fn with_base_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.base_dir = Some(dir.into());
        self
    }

    /// Checks id uniqueness and non-empty fields, naming every offending entry.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        let mut first_seen: HashMap<&str, usize> = HashMap::new();
        for (i, e) in self.entries.iter().enumerate() {
            if e.image_id.is_empty() {
                problems.push(format!("entry {i}: empty image_id"));
            } else if let Some(prev) = first_seen.insert(&e.image_id, i) {
                problems.push(format!("entry {i}: duplicate image_id {:?} (first at entry {prev})", e.image_id));
            }
            if e.domain.trim().is_empty() {
                problems.push(format!("entry {i}: empty domain"));
            }
            if e.image_path.as_os_str().is_empty() {
                problems.push(format!("entry {i}: empty image_path"));
            }
            if e.mask_path.as_os_str().is_empty() {
                problems.push(format!("entry {i}: empty mask_path"));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidManifest(problems.join("; ")))
        }
    }

    pub fn domains(&self) -> BTreeSet<&str> {
        self.entries.iter().map(|e| e.domain.as_str()).collect()
    }

    pub fn entry(&self, image_id: &str) -> Option<&ManifestEntry> {
        self.entries.iter().find(|e| e.image_id == image_id)
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        match &self.base_dir {
            Some(base) if path.is_relative() => base.join(path),
            _ => path.to_path_buf(),
        }
    }

    pub fn image_path(&self, entry: &ManifestEntry) -> PathBuf {
        self.resolve(&entry.image_path)
    }

    pub fn mask_path(&self, entry: &ManifestEntry) -> PathBuf {
        self.resolve(&entry.mask_path)
    }
}
