//! Labeled complexes with split tags, and their on-disk directory layout:
//! `manifest.json` (`[{"file", "split"}]`), one interchange document per
//! complex, and an optional `clusters.json` (`[{"target_id", "complex_ids"}]`).

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::complex::{parse_complex, Complex};
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const CLUSTERS_FILE: &str = "clusters.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub file: String,
    pub split: Split,
}

/// Complexes sharing one target protein.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterSpec {
    pub target_id: String,
    pub complex_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub complex: Complex,
    pub split: Split,
}

impl Entry {
    pub fn label(&self) -> f64 {
        self.complex.affinity.expect("dataset entries are labeled")
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub entries: Vec<Entry>,
    pub clusters: Vec<ClusterSpec>,
}

impl Dataset {
    /// Checks labels and id uniqueness.
    pub fn new(entries: Vec<Entry>, clusters: Vec<ClusterSpec>) -> Result<Self> {
        let mut ids = BTreeSet::new();
        for e in &entries {
            if e.complex.affinity.is_none() {
                return Err(Error::Dataset(format!("complex `{}` has no affinity label", e.complex.id)));
            }
            if !ids.insert(e.complex.id.as_str()) {
                return Err(Error::Dataset(format!("complex id `{}` appears twice", e.complex.id)));
            }
        }
        for c in &clusters {
            let mut seen = BTreeSet::new();
            for id in &c.complex_ids {
                if !ids.contains(id.as_str()) {
                    return Err(Error::Dataset(format!("cluster `{}` names unknown complex `{id}`", c.target_id)));
                }
                if !seen.insert(id) {
                    return Err(Error::Dataset(format!("cluster `{}` lists `{id}` twice", c.target_id)));
                }
            }
        }
        Ok(Self { entries, clusters })
    }

    /// Every complex tagged with one split.
    pub fn with_split(complexes: Vec<Complex>, split: Split) -> Result<Self> {
        Self::new(complexes.into_iter().map(|complex| Entry { complex, split }).collect(), Vec::new())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn split(&self, s: Split) -> Vec<&Complex> {
        self.entries.iter().filter(|e| e.split == s).map(|e| &e.complex).collect()
    }

    pub fn get(&self, id: &str) -> Option<&Complex> {
        self.entries.iter().map(|e| &e.complex).find(|c| c.id == id)
    }

    pub fn load_dir(dir: &Path) -> Result<Self> {
        let manifest_path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&manifest_path)
            .map_err(|e| Error::Dataset(format!("{}: {e}", manifest_path.display())))?;
        let manifest: Vec<ManifestEntry> = serde_json::from_str(&text)
            .map_err(|e| Error::Dataset(format!("{}: {}", manifest_path.display(), Error::from_json(e))))?;
        let mut entries = Vec::with_capacity(manifest.len());
        for m in manifest {
            let path = dir.join(&m.file);
            let complex = read_complex(&path)?;
            entries.push(Entry { complex, split: m.split });
        }
        let clusters_path = dir.join(CLUSTERS_FILE);
        let clusters = if clusters_path.exists() {
            read_clusters(&clusters_path)?
        } else {
            Vec::new()
        };
        Self::new(entries, clusters)
    }

    /// Writes `<id>.json` per complex plus the manifest (and clusters if any).
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut manifest = Vec::with_capacity(self.entries.len());
        for e in &self.entries {
            let file = format!("{}.json", e.complex.id);
            fs::write(dir.join(&file), e.complex.to_json() + "\n")?;
            manifest.push(ManifestEntry { file, split: e.split });
        }
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        fs::write(dir.join(MANIFEST_FILE), text + "\n")?;
        if !self.clusters.is_empty() {
            let text = serde_json::to_string_pretty(&self.clusters).expect("clusters serialize");
            fs::write(dir.join(CLUSTERS_FILE), text + "\n")?;
        }
        Ok(())
    }
}

/// Reads one interchange document; failures name the file.
pub fn read_complex(path: &Path) -> Result<Complex> {
    let text = fs::read_to_string(path).map_err(|e| Error::Dataset(format!("{}: {e}", path.display())))?;
    parse_complex(&text).map_err(|e| Error::Dataset(format!("{}: {e}", path.display())))
}

pub fn read_clusters(path: &Path) -> Result<Vec<ClusterSpec>> {
    let text = fs::read_to_string(path).map_err(|e| Error::Dataset(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Dataset(format!("{}: {}", path.display(), Error::from_json(e))))
}

pub fn manifest_path(dir: &Path) -> PathBuf {
    dir.join(MANIFEST_FILE)
}
