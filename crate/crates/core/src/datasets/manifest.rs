//! On-disk dataset: a versioned JSON manifest plus content-addressed PNG files.
//!
//! Layout of a data directory:
//!
//! ```text
//! manifest.json
//! images/<first two hex digits>/<sha256 of PNG bytes>.png
//! ```
//!
//! Manifest fields: `schema_version`, `images` (each with `id`, `path`,
//! `split`, `family`, optional `ground_truth_sigma`), `pair_sets` (name to list
//! of `{id1, id2, delta}`), and `provenance` (`generator`, `seed`, `config`).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::labels::PairLabel;
use super::synthetic::Family;
use crate::error::{Error, Result};
use crate::imaging::{encode_png, read_image, Image};

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

/// Pair-set names used by generated corpora.
pub mod pair_sets {
    pub const TRAIN: &str = "train";
    pub const TRAIN_HALF: &str = "train_half";
    pub const VAL: &str = "val";
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    TrainLabeled,
    Unlabeled,
    Test1,
    Test2,
    Test3,
}

impl Split {
    pub const TESTS: [Split; 3] = [Split::Test1, Split::Test2, Split::Test3];

    pub fn name(self) -> &'static str {
        match self {
            Split::TrainLabeled => "train_labeled",
            Split::Unlabeled => "unlabeled",
            Split::Test1 => "test1",
            Split::Test2 => "test2",
            Split::Test3 => "test3",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "train_labeled" => Ok(Split::TrainLabeled),
            "unlabeled" => Ok(Split::Unlabeled),
            "test1" => Ok(Split::Test1),
            "test2" => Ok(Split::Test2),
            "test3" => Ok(Split::Test3),
            other => Err(Error::invalid(format!("unknown split `{other}`"))),
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub id: String,
    /// Relative to the manifest's directory.
    pub path: String,
    pub split: Split,
    pub family: Family,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth_sigma: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub generator: String,
    pub seed: u64,
    pub config: serde_json::Value,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub images: Vec<ImageRecord>,
    pub pair_sets: BTreeMap<String, Vec<PairLabel>>,
    pub provenance: Provenance,
    /// Directory image paths resolve against; not serialized.
    #[serde(skip)]
    pub root: PathBuf,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestStats {
    pub images_per_split: BTreeMap<String, usize>,
    pub images_per_family: BTreeMap<String, usize>,
    pub pairs_per_set: BTreeMap<String, usize>,
    pub total_images: usize,
}

impl Manifest {
    pub fn new(root: impl Into<PathBuf>, provenance: Provenance) -> Self {
        Self {
            schema_version: MANIFEST_SCHEMA_VERSION,
            images: Vec::new(),
            pair_sets: BTreeMap::new(),
            provenance,
            root: root.into(),
        }
    }

    pub fn image(&self, id: &str) -> Option<&ImageRecord> {
        self.images.iter().find(|r| r.id == id)
    }

    pub fn images_in(&self, split: Split) -> impl Iterator<Item = &ImageRecord> {
        self.images.iter().filter(move |r| r.split == split)
    }

    pub fn has_split(&self, split: Split) -> bool {
        self.images.iter().any(|r| r.split == split)
    }

    pub fn pairs(&self, set: &str) -> Option<&[PairLabel]> {
        self.pair_sets.get(set).map(Vec::as_slice)
    }

    pub fn image_path(&self, record: &ImageRecord) -> PathBuf {
        self.root.join(&record.path)
    }

    pub fn load_image(&self, record: &ImageRecord) -> Result<Image> {
        read_image(&self.image_path(record))
    }

    pub fn stats(&self) -> ManifestStats {
        let mut stats = ManifestStats {
            total_images: self.images.len(),
            ..Default::default()
        };
        for r in &self.images {
            *stats
                .images_per_split
                .entry(r.split.name().to_string())
                .or_insert(0) += 1;
            *stats
                .images_per_family
                .entry(r.family.name().to_string())
                .or_insert(0) += 1;
        }
        for (name, pairs) in &self.pair_sets {
            stats.pairs_per_set.insert(name.clone(), pairs.len());
        }
        stats
    }

    /// Structural checks: unique ids, canonical pairs that reference known ids.
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != MANIFEST_SCHEMA_VERSION {
            return Err(Error::Manifest(format!(
                "unknown schema version {} (expected {MANIFEST_SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        let mut ids = BTreeSet::new();
        for r in &self.images {
            if !ids.insert(r.id.as_str()) {
                return Err(Error::Manifest(format!("duplicate image id `{}`", r.id)));
            }
            if let Some(s) = r.ground_truth_sigma {
                if !(s.is_finite() && s >= 0.0) {
                    return Err(Error::Manifest(format!(
                        "image `{}` has invalid sigma {s}",
                        r.id
                    )));
                }
            }
        }
        for (set, pairs) in &self.pair_sets {
            for p in pairs {
                for id in [&p.id1, &p.id2] {
                    if !ids.contains(id.as_str()) {
                        return Err(Error::Manifest(format!(
                            "pair set `{set}` references unknown image id `{id}`"
                        )));
                    }
                }
                if p.id1 >= p.id2 {
                    return Err(Error::Manifest(format!(
                        "pair set `{set}` has non-canonical pair ({}, {})",
                        p.id1, p.id2
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    /// Loads and validates a manifest, including existence of every image file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let version: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))?;
        match version.get("schema_version").and_then(|v| v.as_u64()) {
            Some(v) if v == MANIFEST_SCHEMA_VERSION as u64 => {}
            Some(v) => {
                return Err(Error::Manifest(format!(
                    "{}: unknown schema version {v} (expected {MANIFEST_SCHEMA_VERSION})",
                    path.display()
                )))
            }
            None => {
                return Err(Error::Manifest(format!(
                    "{}: missing schema_version",
                    path.display()
                )))
            }
        }
        let mut manifest: Manifest = serde_json::from_value(version)
            .map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))?;
        manifest.root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        manifest.validate()?;
        for r in &manifest.images {
            let p = manifest.image_path(r);
            if !p.is_file() {
                return Err(Error::Manifest(format!(
                    "image `{}` is missing its file {}",
                    r.id,
                    p.display()
                )));
            }
        }
        Ok(manifest)
    }

    /// Loads `<dir>/manifest.json`.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        Self::load(&dir.join(MANIFEST_FILE))
    }
}

/// Writes PNGs under `images/` keyed by the SHA-256 of their encoded bytes.
pub struct ImageStore {
    root: PathBuf,
}

impl ImageStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    /// Stores the image and returns its manifest-relative path.
    pub fn put(&self, img: &Image) -> Result<String> {
        let bytes = encode_png(img)?;
        let digest = hex::encode(Sha256::digest(&bytes));
        let rel = format!("images/{}/{}.png", &digest[..2], digest);
        let full = self.root.join(&rel);
        if !full.exists() {
            let dir = full.parent().expect("store path has a parent");
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            std::fs::write(&full, &bytes).map_err(|e| Error::io(&full, e))?;
        }
        Ok(rel)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
