use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::maskcore::{BinaryMask, ImageGrid, LabeledMask};

use super::container::{read_container, write_container, MaskContainer};
use super::manifest::{ImageRecord, Manifest};
use super::raster::{read_image, LabelMap};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const IMAGE_DIR: &str = "images";
pub const MASK_DIR: &str = "masks";

/// A canonical dataset on disk: `manifest.json`, `images/*.png` and
/// `masks/*.imsk`, all paths relative to `root`.
#[derive(Debug, Clone)]
pub struct Dataset {
    root: PathBuf,
    pub manifest: Manifest,
}

impl Dataset {
    /// Reads and validates a dataset, including that every referenced file exists.
    pub fn open(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        let manifest = Manifest::read(root.join(MANIFEST_FILE))?;
        let ds = Self { root, manifest };
        for rec in &ds.manifest.images {
            for p in [ds.image_path(rec), ds.mask_path(rec)] {
                if !p.is_file() {
                    return Err(Error::MissingFile(p));
                }
            }
        }
        Ok(ds)
    }

    /// Creates the directory layout for a new dataset and writes the manifest.
    pub fn create(root: impl AsRef<Path>, manifest: Manifest) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        for dir in [root.clone(), root.join(IMAGE_DIR), root.join(MASK_DIR)] {
            fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        }
        manifest.validate()?;
        let ds = Self { root, manifest };
        ds.save_manifest()?;
        Ok(ds)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn name(&self) -> &str {
        &self.manifest.name
    }

    pub fn image_path(&self, rec: &ImageRecord) -> PathBuf {
        self.root.join(&rec.image_path)
    }

    pub fn mask_path(&self, rec: &ImageRecord) -> PathBuf {
        self.root.join(&rec.mask_path)
    }

    pub fn load_image(&self, rec: &ImageRecord) -> Result<ImageGrid> {
        read_image(self.image_path(rec))
    }

    pub fn load_masks(&self, rec: &ImageRecord) -> Result<MaskContainer> {
        read_container(self.mask_path(rec))
    }

    pub fn save_masks(&self, rec: &ImageRecord, container: &MaskContainer) -> Result<()> {
        write_container(self.mask_path(rec), container)
    }

    pub fn save_manifest(&self) -> Result<()> {
        self.manifest.write(self.root.join(MANIFEST_FILE))
    }

    pub fn record(&self, id: &str) -> Option<&ImageRecord> {
        self.manifest.images.iter().find(|r| r.id == id)
    }
}

/// Opens either a single dataset (a directory holding `manifest.json`) or a
/// collection whose immediate subdirectories are datasets, sorted by name.
pub fn discover(path: impl AsRef<Path>) -> Result<Vec<Dataset>> {
    let path = path.as_ref();
    if path.join(MANIFEST_FILE).is_file() {
        return Ok(vec![Dataset::open(path)?]);
    }
    let entries = fs::read_dir(path).map_err(|e| Error::io(path, e))?;
    let mut dirs: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(MANIFEST_FILE).is_file())
        .collect();
    dirs.sort();
    dirs.iter().map(Dataset::open).collect()
}

/// One ground-truth mask per distinct nonzero label, in ascending label order,
/// with the label value as category id.
pub fn one_hot_split(map: &LabelMap) -> Vec<LabeledMask> {
    let mut planes: BTreeMap<u32, BinaryMask> = BTreeMap::new();
    for (idx, &label) in map.labels.iter().enumerate() {
        if label != 0 {
            planes
                .entry(label)
                .or_insert_with(|| BinaryMask::new(map.height, map.width))
                .set(idx / map.width, idx % map.width, true);
        }
    }
    planes
        .into_iter()
        .map(|(label, mask)| LabeledMask::ground_truth(mask, label).expect("label is nonzero"))
        .collect()
}
