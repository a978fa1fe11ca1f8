use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(Error::InvalidArgument(format!("unknown split {other:?}"))),
        }
    }
}

/// One image of a dataset. Paths are relative to the manifest directory.
/// Fields are declared in alphabetical order so the JSON keys come out sorted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub id: String,
    pub image_path: String,
    pub mask_path: String,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    /// Category id to canonical name; ids are dense from 1.
    pub categories: BTreeMap<u32, String>,
    pub images: Vec<ImageRecord>,
    pub modality: String,
    pub name: String,
}

impl Manifest {
    pub fn new(name: impl Into<String>, modality: impl Into<String>) -> Self {
        Self {
            categories: BTreeMap::new(),
            images: Vec::new(),
            modality: modality.into(),
            name: name.into(),
        }
    }

    pub fn category_id(&self, name: &str) -> Option<u32> {
        self.categories
            .iter()
            .find(|(_, n)| n.as_str() == name)
            .map(|(&id, _)| id)
    }

    pub fn category_name(&self, id: u32) -> Option<&str> {
        self.categories.get(&id).map(String::as_str)
    }

    /// Checks id density and record uniqueness; file existence is checked by
    /// [`super::Dataset::open`].
    pub fn validate(&self) -> Result<()> {
        for (expected, &id) in (1u32..).zip(self.categories.keys()) {
            if id != expected {
                return Err(Error::InvalidManifest(format!(
                    "category ids must be dense from 1; found {id} where {expected} was expected"
                )));
            }
        }
        let mut seen = std::collections::BTreeSet::new();
        for rec in &self.images {
            if !seen.insert(rec.id.as_str()) {
                return Err(Error::InvalidManifest(format!(
                    "duplicate image id {:?}",
                    rec.id
                )));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: Manifest = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        m.validate()?;
        Ok(m)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn split_counts(&self) -> (usize, usize) {
        let test = self
            .images
            .iter()
            .filter(|r| r.split == Split::Test)
            .count();
        (self.images.len() - test, test)
    }
}
