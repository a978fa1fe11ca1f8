use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::taxonomy::{normalize_name, AnatomyGroup, CATALOG};

/// Maps raw category strings to canonical names. Keys and canonical names
/// are stored normalized (case-folded, whitespace collapsed).
///
/// Canonical names whose objects are separate instances (lesions, nodules)
/// are marked separable; their multi-component masks are split downstream.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SynonymTable {
    map: BTreeMap<String, String>,
    separable: BTreeSet<String>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum SynonymFile {
    Full(FullFile),
    Plain(BTreeMap<String, String>),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FullFile {
    synonyms: BTreeMap<String, String>,
    #[serde(default)]
    separable: Vec<String>,
}

impl SynonymTable {
    pub fn empty() -> Self {
        Self::default()
    }

    /// The shipped table: every catalog name maps to itself, `left X` and
    /// `right X` map to `X` for paired targets, plus a few common variants.
    /// Lesion categories are separable.
    pub fn builtin() -> Self {
        let mut table = Self::empty();
        for t in CATALOG {
            table.insert(t.name, t.name);
            if t.paired {
                for side in ["left", "right"] {
                    table.insert(&format!("{side} {}", t.name), t.name);
                }
            }
            if t.group() == AnatomyGroup::Lesions {
                table.mark_separable(t.name);
            }
        }
        for (raw, canonical) in [
            ("pulmonary nodule", "lung nodule"),
            ("left lung", "lung"),
            ("right lung", "lung"),
            ("lungs", "lung"),
            ("kidneys", "kidney"),
            ("urinary bladder", "bladder"),
            ("gall bladder", "gallbladder"),
            ("ivc", "inferior vena cava"),
            ("non-enhancing tumor", "non enhancing tumor"),
        ] {
            table.insert(raw, canonical);
        }
        table
    }

    /// Adds a mapping; the canonical name also resolves to itself.
    pub fn insert(&mut self, raw: &str, canonical: &str) {
        let canonical = normalize_name(canonical);
        self.map.insert(canonical.clone(), canonical.clone());
        self.map.insert(normalize_name(raw), canonical);
    }

    pub fn mark_separable(&mut self, canonical: &str) {
        self.separable.insert(normalize_name(canonical));
    }

    pub fn canonicalize(&self, raw: &str) -> Option<&str> {
        self.map.get(&normalize_name(raw)).map(String::as_str)
    }

    pub fn is_separable(&self, canonical: &str) -> bool {
        self.separable.contains(&normalize_name(canonical))
    }

    /// Entries of `other` override entries of `self`.
    pub fn extend(&mut self, other: SynonymTable) {
        self.map.extend(other.map);
        self.separable.extend(other.separable);
    }

    /// Parses either `{raw: canonical}` or
    /// `{"synonyms": {raw: canonical}, "separable": [canonical]}`.
    pub fn from_json(text: &str) -> std::result::Result<Self, serde_json::Error> {
        let mut table = Self::empty();
        match serde_json::from_str(text)? {
            SynonymFile::Plain(map) => {
                for (raw, canonical) in map {
                    table.insert(&raw, &canonical);
                }
            }
            SynonymFile::Full(full) => {
                for (raw, canonical) in full.synonyms {
                    table.insert(&raw, &canonical);
                }
                for name in full.separable {
                    table.mark_separable(&name);
                }
            }
        }
        Ok(table)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| Error::json(path, e))
    }
}
