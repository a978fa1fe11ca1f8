//! Source adapters and the end-to-end ingest run.
//!
//! Two source layouts are accepted:
//!
//! * raw: `images/<id>.png`, optional `labels/<id>.png` (8- or 16-bit label
//!   raster, 0 = background), optional `dataset.json`
//!   (`{"name", "modality", "labels": {"<value>": "<raw name>"}}`) and an
//!   optional `exclude.txt` listing image ids to skip;
//! * canonical: a directory with `manifest.json`, as written by this module,
//!   so ingesting an ingested dataset reproduces it.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::maskcore::{BinaryMask, ImageGrid, LabeledMask, Source, UNCATEGORIZED};
use crate::storage::{
    one_hot_split, read_image, read_label_map, write_image, Dataset, ImageRecord, Manifest,
    MaskContainer, Split, IMAGE_DIR, MANIFEST_FILE, MASK_DIR,
};

use super::filters::{
    filter_aspect_ratio, filter_foreground, split_multicomponent_gt, DropReason, Verdict,
};
use super::split::{assign_splits, SplitCounts};
use super::synonyms::SynonymTable;
use super::IngestConfig;

pub const SOURCE_INFO_FILE: &str = "dataset.json";
pub const LABEL_DIR: &str = "labels";
pub const EXCLUDE_FILE: &str = "exclude.txt";

/// Contents of `dataset.json` in a raw source.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceInfo {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub modality: Option<String>,
    /// Label value (as a decimal string) to raw category name.
    #[serde(default)]
    pub labels: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DropRecord {
    pub image: String,
    /// Raw or canonical category name for mask-level drops.
    pub category: Option<String>,
    pub reason: DropReason,
}

/// What ingest kept and dropped.
///
/// Image accounting: `images_seen = images_kept + sum(image_drops)`. Mask
/// accounting covers kept images only; a mask is one one-hot plane with an
/// unresolved name, or one mask after merging synonyms and instance
/// splitting: `masks_seen = masks_kept + sum(mask_drops)`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub images_seen: usize,
    pub images_kept: usize,
    pub masks_seen: usize,
    pub masks_kept: usize,
    pub image_drops: BTreeMap<DropReason, usize>,
    pub mask_drops: BTreeMap<DropReason, usize>,
    pub dropped: Vec<DropRecord>,
    pub unresolved: BTreeSet<String>,
    /// Images whose masks were all dropped but which were kept.
    pub emptied_images: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub splits: Option<SplitCounts>,
}

impl IngestReport {
    fn drop_image(&mut self, image: &str, reason: DropReason) {
        self.images_seen += 1;
        *self.image_drops.entry(reason).or_default() += 1;
        self.dropped.push(DropRecord {
            image: image.to_owned(),
            category: None,
            reason,
        });
    }

    fn drop_mask(&mut self, image: &str, category: &str, reason: DropReason) {
        self.masks_seen += 1;
        *self.mask_drops.entry(reason).or_default() += 1;
        self.dropped.push(DropRecord {
            image: image.to_owned(),
            category: Some(category.to_owned()),
            reason,
        });
    }

    /// Combines two partial reports; the result does not depend on order.
    pub fn merge(mut self, other: IngestReport) -> IngestReport {
        self.images_seen += other.images_seen;
        self.images_kept += other.images_kept;
        self.masks_seen += other.masks_seen;
        self.masks_kept += other.masks_kept;
        for (k, v) in other.image_drops {
            *self.image_drops.entry(k).or_default() += v;
        }
        for (k, v) in other.mask_drops {
            *self.mask_drops.entry(k).or_default() += v;
        }
        self.dropped.extend(other.dropped);
        self.dropped.sort();
        self.unresolved.extend(other.unresolved);
        self.emptied_images.extend(other.emptied_images);
        self.emptied_images.sort();
        self.splits = match (self.splits, other.splits) {
            (Some(a), Some(b)) => Some(SplitCounts {
                train: a.train + b.train,
                test: a.test + b.test,
                overflow: a.overflow + b.overflow,
            }),
            (a, b) => a.or(b),
        };
        self
    }

    /// True when every seen image and mask is either kept or reported.
    pub fn is_conserved(&self) -> bool {
        self.images_seen == self.images_kept + self.image_drops.values().sum::<usize>()
            && self.masks_seen == self.masks_kept + self.mask_drops.values().sum::<usize>()
    }
}

/// A mask before category ids are assigned.
struct Pending {
    mask: BinaryMask,
    source: Source,
    /// Canonical name; `None` for uncategorized interactive masks.
    category: Option<String>,
    instance: Option<u32>,
}

struct Processed {
    id: String,
    image: ImageGrid,
    masks: Vec<Pending>,
}

/// One image as found in the source.
struct SourceImage {
    id: String,
    image_path: PathBuf,
    load_masks: MaskSource,
}

enum MaskSource {
    /// Label raster, if the source has one for this image.
    Labels(Option<PathBuf>),
    /// Mask container of a canonical dataset.
    Container(PathBuf),
}

struct SourceLayout {
    name: String,
    modality: String,
    images: Vec<SourceImage>,
    /// Label value or category id to raw name.
    names: BTreeMap<u32, String>,
    excluded: BTreeSet<String>,
}

fn file_stems(dir: &Path, ext: &str) -> Result<Vec<(String, PathBuf)>> {
    if !dir.is_dir() {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().and_then(|e| e.to_str()) == Some(ext) {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                out.push((stem.to_owned(), path.clone()));
            }
        }
    }
    out.sort();
    Ok(out)
}

fn read_exclusions(path: &Path) -> Result<BTreeSet<String>> {
    if !path.is_file() {
        return Ok(BTreeSet::new());
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_owned)
        .collect())
}

fn scan_source(src: &Path) -> Result<SourceLayout> {
    let excluded = read_exclusions(&src.join(EXCLUDE_FILE))?;
    let dir_name = src
        .file_name()
        .and_then(|n| n.to_str())
        .unwrap_or("dataset")
        .to_owned();
    if src.join(MANIFEST_FILE).is_file() {
        let ds = Dataset::open(src)?;
        let images = ds
            .manifest
            .images
            .iter()
            .map(|rec| SourceImage {
                id: rec.id.clone(),
                image_path: ds.image_path(rec),
                load_masks: MaskSource::Container(ds.mask_path(rec)),
            })
            .collect();
        return Ok(SourceLayout {
            name: ds.manifest.name.clone(),
            modality: ds.manifest.modality.clone(),
            images,
            names: ds.manifest.categories.clone(),
            excluded,
        });
    }

    let info_path = src.join(SOURCE_INFO_FILE);
    let info: SourceInfo = if info_path.is_file() {
        let text = fs::read_to_string(&info_path).map_err(|e| Error::io(&info_path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(&info_path, e))?
    } else {
        SourceInfo::default()
    };
    let mut names = BTreeMap::new();
    for (value, name) in &info.labels {
        let v: u32 = value.trim().parse().map_err(|_| {
            Error::InvalidArgument(format!(
                "{}: label key {value:?} is not an integer",
                info_path.display()
            ))
        })?;
        names.insert(v, name.clone());
    }
    let labels: BTreeMap<String, PathBuf> = file_stems(&src.join(LABEL_DIR), "png")?
        .into_iter()
        .collect();
    let images = file_stems(&src.join(IMAGE_DIR), "png")?
        .into_iter()
        .map(|(id, image_path)| SourceImage {
            load_masks: MaskSource::Labels(labels.get(&id).cloned()),
            id,
            image_path,
        })
        .collect();
    Ok(SourceLayout {
        name: info.name.unwrap_or(dir_name),
        modality: info.modality.unwrap_or_else(|| "unknown".into()),
        images,
        names,
        excluded,
    })
}

fn raw_name(names: &BTreeMap<u32, String>, value: u32) -> String {
    names
        .get(&value)
        .cloned()
        .unwrap_or_else(|| format!("label {value}"))
}

fn process_image(
    layout: &SourceLayout,
    item: &SourceImage,
    cfg: &IngestConfig,
    table: &SynonymTable,
) -> Result<(Option<Processed>, IngestReport)> {
    let mut report = IngestReport::default();
    if layout.excluded.contains(&item.id) {
        report.drop_image(&item.id, DropReason::Excluded);
        return Ok((None, report));
    }
    let image = read_image(&item.image_path)?;
    if let Verdict::Drop(reason) = filter_aspect_ratio(image.height(), image.width(), cfg) {
        report.drop_image(&item.id, reason);
        return Ok((None, report));
    }
    report.images_seen += 1;
    report.images_kept += 1;

    let (ground_truth, interactive) = match &item.load_masks {
        MaskSource::Labels(None) => (Vec::new(), Vec::new()),
        MaskSource::Labels(Some(path)) => {
            let map = read_label_map(path)?;
            if map.dims() != image.dims() {
                return Err(Error::InvalidImage(format!(
                    "{}: label raster is {:?} but the image is {:?}",
                    path.display(),
                    map.dims(),
                    image.dims()
                )));
            }
            (one_hot_split(&map), Vec::new())
        }
        MaskSource::Container(path) => {
            let masks = crate::storage::read_container(path)?.labeled_masks()?;
            for m in &masks {
                if m.mask.dims() != image.dims() {
                    return Err(Error::DimensionMismatch {
                        expected: image.dims(),
                        found: m.mask.dims(),
                    });
                }
            }
            masks.into_iter().partition(|m| m.is_ground_truth())
        }
    };

    // Resolve names and merge planes that share a canonical name.
    let mut merged: BTreeMap<String, BinaryMask> = BTreeMap::new();
    let mut instances: Vec<Pending> = Vec::new();
    for lm in ground_truth {
        let raw = raw_name(&layout.names, lm.category_id);
        let Some(canonical) = table.canonicalize(&raw) else {
            report.unresolved.insert(raw.clone());
            report.drop_mask(&item.id, &raw, DropReason::UnresolvedCategory);
            continue;
        };
        // Instances written by an earlier run merge back here and split
        // again below, so re-ingesting a canonical dataset is a no-op.
        merged
            .entry(canonical.to_owned())
            .and_modify(|m| m.union_in_place(&lm.mask).expect("same image"))
            .or_insert(lm.mask);
    }
    for (canonical, mask) in merged {
        let lm = LabeledMask::ground_truth(mask, 1).expect("placeholder id is nonzero");
        for part in split_multicomponent_gt(lm, table.is_separable(&canonical)) {
            instances.push(Pending {
                mask: part.mask,
                source: Source::GroundTruth,
                category: Some(canonical.clone()),
                instance: part.instance,
            });
        }
    }
    for lm in interactive {
        let category = if lm.category_id == UNCATEGORIZED {
            None
        } else {
            let raw = raw_name(&layout.names, lm.category_id);
            match table.canonicalize(&raw) {
                Some(c) => Some(c.to_owned()),
                None => {
                    report.unresolved.insert(raw.clone());
                    report.drop_mask(&item.id, &raw, DropReason::UnresolvedCategory);
                    continue;
                }
            }
        };
        instances.push(Pending {
            mask: lm.mask,
            source: Source::Interactive,
            category,
            instance: None,
        });
    }

    let mut kept = Vec::new();
    for p in instances {
        match filter_foreground(&p.mask, cfg) {
            Verdict::Keep => {
                report.masks_seen += 1;
                report.masks_kept += 1;
                kept.push(p);
            }
            Verdict::Drop(reason) => {
                let name = p.category.clone().unwrap_or_else(|| "uncategorized".into());
                report.drop_mask(&item.id, &name, reason);
            }
        }
    }
    if kept.is_empty() && report.masks_seen > 0 {
        report.emptied_images.push(item.id.clone());
    }
    Ok((
        Some(Processed {
            id: item.id.clone(),
            image,
            masks: kept,
        }),
        report,
    ))
}

/// Ingests one source directory into `dst` and returns what was kept and
/// dropped. Category ids are assigned in sorted order of the canonical
/// names that survive filtering.
pub fn ingest_dataset(
    src: impl AsRef<Path>,
    dst: impl AsRef<Path>,
    cfg: &IngestConfig,
    table: &SynonymTable,
) -> Result<IngestReport> {
    cfg.validate()?;
    let src = src.as_ref();
    let dst = dst.as_ref();
    if !src.is_dir() {
        return Err(Error::io(
            src,
            std::io::Error::new(std::io::ErrorKind::NotFound, "source directory not found"),
        ));
    }
    let layout = scan_source(src)?;
    let results: Vec<(Option<Processed>, IngestReport)> = layout
        .images
        .par_iter()
        .map(|item| process_image(&layout, item, cfg, table))
        .collect::<Result<_>>()?;

    let mut report = IngestReport::default();
    let mut kept = Vec::new();
    for (processed, partial) in results {
        report = report.merge(partial);
        kept.extend(processed);
    }

    let names: BTreeSet<&str> = kept
        .iter()
        .flat_map(|p| p.masks.iter().filter_map(|m| m.category.as_deref()))
        .collect();
    let ids: BTreeMap<&str, u32> = names.iter().copied().zip(1u32..).collect();
    let mut manifest = Manifest::new(layout.name.clone(), layout.modality.clone());
    manifest.categories = ids.iter().map(|(&n, &id)| (id, n.to_owned())).collect();
    manifest.images = kept
        .iter()
        .map(|p| ImageRecord {
            id: p.id.clone(),
            image_path: format!("{IMAGE_DIR}/{}.png", p.id),
            mask_path: format!("{MASK_DIR}/{}.imsk", p.id),
            split: Split::Train,
        })
        .collect();
    report.splits = Some(assign_splits(&mut manifest, cfg));

    let ds = Dataset::create(dst, manifest)?;
    kept.par_iter()
        .zip(ds.manifest.images.par_iter())
        .try_for_each(|(p, rec)| -> Result<()> {
            write_image(ds.image_path(rec), &p.image)?;
            let mut container = MaskContainer::new(p.image.height(), p.image.width());
            for m in &p.masks {
                container.push(&LabeledMask {
                    mask: m.mask.clone(),
                    category_id: m.category.as_deref().map_or(UNCATEGORIZED, |n| ids[n]),
                    source: m.source,
                    instance: m.instance,
                })?;
            }
            ds.save_masks(rec, &container)
        })?;
    Ok(report)
}
