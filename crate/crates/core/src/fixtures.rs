//! Synthetic images and datasets with known contents, shared by tests, the
//! CLI `make-fixture` command and the service demo.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::ingest::{SourceInfo, LABEL_DIR, SOURCE_INFO_FILE};
use crate::maskcore::{BinaryMask, ImageGrid, LabeledMask, Source};
use crate::storage::{
    write_image, write_label_map, Dataset, ImageRecord, LabelMap, Manifest, MaskContainer, Split,
    IMAGE_DIR, MASK_DIR,
};

pub const DISK_SIZE: usize = 128;
pub const DISK_CENTER: (usize, usize) = (64, 64);
pub const DISK_RADIUS: usize = 24;

/// A bright flat disk on a dark flat background, and the disk as ground truth.
pub fn disk_fixture() -> (ImageGrid, BinaryMask) {
    let r2 = (DISK_RADIUS * DISK_RADIUS) as i64;
    let mask = BinaryMask::from_fn(DISK_SIZE, DISK_SIZE, |r, c| {
        let (dr, dc) = (
            r as i64 - DISK_CENTER.0 as i64,
            c as i64 - DISK_CENTER.1 as i64,
        );
        dr * dr + dc * dc <= r2
    });
    let image = ImageGrid::from_fn(
        DISK_SIZE,
        DISK_SIZE,
        |r, c| if mask.get(r, c) { 180 } else { 40 },
    );
    (image, mask)
}

/// Writes the disk fixture as a one-image dataset named `disk` whose
/// ground truth is the disk, category 1.
pub fn write_disk_dataset(root: impl AsRef<Path>) -> Result<Dataset> {
    let (image, disk) = disk_fixture();
    let mut manifest = Manifest::new("disk", "synthetic");
    manifest.categories.insert(1, "disk".into());
    manifest.images.push(ImageRecord {
        id: "disk".into(),
        image_path: format!("{IMAGE_DIR}/disk.png"),
        mask_path: format!("{MASK_DIR}/disk.imsk"),
        split: Split::Test,
    });
    let ds = Dataset::create(root, manifest)?;
    let rec = &ds.manifest.images[0];
    write_image(ds.image_path(rec), &image)?;
    let gt = LabeledMask::ground_truth(disk, 1)?;
    ds.save_masks(
        rec,
        &MaskContainer::from_labeled(DISK_SIZE, DISK_SIZE, &[gt])?,
    )?;
    Ok(ds)
}

pub const BLOB_IMAGE_SIZE: usize = 256;
pub const MAX_BLOBS: usize = 16;

/// `k` disjoint flat squares (24×24, one per 64×64 cell) with distinct
/// intensities on a flat background.
pub fn blob_fixture(k: usize) -> Result<(ImageGrid, Vec<BinaryMask>)> {
    if k > MAX_BLOBS {
        return Err(Error::InvalidArgument(format!("at most {MAX_BLOBS} blobs")));
    }
    let n = BLOB_IMAGE_SIZE;
    let blobs: Vec<BinaryMask> = (0..k)
        .map(|i| {
            let (r0, c0) = (64 * (i / 4) + 20, 64 * (i % 4) + 20);
            BinaryMask::from_fn(n, n, |r, c| {
                (r0..r0 + 24).contains(&r) && (c0..c0 + 24).contains(&c)
            })
        })
        .collect();
    let image = ImageGrid::from_fn(n, n, |r, c| {
        blobs
            .iter()
            .position(|b| b.get(r, c))
            .map_or(20, |i| 100 + 8 * i as u8)
    });
    Ok((image, blobs))
}

/// One image of the stats fixture: dimensions and, per mask, its
/// foreground pixel count and source.
pub struct StatsImage {
    pub height: usize,
    pub width: usize,
    pub masks: &'static [(usize, Source)],
}

const GT: Source = Source::GroundTruth;
const INT: Source = Source::Interactive;

pub const STATS_FIXTURE: [StatsImage; 3] = [
    StatsImage {
        height: 100,
        width: 100,
        masks: &[(1, GT), (10, GT), (100, INT), (5000, INT)],
    },
    StatsImage {
        height: 300,
        width: 400,
        masks: &[(12, GT), (120, GT), (1199, INT), (1200, INT), (60000, INT)],
    },
    StatsImage {
        height: 1100,
        width: 1000,
        masks: &[
            (1, GT),
            (2, GT),
            (1100, GT),
            (11000, INT),
            (110000, INT),
            (1100000, INT),
        ],
    },
];

/// Mask whose foreground is the first `n` pixels in row-major order.
fn prefix_mask(height: usize, width: usize, n: usize) -> BinaryMask {
    let mut m = BinaryMask::new(height, width);
    for r in 0..height {
        let start = r * width;
        if start >= n {
            break;
        }
        m.fill_row_span(r, 0, (n - start).min(width), true);
    }
    m
}

/// Writes [`STATS_FIXTURE`] as a canonical dataset at `root`.
pub fn write_stats_fixture(root: impl AsRef<Path>) -> Result<Dataset> {
    let mut manifest = Manifest::new("stats-fixture", "CT");
    manifest.categories.insert(1, "liver".into());
    for i in 0..STATS_FIXTURE.len() {
        manifest.images.push(ImageRecord {
            id: format!("img{i}"),
            image_path: format!("{IMAGE_DIR}/img{i}.png"),
            mask_path: format!("{MASK_DIR}/img{i}.imsk"),
            split: Split::Train,
        });
    }
    let ds = Dataset::create(root, manifest)?;
    for (spec, rec) in STATS_FIXTURE.iter().zip(&ds.manifest.images) {
        let (h, w) = (spec.height, spec.width);
        write_image(ds.image_path(rec), &ImageGrid::from_fn(h, w, |_, _| 0))?;
        let masks: Vec<LabeledMask> = spec
            .masks
            .iter()
            .map(|&(n, source)| {
                let mask = prefix_mask(h, w, n);
                match source {
                    Source::GroundTruth => LabeledMask::ground_truth(mask, 1),
                    Source::Interactive => Ok(LabeledMask::interactive(mask, 0)),
                }
            })
            .collect::<Result<_>>()?;
        ds.save_masks(rec, &MaskContainer::from_labeled(h, w, &masks)?)?;
    }
    Ok(ds)
}

pub const DEMO_IMAGES: usize = 6;
pub const DEMO_SIZE: usize = 128;

/// Label values of the demo source and their raw names.
pub const DEMO_LABELS: [(u32, &str); 4] = [
    (1, "Liver"),
    (2, "left kidney"),
    (3, "right kidney"),
    (4, "liver tumor"),
];

/// Writes a raw source directory (`images/`, `labels/`, `dataset.json`)
/// of flat-intensity abdominal phantoms, ready for ingest.
///
/// Each image has a liver, two kidneys (which merge into one
/// two-component "kidney" mask) and, on odd images, two tumors.
pub fn write_demo_source(root: impl AsRef<Path>) -> Result<()> {
    let root = root.as_ref();
    for dir in [root.join(IMAGE_DIR), root.join(LABEL_DIR)] {
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    let n = DEMO_SIZE;
    for i in 0..DEMO_IMAGES {
        let s = i * 2;
        let mut labels = vec![0u32; n * n];
        let mut rect = |r0: usize, c0: usize, h: usize, w: usize, v: u32| {
            for r in r0..r0 + h {
                labels[r * n + c0..r * n + c0 + w].fill(v);
            }
        };
        rect(10, 10 + s, 40, 50, 1);
        rect(70, 12, 30, 18 + s, 2);
        rect(70, 90 - s, 30, 18 + s, 3);
        if i % 2 == 1 {
            rect(20, 80, 8, 8, 4);
            rect(36, 96, 6, 6, 4);
        }
        let intensity = [30u8, 170, 110, 110, 230];
        let image = ImageGrid::from_fn(n, n, |r, c| intensity[labels[r * n + c] as usize]);
        write_image(root.join(IMAGE_DIR).join(format!("case{i:02}.png")), &image)?;
        write_label_map(
            root.join(LABEL_DIR).join(format!("case{i:02}.png")),
            &LabelMap::new(n, n, labels)?,
        )?;
    }
    let info = SourceInfo {
        name: Some("demo".into()),
        modality: Some("CT".into()),
        labels: DEMO_LABELS
            .iter()
            .map(|&(v, name)| (v.to_string(), name.to_string()))
            .collect::<BTreeMap<_, _>>(),
    };
    let path = root.join(SOURCE_INFO_FILE);
    let text = serde_json::to_string_pretty(&info).expect("source info serializes");
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}
