use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::maskcore::Source;
use crate::storage::Dataset;

/// Image size classes by pixel count.
pub const RESOLUTION_BUCKETS: [&str; 3] = ["<256^2", "256^2-1024^2", ">1024^2"];

/// Decade bins of mask foreground fraction, ascending. The last bin is
/// closed at 1.
pub const COVERAGE_BINS: [&str; 7] = [
    "<1e-6",
    "[1e-6,1e-5)",
    "[1e-5,1e-4)",
    "[1e-4,1e-3)",
    "[1e-3,1e-2)",
    "[1e-2,1e-1)",
    "[1e-1,1]",
];

pub fn resolution_bucket(height: usize, width: usize) -> usize {
    let px = height as u64 * width as u64;
    if px < 256 * 256 {
        0
    } else if px <= 1024 * 1024 {
        1
    } else {
        2
    }
}

/// Bin of `foreground / area`, decided with integer arithmetic so that
/// fractions sitting exactly on a decade edge land in the upper bin.
pub fn coverage_bin(foreground: usize, area: usize) -> usize {
    let (c, a) = (foreground as u128, area as u128);
    for k in 1..=6u32 {
        if c * 10u128.pow(k) >= a {
            return COVERAGE_BINS.len() - k as usize;
        }
    }
    0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SourceCounts {
    pub ground_truth: usize,
    pub interactive: usize,
}

impl SourceCounts {
    pub fn total(&self) -> usize {
        self.ground_truth + self.interactive
    }

    fn add(&mut self, source: Source) {
        match source {
            Source::GroundTruth => self.ground_truth += 1,
            Source::Interactive => self.interactive += 1,
        }
    }

    fn merge(&mut self, o: SourceCounts) {
        self.ground_truth += o.ground_truth;
        self.interactive += o.interactive;
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bin<T> {
    pub bin: String,
    pub count: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub datasets: usize,
    pub images: usize,
    pub masks: SourceCounts,
    /// 0 for an empty dataset.
    pub masks_per_image_mean: f64,
    pub resolution: Vec<Bin<usize>>,
    /// Exact `HxW` image dimensions.
    pub dims: BTreeMap<String, usize>,
    pub coverage: Vec<Bin<SourceCounts>>,
}

/// Running counts; merge is associative and commutative.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StatsAccumulator {
    pub datasets: usize,
    pub images: usize,
    pub masks: SourceCounts,
    pub resolution: [usize; 3],
    pub dims: BTreeMap<(usize, usize), usize>,
    pub coverage: [SourceCounts; 7],
}

impl StatsAccumulator {
    /// `masks` lists the foreground count and source of each mask.
    pub fn add_image(&mut self, height: usize, width: usize, masks: &[(usize, Source)]) {
        self.images += 1;
        self.resolution[resolution_bucket(height, width)] += 1;
        *self.dims.entry((height, width)).or_default() += 1;
        for &(fg, source) in masks {
            self.masks.add(source);
            self.coverage[coverage_bin(fg, height * width)].add(source);
        }
    }

    pub fn merge(&mut self, o: StatsAccumulator) {
        self.datasets += o.datasets;
        self.images += o.images;
        self.masks.merge(o.masks);
        for (a, b) in self.resolution.iter_mut().zip(o.resolution) {
            *a += b;
        }
        for (k, n) in o.dims {
            *self.dims.entry(k).or_default() += n;
        }
        for (a, b) in self.coverage.iter_mut().zip(o.coverage) {
            a.merge(b);
        }
    }

    pub fn report(&self) -> StatsReport {
        StatsReport {
            datasets: self.datasets,
            images: self.images,
            masks: self.masks,
            masks_per_image_mean: if self.images == 0 {
                0.0
            } else {
                self.masks.total() as f64 / self.images as f64
            },
            resolution: RESOLUTION_BUCKETS
                .iter()
                .zip(self.resolution)
                .map(|(b, count)| Bin {
                    bin: b.to_string(),
                    count,
                })
                .collect(),
            dims: self
                .dims
                .iter()
                .map(|(&(h, w), &n)| (format!("{h}x{w}"), n))
                .collect(),
            coverage: COVERAGE_BINS
                .iter()
                .zip(self.coverage)
                .map(|(b, count)| Bin {
                    bin: b.to_string(),
                    count,
                })
                .collect(),
        }
    }
}

/// Image, resolution and mask-coverage statistics over the given datasets.
/// Masks are counted from their stored CSR planes without decoding.
pub fn dataset_stats(datasets: &[Dataset]) -> Result<StatsReport> {
    let mut acc = StatsAccumulator::default();
    for ds in datasets {
        let part = ds
            .manifest
            .images
            .par_iter()
            .map(|rec| {
                let c = ds.load_masks(rec)?;
                let masks: Vec<(usize, Source)> = c
                    .entries
                    .iter()
                    .map(|e| (e.col_idx.len(), e.source))
                    .collect();
                let mut acc = StatsAccumulator::default();
                acc.add_image(c.height, c.width, &masks);
                Ok::<_, crate::error::Error>(acc)
            })
            .try_reduce(StatsAccumulator::default, |mut a, b| {
                a.merge(b);
                Ok(a)
            })?;
        acc.merge(part);
        acc.datasets += 1;
    }
    Ok(acc.report())
}

impl StatsReport {
    /// Long-format histogram table: `histogram,bin,count`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("histogram,bin,count\n");
        for b in &self.resolution {
            let _ = writeln!(s, "resolution,{},{}", b.bin, b.count);
        }
        for (d, n) in &self.dims {
            let _ = writeln!(s, "dims,{d},{n}");
        }
        for b in &self.coverage {
            let _ = writeln!(
                s,
                "coverage_ground_truth,\"{}\",{}",
                b.bin, b.count.ground_truth
            );
        }
        for b in &self.coverage {
            let _ = writeln!(
                s,
                "coverage_interactive,\"{}\",{}",
                b.bin, b.count.interactive
            );
        }
        s
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "datasets: {}", self.datasets);
        let _ = writeln!(s, "images: {}", self.images);
        let _ = writeln!(
            s,
            "masks: {} (ground truth {}, interactive {})",
            self.masks.total(),
            self.masks.ground_truth,
            self.masks.interactive
        );
        let _ = writeln!(s, "masks per image: {:.4}", self.masks_per_image_mean);
        s.push_str("resolution:\n");
        for b in &self.resolution {
            let _ = writeln!(s, "  {:<14} {}", b.bin, b.count);
        }
        s.push_str("coverage:           gt  interactive\n");
        for b in &self.coverage {
            let _ = writeln!(
                s,
                "  {:<14} {:>6} {:>12}",
                b.bin, b.count.ground_truth, b.count.interactive
            );
        }
        s
    }
}
