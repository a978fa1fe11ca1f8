//! PNG reading and writing for images and integer label rasters.

use std::io::Cursor;
use std::path::Path;

use image::{DynamicImage, GrayImage, ImageBuffer, ImageFormat, Luma, RgbImage};

use crate::error::{Error, Result};
use crate::maskcore::ImageGrid;

/// Integer label raster; 0 is background.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    pub height: usize,
    pub width: usize,
    pub labels: Vec<u32>,
}

impl LabelMap {
    pub fn new(height: usize, width: usize, labels: Vec<u32>) -> Result<Self> {
        if labels.len() != height * width {
            return Err(Error::InvalidArgument(format!(
                "label buffer has {} entries, expected {}",
                labels.len(),
                height * width
            )));
        }
        Ok(Self {
            height,
            width,
            labels,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }
}

fn grid_from_dynamic(img: DynamicImage) -> Result<ImageGrid> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    match img {
        DynamicImage::ImageLuma8(g) => ImageGrid::new(h, w, 1, g.into_raw()),
        DynamicImage::ImageRgb8(c) => ImageGrid::new(h, w, 3, c.into_raw()),
        other if other.color().has_color() => ImageGrid::new(h, w, 3, other.to_rgb8().into_raw()),
        other => ImageGrid::new(h, w, 1, other.to_luma8().into_raw()),
    }
}

fn dynamic_from_grid(grid: &ImageGrid) -> DynamicImage {
    let (h, w) = (grid.height() as u32, grid.width() as u32);
    match grid.channels() {
        1 => DynamicImage::ImageLuma8(
            GrayImage::from_raw(w, h, grid.pixels().to_vec()).expect("buffer matches dims"),
        ),
        _ => DynamicImage::ImageRgb8(
            RgbImage::from_raw(w, h, grid.pixels().to_vec()).expect("buffer matches dims"),
        ),
    }
}

pub fn decode_image(bytes: &[u8]) -> Result<ImageGrid> {
    let img = image::load_from_memory(bytes).map_err(|e| Error::InvalidImage(e.to_string()))?;
    grid_from_dynamic(img)
}

pub fn encode_png(grid: &ImageGrid) -> Vec<u8> {
    let mut out = Cursor::new(Vec::new());
    dynamic_from_grid(grid)
        .write_to(&mut out, ImageFormat::Png)
        .expect("in-memory PNG encoding");
    out.into_inner()
}

pub fn read_image(path: impl AsRef<Path>) -> Result<ImageGrid> {
    let path = path.as_ref();
    let img = image::open(path).map_err(|source| Error::Raster {
        path: path.to_path_buf(),
        source,
    })?;
    grid_from_dynamic(img)
}

pub fn write_image(path: impl AsRef<Path>, grid: &ImageGrid) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_png(grid)).map_err(|e| Error::io(path, e))
}

/// Reads an 8- or 16-bit grayscale raster as integer labels.
pub fn read_label_map(path: impl AsRef<Path>) -> Result<LabelMap> {
    let path = path.as_ref();
    let img = image::open(path).map_err(|source| Error::Raster {
        path: path.to_path_buf(),
        source,
    })?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let labels = match img {
        DynamicImage::ImageLuma8(g) => g.into_raw().into_iter().map(u32::from).collect(),
        DynamicImage::ImageLuma16(g) => g.into_raw().into_iter().map(u32::from).collect(),
        other if !other.color().has_color() => other
            .to_luma16()
            .into_raw()
            .into_iter()
            .map(u32::from)
            .collect(),
        _ => {
            return Err(Error::InvalidImage(format!(
                "{}: label rasters must be single-channel",
                path.display()
            )))
        }
    };
    LabelMap::new(h, w, labels)
}

/// Writes labels as 16-bit grayscale PNG (labels above 65535 are rejected).
pub fn write_label_map(path: impl AsRef<Path>, map: &LabelMap) -> Result<()> {
    let path = path.as_ref();
    let data: Vec<u16> = map
        .labels
        .iter()
        .map(|&l| u16::try_from(l))
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::OutOfRange("label exceeds 16 bits".into()))?;
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(map.width as u32, map.height as u32, data).expect("dims match");
    buf.save_with_format(path, ImageFormat::Png)
        .map_err(|source| Error::Raster {
            path: path.to_path_buf(),
            source,
        })
}
