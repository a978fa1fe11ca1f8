use crate::error::{Error, Result};

/// An 8-bit raster with one (grayscale) or three (RGB) interleaved channels,
/// stored row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ImageGrid {
    height: usize,
    width: usize,
    channels: u8,
    pixels: Vec<u8>,
}

impl ImageGrid {
    pub fn new(height: usize, width: usize, channels: u8, pixels: Vec<u8>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidImage(format!(
                "image must be at least 1x1, got {height}x{width}"
            )));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidImage(format!(
                "unsupported channel count {channels}"
            )));
        }
        let expected = height * width * channels as usize;
        if pixels.len() != expected {
            return Err(Error::InvalidImage(format!(
                "pixel buffer has {} bytes, expected {expected}",
                pixels.len()
            )));
        }
        Ok(Self {
            height,
            width,
            channels,
            pixels,
        })
    }

    pub fn gray(height: usize, width: usize, pixels: Vec<u8>) -> Result<Self> {
        Self::new(height, width, 1, pixels)
    }

    /// Grayscale image whose pixel values are produced by `f(row, col)`.
    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        assert!(height > 0 && width > 0, "image must be at least 1x1");
        let mut pixels = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                pixels.push(f(r, c));
            }
        }
        Self {
            height,
            width,
            channels: 1,
            pixels,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn channels(&self) -> u8 {
        self.channels
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        row < self.height && col < self.width
    }

    /// Single-channel intensities; RGB is reduced by ITU-R BT.601 luminance.
    pub fn luminance(&self) -> Vec<u8> {
        match self.channels {
            1 => self.pixels.clone(),
            _ => self
                .pixels
                .chunks_exact(3)
                .map(|px| {
                    let y = 0.299 * px[0] as f64 + 0.587 * px[1] as f64 + 0.114 * px[2] as f64;
                    y.round().clamp(0.0, 255.0) as u8
                })
                .collect(),
        }
    }

    /// Applies `f` to every channel sample, keeping the layout.
    pub fn map_samples(&self, f: impl Fn(u8) -> u8) -> Self {
        Self {
            height: self.height,
            width: self.width,
            channels: self.channels,
            pixels: self.pixels.iter().map(|&p| f(p)).collect(),
        }
    }
}
