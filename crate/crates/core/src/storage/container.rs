//! The `.imsk` mask container.
//!
//! Little-endian layout:
//!
//! ```text
//! header (22 bytes)
//!   magic        "IMSK"
//!   version      u16 = 1
//!   height       u32
//!   width        u32
//!   entry_count  u32
//!   reserved     u32 = 0
//! entry (repeated entry_count times)
//!   category_id  u32
//!   source       u8   0 = ground truth, 1 = interactive
//!   reserved     u8   0
//!   row_ptr      (height + 1) x u32
//!   col_idx      row_ptr[height] x u32
//! trailer
//!   crc32        u32 over every preceding byte
//! ```

use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::error::{Error, Result};
use crate::maskcore::{BinaryMask, LabeledMask, Source};

use super::csr::{encode_csr, validate_csr, CsrError, CsrMask};

pub const MAGIC: [u8; 4] = *b"IMSK";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 22;
pub const TRAILER_LEN: usize = 4;

#[derive(Debug, Error)]
pub enum ContainerError {
    #[error("bad magic {0:?}, expected \"IMSK\"")]
    BadMagic([u8; 4]),
    #[error("unsupported container version {0}")]
    UnsupportedVersion(u16),
    #[error("container truncated at byte {0}")]
    Truncated(usize),
    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    ChecksumMismatch { stored: u32, computed: u32 },
    #[error("nonzero reserved field at byte {0}")]
    Reserved(usize),
    #[error("unknown source flag {0}")]
    BadSource(u8),
    #[error("{0} unexpected trailing bytes")]
    TrailingBytes(usize),
    #[error("entry {index}: {source}")]
    Entry {
        index: usize,
        #[source]
        source: CsrError,
    },
    #[error("entry {index} is {found:?}, container is {expected:?}")]
    EntryDims {
        index: usize,
        expected: (usize, usize),
        found: (usize, usize),
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContainerEntry {
    pub category_id: u32,
    pub source: Source,
    pub row_ptr: Vec<u32>,
    pub col_idx: Vec<u32>,
}

impl ContainerEntry {
    pub fn from_mask(mask: &BinaryMask, category_id: u32, source: Source) -> Self {
        let csr = encode_csr(mask);
        Self {
            category_id,
            source,
            row_ptr: csr.row_ptr,
            col_idx: csr.col_idx,
        }
    }

    pub fn from_labeled(lm: &LabeledMask) -> Self {
        Self::from_mask(&lm.mask, lm.category_id, lm.source)
    }
}

/// All masks of one image, each stored as a CSR plane.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskContainer {
    pub height: usize,
    pub width: usize,
    pub entries: Vec<ContainerEntry>,
}

impl MaskContainer {
    pub fn new(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            entries: Vec::new(),
        }
    }

    pub fn from_labeled(height: usize, width: usize, masks: &[LabeledMask]) -> Result<Self> {
        let mut c = Self::new(height, width);
        for m in masks {
            c.push(m)?;
        }
        Ok(c)
    }

    pub fn push(&mut self, lm: &LabeledMask) -> Result<()> {
        if lm.mask.dims() != (self.height, self.width) {
            return Err(Error::DimensionMismatch {
                expected: (self.height, self.width),
                found: lm.mask.dims(),
            });
        }
        self.entries.push(ContainerEntry::from_labeled(lm));
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ContainerError> {
        for (index, e) in self.entries.iter().enumerate() {
            validate_csr(self.height, self.width, &e.row_ptr, &e.col_idx)
                .map_err(|source| ContainerError::Entry { index, source })?;
        }
        Ok(())
    }

    pub fn labeled_masks(&self) -> Result<Vec<LabeledMask>> {
        self.entries
            .iter()
            .map(|e| {
                let mask = CsrMask {
                    height: self.height,
                    width: self.width,
                    row_ptr: e.row_ptr.clone(),
                    col_idx: e.col_idx.clone(),
                }
                .decode()?;
                Ok(LabeledMask {
                    mask,
                    category_id: e.category_id,
                    source: e.source,
                    instance: None,
                })
            })
            .collect()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, ContainerError> {
        self.validate()?;
        let payload: usize = self
            .entries
            .iter()
            .map(|e| 6 + 4 * (e.row_ptr.len() + e.col_idx.len()))
            .sum();
        let mut out = Vec::with_capacity(HEADER_LEN + payload + TRAILER_LEN);
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.height as u32).to_le_bytes());
        out.extend_from_slice(&(self.width as u32).to_le_bytes());
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        out.extend_from_slice(&0u32.to_le_bytes());
        for e in &self.entries {
            out.extend_from_slice(&e.category_id.to_le_bytes());
            out.push(match e.source {
                Source::GroundTruth => 0,
                Source::Interactive => 1,
            });
            out.push(0);
            for v in e.row_ptr.iter().chain(&e.col_idx) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ContainerError> {
        if bytes.len() < 4 {
            return Err(ContainerError::Truncated(bytes.len()));
        }
        let magic: [u8; 4] = bytes[..4].try_into().unwrap();
        if magic != MAGIC {
            return Err(ContainerError::BadMagic(magic));
        }
        if bytes.len() < HEADER_LEN + TRAILER_LEN {
            return Err(ContainerError::Truncated(bytes.len()));
        }
        let (body, trailer) = bytes.split_at(bytes.len() - TRAILER_LEN);
        let stored = u32::from_le_bytes(trailer.try_into().unwrap());
        let computed = crc32fast::hash(body);

        let mut r = Reader { buf: body, pos: 4 };
        let version = r.u16()?;
        if version != VERSION {
            return Err(ContainerError::UnsupportedVersion(version));
        }
        if stored != computed {
            return Err(ContainerError::ChecksumMismatch { stored, computed });
        }
        let height = r.u32()? as usize;
        let width = r.u32()? as usize;
        let count = r.u32()? as usize;
        let reserved_at = r.pos;
        if r.u32()? != 0 {
            return Err(ContainerError::Reserved(reserved_at));
        }
        let mut entries = Vec::with_capacity(count.min(4096));
        for index in 0..count {
            let category_id = r.u32()?;
            let source = match r.u8()? {
                0 => Source::GroundTruth,
                1 => Source::Interactive,
                other => return Err(ContainerError::BadSource(other)),
            };
            let reserved_at = r.pos;
            if r.u8()? != 0 {
                return Err(ContainerError::Reserved(reserved_at));
            }
            let row_ptr = r.u32s(height + 1)?;
            let nnz = *row_ptr.last().unwrap() as usize;
            let col_idx = r.u32s(nnz)?;
            validate_csr(height, width, &row_ptr, &col_idx)
                .map_err(|source| ContainerError::Entry { index, source })?;
            entries.push(ContainerEntry {
                category_id,
                source,
                row_ptr,
                col_idx,
            });
        }
        if r.pos != body.len() {
            return Err(ContainerError::TrailingBytes(body.len() - r.pos));
        }
        Ok(Self {
            height,
            width,
            entries,
        })
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], ContainerError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or(ContainerError::Truncated(self.buf.len()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, ContainerError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, ContainerError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, ContainerError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u32s(&mut self, n: usize) -> Result<Vec<u32>, ContainerError> {
        let bytes = self.take(
            n.checked_mul(4)
                .ok_or(ContainerError::Truncated(self.buf.len()))?,
        )?;
        Ok(bytes
            .chunks_exact(4)
            .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
            .collect())
    }
}

pub fn write_container(path: impl AsRef<Path>, container: &MaskContainer) -> Result<()> {
    let path = path.as_ref();
    let bytes = container.to_bytes()?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_container(path: impl AsRef<Path>) -> Result<MaskContainer> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(MaskContainer::from_bytes(&bytes)?)
}
