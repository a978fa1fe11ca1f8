use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::maskcore::BinaryMask;

/// Compressed-sparse-row form of a binary mask. Presence is the value, so
/// no values array is stored.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CsrMask {
    pub height: usize,
    pub width: usize,
    pub row_ptr: Vec<u32>,
    pub col_idx: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CsrError {
    #[error("row_ptr has length {found}, expected {expected}")]
    RowPtrLength { expected: usize, found: usize },
    #[error("row_ptr must start at 0, starts at {0}")]
    RowPtrStart(u32),
    #[error("row_ptr decreases at row {row}")]
    RowPtrNotMonotone { row: usize },
    #[error("row_ptr ends at {end} but col_idx has {len} entries")]
    RowPtrEnd { end: u32, len: usize },
    #[error("column {col} in row {row} is out of range for width {width}")]
    ColumnOutOfRange { row: usize, col: u32, width: usize },
    #[error("columns in row {row} are not strictly increasing")]
    ColumnsNotIncreasing { row: usize },
    #[error("mask dimensions {height}x{width} exceed the u32 index range")]
    TooLarge { height: usize, width: usize },
}

pub fn encode_csr(mask: &BinaryMask) -> CsrMask {
    let mut row_ptr = Vec::with_capacity(mask.height() + 1);
    let mut col_idx = Vec::with_capacity(mask.count());
    row_ptr.push(0);
    for r in 0..mask.height() {
        col_idx.extend(mask.row_ones(r).map(|c| c as u32));
        row_ptr.push(col_idx.len() as u32);
    }
    CsrMask {
        height: mask.height(),
        width: mask.width(),
        row_ptr,
        col_idx,
    }
}

/// Checks the structural invariants without building the mask.
pub fn validate_csr(
    height: usize,
    width: usize,
    row_ptr: &[u32],
    col_idx: &[u32],
) -> Result<(), CsrError> {
    if height
        .checked_mul(width)
        .is_none_or(|n| n > u32::MAX as usize)
    {
        return Err(CsrError::TooLarge { height, width });
    }
    if row_ptr.len() != height + 1 {
        return Err(CsrError::RowPtrLength {
            expected: height + 1,
            found: row_ptr.len(),
        });
    }
    if row_ptr[0] != 0 {
        return Err(CsrError::RowPtrStart(row_ptr[0]));
    }
    for r in 0..height {
        if row_ptr[r + 1] < row_ptr[r] {
            return Err(CsrError::RowPtrNotMonotone { row: r });
        }
    }
    if row_ptr[height] as usize != col_idx.len() {
        return Err(CsrError::RowPtrEnd {
            end: row_ptr[height],
            len: col_idx.len(),
        });
    }
    for r in 0..height {
        let cols = &col_idx[row_ptr[r] as usize..row_ptr[r + 1] as usize];
        for (i, &c) in cols.iter().enumerate() {
            if c as usize >= width {
                return Err(CsrError::ColumnOutOfRange {
                    row: r,
                    col: c,
                    width,
                });
            }
            if i > 0 && cols[i - 1] >= c {
                return Err(CsrError::ColumnsNotIncreasing { row: r });
            }
        }
    }
    Ok(())
}

pub fn decode_csr(
    height: usize,
    width: usize,
    row_ptr: &[u32],
    col_idx: &[u32],
) -> Result<BinaryMask, CsrError> {
    validate_csr(height, width, row_ptr, col_idx)?;
    let mut mask = BinaryMask::new(height, width);
    for r in 0..height {
        for &c in &col_idx[row_ptr[r] as usize..row_ptr[r + 1] as usize] {
            mask.set(r, c as usize, true);
        }
    }
    Ok(mask)
}

impl CsrMask {
    pub fn decode(&self) -> Result<BinaryMask, CsrError> {
        decode_csr(self.height, self.width, &self.row_ptr, &self.col_idx)
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }
}

impl From<&BinaryMask> for CsrMask {
    fn from(mask: &BinaryMask) -> Self {
        encode_csr(mask)
    }
}
