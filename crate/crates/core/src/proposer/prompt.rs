use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::maskcore::{BBox, BinaryMask};

/// Side length of the low-resolution prior mask.
pub const PRIOR_SIZE: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Positive,
    Negative,
}

/// One user (or simulated user) interaction, in image `(row, col)` space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Prompt {
    Click {
        row: usize,
        col: usize,
        polarity: Polarity,
    },
    Box(BBox),
    Text {
        category_id: u32,
    },
}

impl Prompt {
    pub fn positive(row: usize, col: usize) -> Self {
        Prompt::Click {
            row,
            col,
            polarity: Polarity::Positive,
        }
    }

    pub fn negative(row: usize, col: usize) -> Self {
        Prompt::Click {
            row,
            col,
            polarity: Polarity::Negative,
        }
    }

    pub fn in_bounds(&self, height: usize, width: usize) -> bool {
        match self {
            Prompt::Click { row, col, .. } => *row < height && *col < width,
            Prompt::Box(b) => {
                b.row_min <= b.row_max && b.col_min <= b.col_max && b.fits_within(height, width)
            }
            Prompt::Text { .. } => true,
        }
    }

    pub fn check_bounds(&self, height: usize, width: usize) -> Result<()> {
        if self.in_bounds(height, width) {
            Ok(())
        } else {
            Err(Error::OutOfRange(format!(
                "{self:?} lies outside the {height}x{width} image"
            )))
        }
    }
}

/// Text prompt wording for a category name.
pub fn render_text_prompt(category: &str) -> String {
    format!("A segmentation area of a {category}")
}

/// Ordered prompts for one segmenter query plus an optional 256x256 prior
/// (the previous prediction at low resolution).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PromptSet {
    pub prompts: Vec<Prompt>,
    pub prior: Option<BinaryMask>,
}

impl PromptSet {
    pub fn new(prompts: Vec<Prompt>) -> Self {
        Self {
            prompts,
            prior: None,
        }
    }

    pub fn single(prompt: Prompt) -> Self {
        Self::new(vec![prompt])
    }

    pub fn with_prior(mut self, prior: BinaryMask) -> Self {
        self.prior = Some(prior);
        self
    }

    pub fn validate(&self, height: usize, width: usize) -> Result<()> {
        for p in &self.prompts {
            p.check_bounds(height, width)?;
        }
        if let Some(prior) = &self.prior {
            if prior.dims() != (PRIOR_SIZE, PRIOR_SIZE) {
                return Err(Error::DimensionMismatch {
                    expected: (PRIOR_SIZE, PRIOR_SIZE),
                    found: prior.dims(),
                });
            }
        }
        Ok(())
    }

    pub fn is_text_only(&self) -> bool {
        !self.prompts.is_empty()
            && self
                .prompts
                .iter()
                .all(|p| matches!(p, Prompt::Text { .. }))
    }
}
