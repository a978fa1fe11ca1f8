use std::collections::BTreeMap;
use std::time::{SystemTime, UNIX_EPOCH};

use imis_core::interact::{replay_prompts, replay_step};
use imis_core::maskcore::{dice, BinaryMask, ImageGrid};
use imis_core::proposer::{CandidateMask, Prompt, PromptSet, Segmenter, SegmenterError};
use imis_core::storage::{encode_csr, CsrMask};
use serde::{Deserialize, Serialize};

/// Wraps the configured segmenter so that text-only prompts, which a
/// classical segmenter cannot interpret, are answered from the attached
/// ground truth when there is one.
pub struct GtFallback<'a> {
    pub inner: &'a dyn Segmenter,
    pub gt: Option<&'a BinaryMask>,
    /// Category of the ground truth; `None` matches any text prompt.
    pub gt_category: Option<u32>,
}

impl Segmenter for GtFallback<'_> {
    fn segment(
        &self,
        image: &ImageGrid,
        prompts: &PromptSet,
        seed: u64,
    ) -> Result<Vec<CandidateMask>, SegmenterError> {
        match self.inner.segment(image, prompts, seed) {
            Err(SegmenterError::Unsupported(msg)) => {
                let Some(gt) = self.gt.filter(|_| prompts.is_text_only()) else {
                    return Err(SegmenterError::Unsupported(msg));
                };
                let matches = prompts.prompts.iter().any(|p| match p {
                    Prompt::Text { category_id } => {
                        self.gt_category.is_none_or(|c| c == *category_id)
                    }
                    _ => false,
                });
                Ok(if matches {
                    vec![CandidateMask {
                        mask: gt.clone(),
                        confidence: 1.0,
                    }]
                } else {
                    Vec::new()
                })
            }
            other => other,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub prediction: BinaryMask,
    pub confidence: f64,
    pub dice: Option<f64>,
}

/// A live annotation session.
///
/// The stored steps are always what [`LiveSession::replay`] computes from
/// the image, history, segmenter and seed.
#[derive(Debug, Clone)]
pub struct LiveSession {
    pub id: String,
    pub image: ImageGrid,
    pub gt: Option<BinaryMask>,
    pub gt_category: Option<u32>,
    /// Category names accepted by text prompts.
    pub categories: BTreeMap<String, u32>,
    pub seed: u64,
    pub history: Vec<Prompt>,
    pub steps: Vec<Step>,
    pub created_unix: u64,
    pub touched_unix: u64,
}

pub fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

impl LiveSession {
    pub fn new(id: String, image: ImageGrid, seed: u64) -> Self {
        let now = unix_now();
        Self {
            id,
            image,
            gt: None,
            gt_category: None,
            categories: BTreeMap::new(),
            seed,
            history: Vec::new(),
            steps: Vec::new(),
            created_unix: now,
            touched_unix: now,
        }
    }

    fn segmenter<'a>(&'a self, inner: &'a dyn Segmenter) -> GtFallback<'a> {
        GtFallback {
            inner,
            gt: self.gt.as_ref(),
            gt_category: self.gt_category,
        }
    }

    fn step(&self, prediction: BinaryMask, confidence: f64) -> imis_core::Result<Step> {
        let dice = self
            .gt
            .as_ref()
            .map(|gt| dice(&prediction, gt))
            .transpose()?;
        Ok(Step {
            prediction,
            confidence,
            dice,
        })
    }

    /// Appends `prompt` and runs one step. On error the session is unchanged.
    pub fn add(&mut self, prompt: Prompt, segmenter: &dyn Segmenter) -> imis_core::Result<()> {
        let (h, w) = self.image.dims();
        prompt.check_bounds(h, w)?;
        let mut history = self.history.clone();
        history.push(prompt);
        let previous = self.steps.last().map(|s| &s.prediction);
        let (mask, conf) = replay_step(
            &self.image,
            &history,
            previous,
            &self.segmenter(segmenter),
            self.seed,
            history.len() - 1,
        )?;
        let step = self.step(mask, conf)?;
        self.history = history;
        self.steps.push(step);
        self.touched_unix = unix_now();
        Ok(())
    }

    /// Drops the last prompt and recomputes every step from the remaining
    /// history. Returns `false` when the history is empty.
    pub fn undo(&mut self, segmenter: &dyn Segmenter) -> imis_core::Result<bool> {
        if self.history.is_empty() {
            return Ok(false);
        }
        let mut history = self.history.clone();
        history.pop();
        let steps = self.replay_history(&history, segmenter)?;
        self.history = history;
        self.steps = steps;
        self.touched_unix = unix_now();
        Ok(true)
    }

    fn replay_history(
        &self,
        history: &[Prompt],
        segmenter: &dyn Segmenter,
    ) -> imis_core::Result<Vec<Step>> {
        replay_prompts(&self.image, history, &self.segmenter(segmenter), self.seed)?
            .into_iter()
            .map(|(m, c)| self.step(m, c))
            .collect()
    }

    /// Steps recomputed from scratch.
    pub fn replay(&self, segmenter: &dyn Segmenter) -> imis_core::Result<Vec<Step>> {
        self.replay_history(&self.history, segmenter)
    }

    pub fn prediction(&self) -> Option<&Step> {
        self.steps.last()
    }

    pub fn state(&self) -> SessionState {
        let (height, width) = self.image.dims();
        let last = self.prediction();
        SessionState {
            id: self.id.clone(),
            height,
            width,
            seed: self.seed,
            history: self.history.clone(),
            mask: last.map(|s| encode_csr(&s.prediction)),
            confidence: last.map(|s| s.confidence),
            dice_trace: self.steps.iter().filter_map(|s| s.dice).collect(),
            has_gt: self.gt.is_some(),
            created_unix: self.created_unix,
            touched_unix: self.touched_unix,
        }
    }

    pub fn payload(&self) -> PredictionPayload {
        let last = self.prediction();
        PredictionPayload {
            id: self.id.clone(),
            history_len: self.history.len(),
            mask: last.map(|s| encode_csr(&s.prediction)),
            confidence: last.map(|s| s.confidence),
            dice: last.and_then(|s| s.dice),
        }
    }
}

/// Response to a prompt or undo.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionPayload {
    pub id: String,
    pub history_len: usize,
    /// `null` when the history is empty.
    pub mask: Option<CsrMask>,
    pub confidence: Option<f64>,
    /// Dice against the attached ground truth.
    pub dice: Option<f64>,
}

/// Full snapshot returned by `GET /sessions/{id}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub id: String,
    pub height: usize,
    pub width: usize,
    pub seed: u64,
    pub history: Vec<Prompt>,
    pub mask: Option<CsrMask>,
    pub confidence: Option<f64>,
    pub dice_trace: Vec<f64>,
    pub has_gt: bool,
    pub created_unix: u64,
    pub touched_unix: u64,
}
