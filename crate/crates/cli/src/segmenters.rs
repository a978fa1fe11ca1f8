use std::collections::hash_map::DefaultHasher;
use std::collections::HashMap;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::str::FromStr;
use std::sync::Arc;

use imis_core::maskcore::{ImageGrid, LabeledMask};
use imis_core::proposer::{
    CandidateMask, OracleSegmenter, ProcessSegmenter, PromptSet, ReferenceSegmenter, Segmenter,
    SegmenterError, DEFAULT_TOLERANCE,
};

use crate::Failure;

#[derive(Debug, Clone, PartialEq)]
pub enum SegmenterSpec {
    Reference(f64),
    /// Answers with the image's own ground truth.
    Oracle,
    Process(String),
}

impl FromStr for SegmenterSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "ref" {
            return Ok(SegmenterSpec::Reference(DEFAULT_TOLERANCE));
        }
        if s == "oracle" {
            return Ok(SegmenterSpec::Oracle);
        }
        if let Some(tol) = s.strip_prefix("ref:") {
            return match tol.parse::<f64>() {
                Ok(t) if t.is_finite() && t >= 0.0 => Ok(SegmenterSpec::Reference(t)),
                _ => Err(format!("bad tolerance {tol:?}")),
            };
        }
        if let Some(cmd) = s.strip_prefix("proc:") {
            if cmd.trim().is_empty() {
                return Err("proc: needs a command".into());
            }
            return Ok(SegmenterSpec::Process(cmd.to_owned()));
        }
        Err(format!(
            "expected ref, ref:TOLERANCE, oracle or proc:COMMAND, got {s:?}"
        ))
    }
}

impl fmt::Display for SegmenterSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SegmenterSpec::Reference(t) => write!(f, "ref:{t}"),
            SegmenterSpec::Oracle => f.write_str("oracle"),
            SegmenterSpec::Process(c) => write!(f, "proc:{c}"),
        }
    }
}

/// A segmenter shared by all images, or the per-image ground-truth oracle.
pub enum Engine {
    Shared(Arc<dyn Segmenter>),
    Oracle,
}

impl Engine {
    pub fn build(spec: &SegmenterSpec) -> Result<Engine, Failure> {
        Ok(match spec {
            SegmenterSpec::Reference(t) => Engine::Shared(Arc::new(ReferenceSegmenter::new(*t))),
            SegmenterSpec::Oracle => Engine::Oracle,
            SegmenterSpec::Process(cmd) => Engine::Shared(Arc::new(ProcessSegmenter::spawn(cmd)?)),
        })
    }

    pub fn shared(&self) -> Option<Arc<dyn Segmenter>> {
        match self {
            Engine::Shared(s) => Some(s.clone()),
            Engine::Oracle => None,
        }
    }

    pub fn for_image(&self, gt: &[LabeledMask]) -> Box<dyn Segmenter> {
        match self {
            Engine::Shared(s) => Box::new(s.clone()),
            Engine::Oracle => Box::new(OracleSegmenter::new(gt.to_vec())),
        }
    }
}

/// Per-image oracles looked up by image content, for stages that take a
/// single segmenter for many images.
#[derive(Default)]
pub struct OracleBank {
    oracles: HashMap<u64, OracleSegmenter>,
}

fn image_key(image: &ImageGrid) -> u64 {
    let mut h = DefaultHasher::new();
    image.hash(&mut h);
    h.finish()
}

impl OracleBank {
    pub fn insert(&mut self, image: &ImageGrid, gt: &[LabeledMask]) {
        self.oracles
            .entry(image_key(image))
            .or_insert_with(|| OracleSegmenter::new(Vec::new()))
            .objects
            .extend(gt.iter().cloned());
    }
}

impl Segmenter for OracleBank {
    fn segment(
        &self,
        image: &ImageGrid,
        prompts: &PromptSet,
        seed: u64,
    ) -> Result<Vec<CandidateMask>, SegmenterError> {
        match self.oracles.get(&image_key(image)) {
            Some(o) => o.segment(image, prompts, seed),
            None => Err(SegmenterError::Failed(
                "no ground truth for this image".into(),
            )),
        }
    }
}
