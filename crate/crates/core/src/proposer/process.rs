//! Line-delimited JSON protocol for segmenters running as external processes.
//!
//! Each request is one line: `{"image_ref", "prompts", "prior", "seed"}`,
//! where `image_ref` is a path to a PNG readable by the worker and `prior` is
//! an optional CSR payload. Each response is one line:
//! `{"masks": [CSR payload], "confidences": [float]}`, optionally with an
//! `"error"` string instead of results.

use std::collections::HashMap;
use std::hash::{DefaultHasher, Hash, Hasher};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::maskcore::ImageGrid;
use crate::storage::{encode_csr, read_image, write_image, CsrMask};

use super::prompt::{Prompt, PromptSet};
use super::segmenter::{CandidateMask, Segmenter, SegmenterError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentRequest {
    pub image_ref: String,
    pub prompts: Vec<Prompt>,
    #[serde(default)]
    pub prior: Option<CsrMask>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SegmentResponse {
    pub masks: Vec<CsrMask>,
    pub confidences: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl SegmentResponse {
    fn failure(message: impl Into<String>) -> Self {
        Self {
            error: Some(message.into()),
            ..Self::default()
        }
    }

    pub fn into_candidates(self) -> std::result::Result<Vec<CandidateMask>, SegmenterError> {
        if let Some(e) = self.error {
            return Err(SegmenterError::Failed(e));
        }
        if self.masks.len() != self.confidences.len() {
            return Err(SegmenterError::Failed(format!(
                "{} masks but {} confidences",
                self.masks.len(),
                self.confidences.len()
            )));
        }
        self.masks
            .into_iter()
            .zip(self.confidences)
            .map(|(m, conf)| {
                let mask = m
                    .decode()
                    .map_err(|e| SegmenterError::Failed(e.to_string()))?;
                CandidateMask::new(mask, conf).map_err(|e| SegmenterError::Failed(e.to_string()))
            })
            .collect()
    }
}

struct Pipe {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

/// A [`Segmenter`] backed by a long-lived child process speaking the
/// line-delimited protocol. Requests are serialized over a single pipe.
pub struct ProcessSegmenter {
    pipe: Mutex<Pipe>,
    scratch: tempfile::TempDir,
    images: Mutex<HashMap<u64, PathBuf>>,
}

impl ProcessSegmenter {
    /// Spawns `command` (program followed by whitespace-separated arguments).
    pub fn spawn(command: &str) -> Result<Self> {
        let mut parts = command.split_whitespace();
        let program = parts
            .next()
            .ok_or_else(|| Error::InvalidArgument("empty segmenter command".into()))?;
        let mut child = Command::new(program)
            .args(parts)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::io(program, e))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        let scratch = tempfile::tempdir().map_err(|e| Error::io(std::env::temp_dir(), e))?;
        Ok(Self {
            pipe: Mutex::new(Pipe {
                child,
                stdin,
                stdout,
            }),
            scratch,
            images: Mutex::new(HashMap::new()),
        })
    }

    fn image_ref(&self, image: &ImageGrid) -> std::result::Result<PathBuf, SegmenterError> {
        let mut hasher = DefaultHasher::new();
        image.hash(&mut hasher);
        let key = hasher.finish();
        let mut images = self.images.lock().expect("image cache lock");
        if let Some(p) = images.get(&key) {
            return Ok(p.clone());
        }
        let path = self.scratch.path().join(format!("{key:016x}.png"));
        write_image(&path, image).map_err(|e| SegmenterError::Failed(e.to_string()))?;
        images.insert(key, path.clone());
        Ok(path)
    }

    fn round_trip(&self, line: &str) -> io::Result<String> {
        let mut pipe = self.pipe.lock().expect("pipe lock");
        pipe.stdin.write_all(line.as_bytes())?;
        pipe.stdin.write_all(b"\n")?;
        pipe.stdin.flush()?;
        let mut reply = String::new();
        if pipe.stdout.read_line(&mut reply)? == 0 {
            return Err(io::Error::new(
                io::ErrorKind::UnexpectedEof,
                "segmenter process closed its output",
            ));
        }
        Ok(reply)
    }
}

impl Segmenter for ProcessSegmenter {
    fn segment(
        &self,
        image: &ImageGrid,
        prompts: &PromptSet,
        seed: u64,
    ) -> std::result::Result<Vec<CandidateMask>, SegmenterError> {
        let path = self.image_ref(image)?;
        let request = SegmentRequest {
            image_ref: path.to_string_lossy().into_owned(),
            prompts: prompts.prompts.clone(),
            prior: prompts.prior.as_ref().map(encode_csr),
            seed,
        };
        let line = serde_json::to_string(&request).expect("request serializes");
        let reply = self
            .round_trip(&line)
            .map_err(|e| SegmenterError::Failed(e.to_string()))?;
        let response: SegmentResponse = serde_json::from_str(&reply)
            .map_err(|e| SegmenterError::Failed(format!("malformed response: {e}")))?;
        response.into_candidates()
    }
}

impl Drop for ProcessSegmenter {
    fn drop(&mut self) {
        if let Ok(pipe) = self.pipe.get_mut() {
            let _ = pipe.child.kill();
            let _ = pipe.child.wait();
        }
    }
}

fn answer(
    segmenter: &dyn Segmenter,
    cache: &mut Option<(String, ImageGrid)>,
    request: SegmentRequest,
) -> SegmentResponse {
    if cache.as_ref().is_none_or(|(p, _)| *p != request.image_ref) {
        match read_image(Path::new(&request.image_ref)) {
            Ok(img) => *cache = Some((request.image_ref.clone(), img)),
            Err(e) => return SegmentResponse::failure(e.to_string()),
        }
    }
    let image = &cache.as_ref().expect("cached above").1;
    let prior = match request.prior.map(|p| p.decode()).transpose() {
        Ok(p) => p,
        Err(e) => return SegmentResponse::failure(e.to_string()),
    };
    let prompts = PromptSet {
        prompts: request.prompts,
        prior,
    };
    if let Err(e) = prompts.validate(image.height(), image.width()) {
        return SegmentResponse::failure(e.to_string());
    }
    match segmenter.segment(image, &prompts, request.seed) {
        Ok(cands) => SegmentResponse {
            masks: cands.iter().map(|c| encode_csr(&c.mask)).collect(),
            confidences: cands.iter().map(|c| c.confidence).collect(),
            error: None,
        },
        Err(e) => SegmentResponse::failure(e.to_string()),
    }
}

/// Worker side of the protocol: answers requests from `input` until EOF.
pub fn serve_stdio(
    segmenter: &dyn Segmenter,
    input: impl BufRead,
    mut output: impl Write,
) -> io::Result<()> {
    let mut cache = None;
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let response = match serde_json::from_str::<SegmentRequest>(&line) {
            Ok(req) => answer(segmenter, &mut cache, req),
            Err(e) => SegmentResponse::failure(format!("malformed request: {e}")),
        };
        serde_json::to_writer(&mut output, &response)?;
        output.write_all(b"\n")?;
        output.flush()?;
    }
    Ok(())
}
