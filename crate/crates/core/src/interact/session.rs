use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::maskcore::{dice, BinaryMask, ImageGrid, LabeledMask};
use crate::proposer::{best_candidate, query, Prompt, PromptSet, Segmenter, PRIOR_SIZE};
use crate::seed;

use super::prompts::{
    error_region, sample_bbox, sample_correction_click, sample_initial_click, ClickPlacement,
    DEFAULT_JITTER,
};

pub const DEFAULT_ROUNDS: usize = 8;

/// Prompts issued in the first round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum InitialPrompt {
    #[default]
    #[serde(rename = "click")]
    Click,
    #[serde(rename = "box")]
    Box,
    #[serde(rename = "text")]
    Text,
    #[serde(rename = "text+click")]
    TextClick,
    #[serde(rename = "box+click")]
    BoxClick,
}

impl InitialPrompt {
    pub const ALL: [InitialPrompt; 5] = [
        InitialPrompt::Click,
        InitialPrompt::Box,
        InitialPrompt::Text,
        InitialPrompt::TextClick,
        InitialPrompt::BoxClick,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            InitialPrompt::Click => "click",
            InitialPrompt::Box => "box",
            InitialPrompt::Text => "text",
            InitialPrompt::TextClick => "text+click",
            InitialPrompt::BoxClick => "box+click",
        }
    }
}

impl fmt::Display for InitialPrompt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for InitialPrompt {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        InitialPrompt::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown strategy {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Strategy {
    pub initial: InitialPrompt,
    /// Total rounds K, including the initial one.
    pub rounds: usize,
    /// Box coordinate jitter in pixels.
    pub jitter: usize,
    pub placement: ClickPlacement,
}

impl Default for Strategy {
    fn default() -> Self {
        Self {
            initial: InitialPrompt::Click,
            rounds: DEFAULT_ROUNDS,
            jitter: DEFAULT_JITTER,
            placement: ClickPlacement::Uniform,
        }
    }
}

/// One executed round.
#[derive(Debug, Clone, PartialEq)]
pub struct Round {
    /// Prompts appended in this round.
    pub added: Vec<Prompt>,
    pub prediction: BinaryMask,
    pub confidence: f64,
    pub dice: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    pub strategy: Strategy,
    pub seed: u64,
    /// Full prompt history in order.
    pub prompts: Vec<Prompt>,
    pub rounds: Vec<Round>,
    /// Dice after each of the K rounds; rounds after an early stop repeat
    /// the last value.
    pub dice_trace: Vec<f64>,
    /// Round (1-based) after which the prediction matched the target.
    pub stopped_at: Option<usize>,
}

impl Session {
    pub fn final_prediction(&self) -> &BinaryMask {
        &self
            .rounds
            .last()
            .expect("sessions run at least one round")
            .prediction
    }
}

fn spans(len: usize, out: usize, i: usize) -> (usize, usize) {
    let (a, b) = (i * len / out, (i + 1) * len / out);
    if b > a {
        (a, b)
    } else {
        let c = ((2 * i + 1) * len) / (2 * out);
        (c, c + 1)
    }
}

/// Block-majority resampling to `out_h x out_w`; a block is foreground when
/// at least half its pixels are. When enlarging, each output pixel copies
/// the nearest source pixel.
pub fn downsample_mask(mask: &BinaryMask, out_h: usize, out_w: usize) -> BinaryMask {
    let (h, w) = mask.dims();
    if (h, w) == (out_h, out_w) {
        return mask.clone();
    }
    // Summed-area table with a zero border.
    let mut sat = vec![0u32; (h + 1) * (w + 1)];
    for r in 0..h {
        let mut run = 0u32;
        for c in 0..w {
            run += mask.get(r, c) as u32;
            sat[(r + 1) * (w + 1) + c + 1] = sat[r * (w + 1) + c + 1] + run;
        }
    }
    let at = |r: usize, c: usize| sat[r * (w + 1) + c];
    let col_spans: Vec<(usize, usize)> = (0..out_w).map(|j| spans(w, out_w, j)).collect();
    BinaryMask::from_fn(out_h, out_w, |i, j| {
        let (r0, r1) = spans(h, out_h, i);
        let (c0, c1) = col_spans[j];
        let count = at(r1, c1) + at(r0, c0) - at(r0, c1) - at(r1, c0);
        2 * count as usize >= (r1 - r0) * (c1 - c0)
    })
}

/// Best candidate of one query, or an empty mask at confidence 0 when the
/// segmenter has no answer.
pub fn predict(
    segmenter: &dyn Segmenter,
    image: &ImageGrid,
    set: &PromptSet,
    seed: u64,
) -> Result<(BinaryMask, f64)> {
    let cands = query(segmenter, image, set, seed)?;
    Ok(match best_candidate(&cands) {
        Some(c) => (c.mask.clone(), c.confidence),
        None => (BinaryMask::new(image.height(), image.width()), 0.0),
    })
}

/// One prediction per prefix of `history`: step `i` sends prompts `0..=i`
/// with the previous step's prediction as prior (none for the first step)
/// and seed `derive(seed, [i + 1])`. Live sessions are defined by this.
pub fn replay_prompts(
    image: &ImageGrid,
    history: &[Prompt],
    segmenter: &dyn Segmenter,
    seed: u64,
) -> Result<Vec<(BinaryMask, f64)>> {
    let mut steps: Vec<(BinaryMask, f64)> = Vec::with_capacity(history.len());
    for i in 0..history.len() {
        steps.push(replay_step(
            image,
            history,
            steps.last().map(|s| &s.0),
            segmenter,
            seed,
            i,
        )?);
    }
    Ok(steps)
}

/// Step `i` of [`replay_prompts`] given the prediction of step `i - 1`.
pub fn replay_step(
    image: &ImageGrid,
    history: &[Prompt],
    previous: Option<&BinaryMask>,
    segmenter: &dyn Segmenter,
    seed: u64,
    i: usize,
) -> Result<(BinaryMask, f64)> {
    let mut set = PromptSet::new(history[..=i].to_vec());
    set.prior = previous.map(|p| downsample_mask(p, PRIOR_SIZE, PRIOR_SIZE));
    predict(segmenter, image, &set, seed::derive(seed, &[i as u64 + 1]))
}

/// Runs a simulated interactive session of `strategy.rounds` rounds.
///
/// Round 1 issues the strategy's initial prompts. Each later round appends
/// one correction click drawn from the previous prediction's error region
/// and passes that prediction, resampled to 256x256, as the prior. The
/// session stops early once the prediction equals the target. Round `k`
/// draws from its own stream derived from `(seed, k)`, and the segmenter
/// is called with the same derived seed.
pub fn run_session(
    image: &ImageGrid,
    target: &LabeledMask,
    segmenter: &dyn Segmenter,
    strategy: &Strategy,
    seed: u64,
) -> Result<Session> {
    if strategy.rounds == 0 {
        return Err(Error::InvalidArgument(
            "a session needs at least one round".into(),
        ));
    }
    let truth = &target.mask;
    if truth.dims() != image.dims() {
        return Err(Error::DimensionMismatch {
            expected: image.dims(),
            found: truth.dims(),
        });
    }
    if truth.is_empty() {
        return Err(Error::EmptyMask);
    }

    let mut session = Session {
        strategy: *strategy,
        seed,
        prompts: Vec::new(),
        rounds: Vec::new(),
        dice_trace: Vec::with_capacity(strategy.rounds),
        stopped_at: None,
    };
    for k in 1..=strategy.rounds {
        let round_seed = seed::derive(seed, &[k as u64]);
        let mut rng = seed::rng(round_seed, &[]);
        let mut set = PromptSet::default();
        let added = if k == 1 {
            match strategy.initial {
                InitialPrompt::Click => {
                    vec![sample_initial_click(truth, strategy.placement, &mut rng)?]
                }
                InitialPrompt::Box => vec![sample_bbox(truth, strategy.jitter, &mut rng)?],
                InitialPrompt::Text => vec![Prompt::Text {
                    category_id: target.category_id,
                }],
                InitialPrompt::TextClick => vec![
                    Prompt::Text {
                        category_id: target.category_id,
                    },
                    sample_initial_click(truth, strategy.placement, &mut rng)?,
                ],
                InitialPrompt::BoxClick => {
                    let b = sample_bbox(truth, strategy.jitter, &mut rng)?;
                    vec![
                        b,
                        sample_initial_click(truth, strategy.placement, &mut rng)?,
                    ]
                }
            }
        } else {
            let prev = &session.rounds.last().expect("round 1 ran").prediction;
            let err = error_region(prev, truth)?;
            set.prior = Some(downsample_mask(prev, PRIOR_SIZE, PRIOR_SIZE));
            vec![sample_correction_click(&err, &mut rng)?]
        };
        session.prompts.extend_from_slice(&added);
        set.prompts = session.prompts.clone();
        let (prediction, confidence) = predict(segmenter, image, &set, round_seed)?;
        let d = dice(&prediction, truth)?;
        let done = prediction == *truth;
        session.rounds.push(Round {
            added,
            prediction,
            confidence,
            dice: d,
        });
        session.dice_trace.push(d);
        if done {
            session.stopped_at = Some(k);
            break;
        }
    }
    let last = *session.dice_trace.last().expect("at least one round");
    session.dice_trace.resize(strategy.rounds, last);
    Ok(session)
}
