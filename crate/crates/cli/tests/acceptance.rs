//! Acceptance suite. Runs every primary criterion with its time limit and
//! prints one PASS/FAIL line per criterion; exits nonzero if any fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use imis_core::fixtures::{blob_fixture, disk_fixture, write_stats_fixture, DISK_CENTER};
use imis_core::granularity::{
    apply_quality_policy, correct_with_gt, CorrectionParams, QualityPolicy, SubsetMasks,
};
use imis_core::ingest::{
    assign_splits, filter_aspect_ratio, filter_foreground, split_counts, IngestConfig,
};
use imis_core::interact::{
    replay_prompts, robustness_sweep, run_session, InitialPrompt, Protocol, Strategy, SweepConfig,
    SweepImage, DEFAULT_ROUNDS,
};
use imis_core::maskcore::{BinaryMask, ImageGrid, LabeledMask, Source};
use imis_core::metrics::{
    combined_loss, dataset_stats, dice_loss, focal_loss, ProbMap, DICE_WEIGHT, FOCAL_WEIGHT,
};
use imis_core::proposer::{
    background_filter, confidence_filter, generate_interactive_masks, nms, CandidateMask,
    GenerationParams, OracleSegmenter, Polarity, Prompt, PromptSet, ReferenceSegmenter, Segmenter,
    SegmenterError,
};
use imis_core::storage::{
    decode_csr, encode_csr, read_container, write_container, ImageRecord, Manifest, MaskContainer,
    Split,
};

type Check = Result<String, String>;

/// Image height, width and `(pixels, is_ground_truth)` per mask.
type Construction = (usize, usize, &'static [(usize, bool)]);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)*) => {{
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($msg)*));
        }
    }};
}

struct Criterion {
    name: &'static str,
    limit: Option<Duration>,
    run: fn() -> Check,
}

const CRITERIA: &[Criterion] = &[
    Criterion {
        name: "csr-round-trip",
        limit: Some(Duration::from_secs(10)),
        run: csr_round_trip,
    },
    Criterion {
        name: "nms-oracle",
        limit: Some(Duration::from_secs(30)),
        run: nms_oracle,
    },
    Criterion {
        name: "generation-blobs",
        limit: Some(Duration::from_secs(60)),
        run: generation_blobs,
    },
    Criterion {
        name: "granularity-rules",
        limit: Some(Duration::from_secs(30)),
        run: granularity_rules,
    },
    Criterion {
        name: "filter-boundaries",
        limit: None,
        run: filter_boundaries,
    },
    Criterion {
        name: "interaction-laws",
        limit: Some(Duration::from_secs(120)),
        run: interaction_laws,
    },
    Criterion {
        name: "loss-values",
        limit: None,
        run: loss_values,
    },
    Criterion {
        name: "stats-fixture",
        limit: None,
        run: stats_fixture,
    },
    Criterion {
        name: "split-policy",
        limit: None,
        run: split_policy,
    },
    Criterion {
        name: "service-replay",
        limit: None,
        run: service_replay,
    },
];

fn main() -> ExitCode {
    let mut failed = 0;
    for c in CRITERIA {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(c.run))
            .unwrap_or_else(|p| Err(format!("panicked: {}", panic_text(&p))));
        let elapsed = start.elapsed();
        let outcome = match (outcome, c.limit) {
            (Ok(_), Some(limit)) if elapsed > limit => {
                Err(format!("took {elapsed:.2?}, limit {limit:?}"))
            }
            (o, _) => o,
        };
        match outcome {
            Ok(detail) => println!("PASS {:<20} {:>9.2?}  {detail}", c.name, elapsed),
            Err(why) => {
                failed += 1;
                println!("FAIL {:<20} {:>9.2?}  {why}", c.name, elapsed);
            }
        }
    }
    println!("{} passed, {failed} failed", CRITERIA.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn panic_text(p: &Box<dyn std::any::Any + Send>) -> String {
    p.downcast_ref::<String>()
        .cloned()
        .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
        .unwrap_or_default()
}

fn rect(h: usize, w: usize, r0: usize, c0: usize, rh: usize, rw: usize) -> BinaryMask {
    BinaryMask::from_fn(h, w, |r, c| {
        (r0..r0 + rh).contains(&r) && (c0..c0 + rw).contains(&c)
    })
}

/// Pixel-scan IoU; two empty masks count as identical.
fn naive_iou(a: &BinaryMask, b: &BinaryMask) -> f64 {
    let (mut inter, mut union) = (0usize, 0usize);
    for r in 0..a.height() {
        for c in 0..a.width() {
            let (x, y) = (a.get(r, c), b.get(r, c));
            inter += (x && y) as usize;
            union += (x || y) as usize;
        }
    }
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

fn csr_round_trip() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC5);
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut containers = 0;
    for i in 0..1000 {
        let (h, w) = (rng.gen_range(1..=512), rng.gen_range(1..=512));
        let density: f64 = [0.0, 0.01, 0.3, 0.5, 0.97, 1.0][i % 6];
        let mask = BinaryMask::from_fn(h, w, |_, _| rng.gen_bool(density));
        let csr = encode_csr(&mask);
        let mut row_ptr = vec![0u32];
        let mut col_idx = Vec::new();
        for r in 0..h {
            for c in 0..w {
                if mask.get(r, c) {
                    col_idx.push(c as u32);
                }
            }
            row_ptr.push(col_idx.len() as u32);
        }
        ensure!(
            csr.row_ptr == row_ptr && csr.col_idx == col_idx,
            "mask {i}: CSR differs from pixel scan"
        );
        let back = decode_csr(h, w, &csr.row_ptr, &csr.col_idx).map_err(|e| e.to_string())?;
        ensure!(back == mask, "mask {i}: decode(encode(m)) != m");
        if i % 20 == 0 {
            let path = dir.path().join(format!("{i}.imsk"));
            let masks = [
                LabeledMask::interactive(mask.clone(), 0),
                LabeledMask::interactive(mask.invert(), 3),
            ];
            let container = MaskContainer::from_labeled(h, w, &masks).map_err(|e| e.to_string())?;
            write_container(&path, &container).map_err(|e| e.to_string())?;
            let bytes = std::fs::read(&path).map_err(|e| e.to_string())?;
            let read = read_container(&path).map_err(|e| e.to_string())?;
            ensure!(read == container, "container {i}: read != written");
            ensure!(
                read.to_bytes().map_err(|e| e.to_string())? == bytes,
                "container {i}: bytes differ after re-encode"
            );
            let again = dir.path().join(format!("{i}b.imsk"));
            write_container(&again, &read).map_err(|e| e.to_string())?;
            ensure!(
                std::fs::read(&again).map_err(|e| e.to_string())? == bytes,
                "container {i}: rewrite not byte-exact"
            );
            containers += 1;
        }
    }
    Ok(format!("1000 masks, {containers} containers byte-exact"))
}

fn nms_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0x4E5);
    let n = 24;
    let mut kept_total = 0;
    for set in 0..500 {
        let count = rng.gen_range(0..=20);
        let mut cands: Vec<CandidateMask> = Vec::new();
        for _ in 0..count {
            let m = if !cands.is_empty() && rng.gen_bool(0.4) {
                let base = &cands[rng.gen_range(0..cands.len())].mask;
                let mut m = base.clone();
                for _ in 0..rng.gen_range(0..12) {
                    let (r, c) = (rng.gen_range(0..n), rng.gen_range(0..n));
                    m.set(r, c, !m.get(r, c));
                }
                if m.is_empty() {
                    m.set(0, 0, true);
                }
                m
            } else {
                let (r0, c0) = (rng.gen_range(0..n - 2), rng.gen_range(0..n - 2));
                rect(
                    n,
                    n,
                    r0,
                    c0,
                    rng.gen_range(1..=n - r0),
                    rng.gen_range(1..=n - c0),
                )
            };
            let conf = if rng.gen_bool(0.3) {
                [0.9, 0.95][rng.gen_range(0..2)]
            } else {
                rng.gen::<f64>()
            };
            cands.push(CandidateMask::new(m, conf).map_err(|e| e.to_string())?);
        }
        // Visit order: confidence desc, area desc, index asc (insertion sort).
        let mut order: Vec<usize> = Vec::new();
        for i in 0..cands.len() {
            let key = |j: usize| (cands[j].confidence, cands[j].mask.count());
            let pos = order
                .iter()
                .position(|&j| {
                    let (a, b) = (key(i), key(j));
                    a.0 > b.0 || (a.0 == b.0 && a.1 > b.1)
                })
                .unwrap_or(order.len());
            order.insert(pos, i);
        }
        let mut expected: Vec<usize> = Vec::new();
        for &i in &order {
            if expected
                .iter()
                .all(|&k| naive_iou(&cands[i].mask, &cands[k].mask) <= 0.7)
            {
                expected.push(i);
            }
        }
        let got = nms(cands.clone(), 0.7);
        ensure!(
            got.len() == expected.len(),
            "set {set}: {} kept, oracle keeps {}",
            got.len(),
            expected.len()
        );
        for (g, &e) in got.iter().zip(&expected) {
            ensure!(
                *g == cands[e],
                "set {set}: kept candidates differ from the oracle"
            );
        }
        for a in 0..got.len() {
            for b in a + 1..got.len() {
                ensure!(
                    naive_iou(&got[a].mask, &got[b].mask) <= 0.7,
                    "set {set}: kept pair above 0.7"
                );
            }
        }
        kept_total += got.len();
    }
    Ok(format!("500 sets agree, {kept_total} kept in total"))
}

fn generation_blobs() -> Check {
    let seg = ReferenceSegmenter::default();
    let params = GenerationParams::default();
    ensure!(
        params.grid == 32
            && params.min_confidence == 0.85
            && params.nms_iou == 0.7
            && params.max_cover == 0.8,
        "defaults are not 32 / 0.85 / 0.7 / 0.8"
    );
    for k in 1..=10 {
        let (image, blobs) = blob_fixture(k).map_err(|e| e.to_string())?;
        let g = generate_interactive_masks(&image, &seg, &params);
        ensure!(g.masks.len() == k, "k={k}: {} masks", g.masks.len());
        let mut used = vec![false; k];
        for m in &g.masks {
            let frac = m.mask.count() as f64 / m.mask.area() as f64;
            ensure!(frac <= 0.8, "k={k}: a background-sized mask survived");
            let hit = (0..k).find(|&b| !used[b] && naive_iou(&m.mask, &blobs[b]) > 0.99);
            match hit {
                Some(b) => used[b] = true,
                None => return Err(format!("k={k}: a mask matches no blob at IoU > 0.99")),
            }
        }
        ensure!(
            g.counts.after_nms == k + 1,
            "k={k}: expected the background candidate to reach the cover filter"
        );
    }
    Ok("k=1..10 exact, background removed each time".into())
}

#[derive(Clone, Copy, PartialEq, Debug)]
enum Kind {
    Exact,
    Shrunk,
    Absent,
    Multi,
}

fn granularity_rules() -> Check {
    const N: usize = 64;
    let mut rng = ChaCha8Rng::seed_from_u64(0x6A);
    let params = CorrectionParams::default();
    let mut seen = [0usize; 4];
    for case in 0..300 {
        let mut gt = Vec::new();
        let mut generated = Vec::new();
        let mut kinds = Vec::new();
        for band in 0..3 {
            let kind = [Kind::Exact, Kind::Shrunk, Kind::Absent, Kind::Multi][rng.gen_range(0..4)];
            seen[kind as usize] += 1;
            let (h, w) = (rng.gen_range(6..10), rng.gen_range(6..16));
            let (r0, c0) = (band * 16 + rng.gen_range(0..6), rng.gen_range(0..30));
            let mut m = rect(N, N, r0, c0, h, w);
            match kind {
                Kind::Exact => generated.push(m.clone()),
                Kind::Shrunk => generated.push(rect(N, N, r0 + 1, c0 + 1, h - 4, w - 2)),
                Kind::Absent => {}
                Kind::Multi => {
                    m.union_in_place(&rect(N, N, r0, c0 + w + 3, h, 3))
                        .map_err(|e| e.to_string())?;
                    if rng.gen_bool(0.5) {
                        generated.push(rect(N, N, r0, c0, h, w));
                    }
                }
            }
            gt.push(LabeledMask::ground_truth(m, band as u32 + 1).map_err(|e| e.to_string())?);
            kinds.push(kind);
        }
        for _ in 0..rng.gen_range(0..4) {
            let (r0, c0) = (rng.gen_range(48..60), rng.gen_range(0..56));
            generated.push(rect(
                N,
                N,
                r0,
                c0,
                rng.gen_range(3..=N - r0),
                rng.gen_range(3..8),
            ));
        }
        let cands: Vec<CandidateMask> = generated
            .into_iter()
            .map(|m| CandidateMask::new(m, 0.9))
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())?;
        let out = correct_with_gt(&cands, &gt, &params).map_err(|e| e.to_string())?;
        for (g, kind) in gt.iter().zip(&kinds) {
            let verbatim = out.iter().any(|o| {
                o.source == Source::GroundTruth
                    && o.category_id == g.category_id
                    && o.mask == g.mask
            });
            let retained = out.iter().any(|o| {
                o.source == Source::Interactive
                    && o.category_id == g.category_id
                    && o.mask == g.mask
            });
            match kind {
                Kind::Multi => {
                    ensure!(
                        verbatim,
                        "case {case}: multi-component GT not kept pixel-identically"
                    );
                    let (r0, c0, r1, c1) = g
                        .mask
                        .iter_ones()
                        .fold((N, N, 0, 0), |(a, b, x, y), (r, c)| {
                            (a.min(r), b.min(c), x.max(r), y.max(c))
                        });
                    for o in out.iter().filter(|o| o.source == Source::Interactive) {
                        ensure!(
                            !o.mask
                                .iter_ones()
                                .any(|(r, c)| (r0..=r1).contains(&r) && (c0..=c1).contains(&c)),
                            "case {case}: generated pixels left inside a multi-component GT box"
                        );
                    }
                }
                Kind::Exact => ensure!(
                    retained && !verbatim,
                    "case {case}: exact match not retained as interactive"
                ),
                Kind::Shrunk | Kind::Absent => {
                    ensure!(
                        verbatim,
                        "case {case}: unmatched {kind:?} GT not inserted verbatim"
                    )
                }
            }
        }
        let again: Vec<CandidateMask> = out
            .iter()
            .filter(|o| o.source == Source::Interactive)
            .map(|o| CandidateMask::new(o.mask.clone(), 1.0))
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())?;
        ensure!(
            correct_with_gt(&again, &gt, &params).map_err(|e| e.to_string())? == out,
            "case {case}: re-run changed the output"
        );
    }
    Ok(format!(
        "300 fixtures (exact {}, shrunk {}, absent {}, multi {}), idempotent",
        seen[0], seen[1], seen[2], seen[3]
    ))
}

fn filter_boundaries() -> Check {
    let cfg = IngestConfig::default();
    ensure!(
        filter_aspect_ratio(512, 768, &cfg).is_keep(),
        "aspect exactly 1.5 dropped"
    );
    ensure!(
        !filter_aspect_ratio(512, 769, &cfg).is_keep(),
        "aspect above 1.5 kept"
    );

    let mut exact = BinaryMask::new(10, 100);
    exact.set(4, 4, true);
    ensure!(
        filter_foreground(&exact, &cfg).is_keep(),
        "foreground exactly 0.001 dropped"
    );
    let mut below = BinaryMask::new(10, 101);
    below.set(4, 4, true);
    ensure!(
        !filter_foreground(&below, &cfg).is_keep(),
        "foreground below 0.001 kept"
    );

    let full = BinaryMask::full(4, 4);
    let at = CandidateMask::new(full.clone(), 0.85).map_err(|e| e.to_string())?;
    let above = CandidateMask::new(full, 0.850001).map_err(|e| e.to_string())?;
    let kept = confidence_filter(vec![at, above.clone()], 0.85);
    ensure!(
        kept == vec![above],
        "confidence exactly 0.85 must be dropped, just above kept"
    );

    let eighty = CandidateMask::new(BinaryMask::from_fn(10, 10, |r, _| r < 8), 1.0)
        .map_err(|e| e.to_string())?;
    let more = CandidateMask::new(
        BinaryMask::from_fn(10, 10, |r, c| r < 8 || (r == 8 && c == 0)),
        1.0,
    )
    .map_err(|e| e.to_string())?;
    let kept = background_filter(vec![eighty.clone(), more], 0.8);
    ensure!(
        kept == vec![eighty],
        "coverage exactly 0.8 must be kept, above dropped"
    );

    let one_in = |area_w: usize| {
        let mut m = BinaryMask::new(1, area_w);
        m.set(0, 0, true);
        LabeledMask::interactive(m, 0)
    };
    let images = vec![vec![one_in(200), one_in(201)]];
    let mut subsets = vec![
        SubsetMasks {
            name: "flagged".into(),
            images: images.clone(),
        },
        SubsetMasks {
            name: "plain".into(),
            images,
        },
    ];
    let report = apply_quality_policy(&mut subsets, &["flagged".into()], &QualityPolicy::default())
        .map_err(|e| e.to_string())?;
    ensure!(
        subsets[0].images[0] == vec![one_in(200)],
        "fg-rate exactly 0.005 must be kept, below dropped"
    );
    ensure!(
        subsets[1].images[0].len() == 2,
        "unflagged subset was filtered"
    );
    ensure!(report.total_dropped() == 1, "expected one drop");
    Ok("aspect, foreground, confidence, coverage, fg-rate".into())
}

/// Imperfect segmenter: the target grown or eroded by one pixel and
/// peppered with noise, then overwritten at every click.
struct Sloppy {
    target: BinaryMask,
}

impl Segmenter for Sloppy {
    fn segment(
        &self,
        image: &ImageGrid,
        prompts: &PromptSet,
        seed: u64,
    ) -> Result<Vec<CandidateMask>, SegmenterError> {
        let (h, w) = image.dims();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED);
        let grow = rng.gen_bool(0.5);
        let t = &self.target;
        let mut m = BinaryMask::from_fn(h, w, |r, c| {
            let nb = [(0i64, 1i64), (1, 0), (0, -1), (-1, 0)]
                .iter()
                .map(|&(dr, dc)| {
                    let (rr, cc) = (r as i64 + dr, c as i64 + dc);
                    rr >= 0
                        && cc >= 0
                        && (rr as usize) < h
                        && (cc as usize) < w
                        && t.get(rr as usize, cc as usize)
                });
            if grow {
                t.get(r, c) || nb.into_iter().any(|x| x)
            } else {
                t.get(r, c) && nb.into_iter().all(|x| x)
            }
        });
        for _ in 0..rng.gen_range(0..20) {
            let (r, c) = (rng.gen_range(0..h), rng.gen_range(0..w));
            m.set(r, c, !m.get(r, c));
        }
        for p in &prompts.prompts {
            if let Prompt::Click { row, col, polarity } = *p {
                m.set(row, col, polarity == Polarity::Positive);
            }
        }
        CandidateMask::new(m, 0.6)
            .map(|c| vec![c])
            .map_err(|e| SegmenterError::Failed(e.to_string()))
    }
}

fn scene(rng: &mut ChaCha8Rng) -> (ImageGrid, LabeledMask) {
    let (h, w) = (rng.gen_range(20..56), rng.gen_range(20..56));
    let (r0, c0) = (rng.gen_range(0..h / 2), rng.gen_range(0..w / 2));
    let mask = rect(
        h,
        w,
        r0,
        c0,
        rng.gen_range(3..h - r0),
        rng.gen_range(3..w - c0),
    );
    let image = ImageGrid::from_fn(h, w, |r, c| if mask.get(r, c) { 210 } else { 25 });
    (image, LabeledMask::ground_truth(mask, 1).expect("nonempty"))
}

fn interaction_laws() -> Check {
    ensure!(
        DEFAULT_ROUNDS == 8 && Strategy::default().rounds == 8,
        "K does not default to 8"
    );
    let mut rng = ChaCha8Rng::seed_from_u64(0x1A);
    let initials = [
        InitialPrompt::Click,
        InitialPrompt::Box,
        InitialPrompt::BoxClick,
    ];
    let mut corrections = 0;
    for i in 0..200u64 {
        let (image, target) = scene(&mut rng);
        let seg = Sloppy {
            target: target.mask.clone(),
        };
        let strategy = Strategy {
            initial: initials[i as usize % 3],
            ..Strategy::default()
        };
        let s = run_session(&image, &target, &seg, &strategy, i).map_err(|e| e.to_string())?;
        ensure!(
            s.dice_trace.len() == 8,
            "session {i}: trace has {} entries",
            s.dice_trace.len()
        );
        for k in 1..s.rounds.len() {
            let prev = &s.rounds[k - 1].prediction;
            let [Prompt::Click { row, col, polarity }] = s.rounds[k].added[..] else {
                return Err(format!("session {i}: round {} is not one click", k + 1));
            };
            let truth = target.mask.get(row, col);
            ensure!(
                truth != prev.get(row, col),
                "session {i} round {}: click outside the error region",
                k + 1
            );
            let want = if truth {
                Polarity::Positive
            } else {
                Polarity::Negative
            };
            ensure!(
                polarity == want,
                "session {i} round {}: polarity does not match the error side",
                k + 1
            );
            corrections += 1;
        }
        let again = run_session(&image, &target, &seg, &strategy, i).map_err(|e| e.to_string())?;
        let bits = |t: &[f64]| t.iter().map(|d| d.to_bits()).collect::<Vec<_>>();
        ensure!(
            bits(&again.dice_trace) == bits(&s.dice_trace),
            "session {i}: replay trace differs"
        );
    }
    let mut images = Vec::new();
    let mut objects = Vec::new();
    for i in 0..30u64 {
        let (image, target) = scene(&mut rng);
        let oracle = OracleSegmenter::new(vec![target.clone()]);
        for initial in [InitialPrompt::Click, InitialPrompt::Box] {
            let s = run_session(
                &image,
                &target,
                &oracle,
                &Strategy {
                    initial,
                    ..Strategy::default()
                },
                i,
            )
            .map_err(|e| e.to_string())?;
            ensure!(
                s.dice_trace[0] == 1.0,
                "oracle session {i} ({initial}) below 1.0 at round 1"
            );
        }
        if i < 3 {
            objects.push(target.clone());
            images.push(SweepImage {
                id: format!("s{i}"),
                image,
                targets: vec![target],
            });
        }
    }
    struct ByImage(Vec<(ImageGrid, OracleSegmenter)>);
    impl Segmenter for ByImage {
        fn segment(
            &self,
            image: &ImageGrid,
            p: &PromptSet,
            seed: u64,
        ) -> Result<Vec<CandidateMask>, SegmenterError> {
            let (_, o) = self
                .0
                .iter()
                .find(|(im, _)| im == image)
                .ok_or_else(|| SegmenterError::Failed("unknown image".into()))?;
            o.segment(image, p, seed)
        }
    }
    let bank = ByImage(
        images
            .iter()
            .zip(&objects)
            .map(|(s, t)| (s.image.clone(), OracleSegmenter::new(vec![t.clone()])))
            .collect(),
    );
    let report = robustness_sweep(
        &images,
        &bank,
        Protocol::InteractionCount,
        &SweepConfig::default(),
    )
    .map_err(|e| e.to_string())?;
    let names: Vec<String> = report.arms.iter().map(|a| a.name.clone()).collect();
    let want: Vec<String> = (1..=9).map(|k| format!("K={k}")).collect();
    ensure!(names == want, "sweep arms {names:?}");
    Ok(format!(
        "200 sessions, {corrections} correction clicks checked; oracle 1.0 at round 1; arms K=1..9"
    ))
}

fn loss_values() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0x105);
    let closed = 0.25 * 0.25 * std::f64::consts::LN_2;
    ensure!(
        FOCAL_WEIGHT == 20.0 && DICE_WEIGHT == 1.0,
        "weights are not 20:1"
    );
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let (h, w) = (rng.gen_range(1..40), rng.gen_range(1..40));
        let density: f64 = rng.gen();
        let target = BinaryMask::from_fn(h, w, |_, _| rng.gen_bool(density));
        let half = ProbMap::uniform(h, w, 0.5).map_err(|e| e.to_string())?;
        let f = focal_loss(&half, &target, 2.0, 0.25).map_err(|e| e.to_string())?;
        worst = worst.max((f - closed).abs());
        ensure!(
            (f - closed).abs() <= 1e-6,
            "focal at p=0.5 is {f}, closed form {closed}"
        );

        let probs = ProbMap::new(h, w, (0..h * w).map(|_| rng.gen::<f64>()).collect())
            .map_err(|e| e.to_string())?;
        let focal = focal_loss(&probs, &target, 2.0, 0.25).map_err(|e| e.to_string())?;
        let dl = dice_loss(&probs, &target).map_err(|e| e.to_string())?;
        let comb = combined_loss(&probs, &target).map_err(|e| e.to_string())?;
        ensure!(
            comb == 20.0 * focal + dl,
            "combined {comb} != 20*focal + dice"
        );

        let pred = BinaryMask::from_fn(h, w, |_, _| rng.gen_bool(density));
        let dl = dice_loss(&ProbMap::from_mask(&pred), &target).map_err(|e| e.to_string())?;
        let inter = pred.iter_ones().filter(|&(r, c)| target.get(r, c)).count() as f64;
        let sum = (pred.count() + target.count()) as f64;
        let hard = if sum == 0.0 { 1.0 } else { 2.0 * inter / sum };
        ensure!(
            (dl - (1.0 - hard)).abs() <= 1.0 / (sum + 1.0) + 1e-12,
            "dice loss {dl} vs 1 - dice {}",
            1.0 - hard
        );
    }
    Ok(format!(
        "focal(0.5) off by at most {worst:.1e}; combined exact; dice consistent"
    ))
}

fn stats_fixture() -> Check {
    // (height, width, [(pixels, is_gt)]) as constructed by the fixture.
    let construction: [Construction; 3] = [
        (
            100,
            100,
            &[(1, true), (10, true), (100, false), (5000, false)],
        ),
        (
            300,
            400,
            &[
                (12, true),
                (120, true),
                (1199, false),
                (1200, false),
                (60000, false),
            ],
        ),
        (
            1100,
            1000,
            &[
                (1, true),
                (2, true),
                (1100, true),
                (11000, false),
                (110000, false),
                (1100000, false),
            ],
        ),
    ];
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let ds = write_stats_fixture(dir.path()).map_err(|e| e.to_string())?;
    for (rec, (h, w, masks)) in ds.manifest.images.iter().zip(&construction) {
        let stored = ds
            .load_masks(rec)
            .map_err(|e| e.to_string())?
            .labeled_masks()
            .map_err(|e| e.to_string())?;
        let got: Vec<(usize, bool)> = stored
            .iter()
            .map(|m| (m.mask.count(), m.is_ground_truth()))
            .collect();
        ensure!(
            got == masks.to_vec() && stored.iter().all(|m| m.mask.dims() == (*h, *w)),
            "fixture {} differs from construction",
            rec.id
        );
    }
    let report = dataset_stats(std::slice::from_ref(&ds)).map_err(|e| e.to_string())?;
    ensure!(
        report.masks_per_image_mean == 5.0,
        "masks per image {}",
        report.masks_per_image_mean
    );

    let mut res = [0usize; 3];
    let mut gt = [0usize; 7];
    let mut int = [0usize; 7];
    for (h, w, masks) in &construction {
        let area = h * w;
        res[if area < 256 * 256 {
            0
        } else if area <= 1024 * 1024 {
            1
        } else {
            2
        }] += 1;
        for &(n, is_gt) in *masks {
            // Bin j >= 1 holds fractions in [10^(j-7), 10^(j-6)).
            let bin = (1..=6)
                .filter(|&j| n as u128 * 10u128.pow(7 - j as u32) >= area as u128)
                .count();
            if is_gt {
                gt[bin] += 1
            } else {
                int[bin] += 1
            }
        }
    }
    ensure!(
        gt == [1, 1, 0, 2, 3, 0, 0] && int == [0, 0, 0, 0, 1, 3, 4],
        "oracle histogram disagrees with the hand count"
    );
    let got_res: Vec<usize> = report.resolution.iter().map(|b| b.count).collect();
    ensure!(got_res == res, "resolution {got_res:?}, expected {res:?}");
    let got_gt: Vec<usize> = report
        .coverage
        .iter()
        .map(|b| b.count.ground_truth)
        .collect();
    let got_int: Vec<usize> = report
        .coverage
        .iter()
        .map(|b| b.count.interactive)
        .collect();
    ensure!(
        got_gt == gt && got_int == int,
        "coverage gt {got_gt:?} int {got_int:?}"
    );
    ensure!(
        report.masks.ground_truth == 7 && report.masks.interactive == 8,
        "mask totals"
    );
    Ok("mean 5.0; resolution and coverage histograms exact".into())
}

fn split_policy() -> Check {
    let c = split_counts(40_000, 0.9, 3000);
    ensure!(
        c.train - c.overflow == 36_000 && c.overflow == 1000,
        "base split {c:?}"
    );
    ensure!(c.train == 37_000 && c.test == 3000, "final split {c:?}");
    let manifest = || {
        let mut m = Manifest::new("synthetic", "CT");
        m.images = (0..40_000)
            .map(|i| ImageRecord {
                id: format!("img{i:05}"),
                image_path: format!("images/img{i:05}.png"),
                mask_path: format!("masks/img{i:05}.imsk"),
                split: Split::Train,
            })
            .collect();
        m
    };
    let tags = |seed: u64| {
        let mut m = manifest();
        let cfg = IngestConfig {
            seed,
            ..IngestConfig::default()
        };
        assign_splits(&mut m, &cfg);
        m.images.iter().map(|r| r.split).collect::<Vec<_>>()
    };
    let a = tags(7);
    let test = a.iter().filter(|&&s| s == Split::Test).count();
    ensure!(
        test == 3000 && a.len() - test == 37_000,
        "assigned {test} test"
    );
    ensure!(tags(7) == a, "same seed gave a different assignment");
    ensure!(tags(8) != a, "different seeds gave the same assignment");
    Ok("40000 -> 37000/3000 (1000 overflow), deterministic".into())
}

fn service_replay() -> Check {
    use axum::body::Body;
    use axum::http::{Request, StatusCode};
    use base64::Engine as _;
    use http_body_util::BodyExt;
    use serde_json::{json, Value};
    use tower::ServiceExt;

    let segmenter = Arc::new(ReferenceSegmenter::default());
    let state =
        imis_service::AppState::new(imis_service::ServiceConfig::default(), segmenter.clone())
            .map_err(|e| e.to_string())?;
    let app = imis_service::router(Arc::new(state));
    let rt = tokio::runtime::Builder::new_current_thread()
        .enable_all()
        .build()
        .map_err(|e| e.to_string())?;
    let call =
        |method: &str, uri: String, body: Option<Value>| -> Result<(StatusCode, Value), String> {
            let req = Request::builder()
                .method(method)
                .uri(uri)
                .header("content-type", "application/json")
                .body(body.map_or(Body::empty(), |b| Body::from(b.to_string())))
                .map_err(|e| e.to_string())?;
            rt.block_on(async {
                let resp = app.clone().oneshot(req).await.map_err(|e| e.to_string())?;
                let status = resp.status();
                let bytes = resp
                    .into_body()
                    .collect()
                    .await
                    .map_err(|e| e.to_string())?
                    .to_bytes();
                Ok((
                    status,
                    serde_json::from_slice(&bytes).unwrap_or(Value::Null),
                ))
            })
        };
    let (image, gt) = disk_fixture();
    let png = imis_core::storage::encode_png(&image);
    let body = json!({
        "image": base64::engine::general_purpose::STANDARD.encode(png),
        "gt": encode_csr(&gt),
        "seed": 11,
    });
    let (status, created) = call("POST", "/sessions".into(), Some(body))?;
    ensure!(status == StatusCode::CREATED, "create returned {status}");
    let id = created["id"].as_str().ok_or("no session id")?.to_owned();
    let click = |r: usize, c: usize, pol: &str| json!({"type": "click", "row": r, "col": c, "polarity": pol});

    let (status, first) = call(
        "POST",
        format!("/sessions/{id}/prompts"),
        Some(click(DISK_CENTER.0, DISK_CENTER.1, "positive")),
    )?;
    ensure!(status == StatusCode::OK, "click returned {status}");
    let decode = |v: &Value| -> Result<BinaryMask, String> {
        let csr: imis_core::storage::CsrMask =
            serde_json::from_value(v.clone()).map_err(|e| e.to_string())?;
        decode_csr(csr.height, csr.width, &csr.row_ptr, &csr.col_idx).map_err(|e| e.to_string())
    };
    let pred = decode(&first["mask"])?;
    let d = imis_core::maskcore::dice(&pred, &gt).map_err(|e| e.to_string())?;
    ensure!(d > 0.9, "dice after one click {d}");

    let (_, before) = call("GET", format!("/sessions/{id}"), None)?;
    let (status, _) = call(
        "POST",
        format!("/sessions/{id}/prompts"),
        Some(click(10, 10, "negative")),
    )?;
    ensure!(status == StatusCode::OK, "second click returned {status}");
    let (status, _) = call("POST", format!("/sessions/{id}/undo"), None)?;
    ensure!(status == StatusCode::OK, "undo returned {status}");
    let (_, after) = call("GET", format!("/sessions/{id}"), None)?;
    for key in ["history", "mask", "confidence", "dice_trace"] {
        ensure!(before[key] == after[key], "undo did not restore {key}");
    }

    let (_, _) = call(
        "POST",
        format!("/sessions/{id}/prompts"),
        Some(click(DISK_CENTER.0 + 5, DISK_CENTER.1, "positive")),
    )?;
    let (_, state) = call("GET", format!("/sessions/{id}"), None)?;
    let history: Vec<Prompt> =
        serde_json::from_value(state["history"].clone()).map_err(|e| e.to_string())?;
    let seed = state["seed"].as_u64().ok_or("no seed")?;
    let steps =
        replay_prompts(&image, &history, segmenter.as_ref(), seed).map_err(|e| e.to_string())?;
    let stored = decode(&state["mask"])?;
    ensure!(
        steps.last().map(|s| &s.0) == Some(&stored),
        "history replay differs from the stored prediction"
    );
    Ok(format!(
        "dice {d:.4}; undo restores state; replay of {} prompts bit-exact",
        history.len()
    ))
}
