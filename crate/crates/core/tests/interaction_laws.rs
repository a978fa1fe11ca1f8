use imis_core::interact::{
    robustness_sweep, run_session, InitialPrompt, Protocol, Strategy, SweepConfig, SweepImage,
    DEFAULT_ROUNDS,
};
use imis_core::maskcore::{BinaryMask, ImageGrid, LabeledMask};
use imis_core::proposer::{
    CandidateMask, OracleSegmenter, Polarity, Prompt, PromptSet, Segmenter, SegmenterError,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Returns the target corrupted by seed-dependent noise: a shifted copy of
/// the target plus a few random pixels, restricted by negative clicks.
struct Noisy {
    target: BinaryMask,
}

impl Segmenter for Noisy {
    fn segment(
        &self,
        image: &ImageGrid,
        prompts: &PromptSet,
        seed: u64,
    ) -> Result<Vec<CandidateMask>, SegmenterError> {
        let (h, w) = image.dims();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shift = rng.gen_range(0..3usize);
        let mut m = BinaryMask::from_fn(h, w, |r, c| c >= shift && self.target.get(r, c - shift));
        for _ in 0..rng.gen_range(0..30) {
            let (r, c) = (rng.gen_range(0..h), rng.gen_range(0..w));
            let v = !m.get(r, c);
            m.set(r, c, v);
        }
        for p in &prompts.prompts {
            if let Prompt::Click { row, col, polarity } = *p {
                m.set(row, col, polarity == Polarity::Positive);
            }
        }
        Ok(vec![
            CandidateMask::new(m, 0.5).map_err(|e| SegmenterError::Failed(e.to_string()))?
        ])
    }
}

fn scene(seed: u64) -> (ImageGrid, LabeledMask) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (h, w) = (rng.gen_range(16..48), rng.gen_range(16..48));
    let (r0, c0) = (rng.gen_range(0..h / 2), rng.gen_range(0..w / 2));
    let (rh, rw) = (rng.gen_range(2..h - r0), rng.gen_range(2..w - c0));
    let mask = BinaryMask::from_fn(h, w, |r, c| {
        (r0..r0 + rh).contains(&r) && (c0..c0 + rw).contains(&c)
    });
    let image = ImageGrid::from_fn(h, w, |r, c| if mask.get(r, c) { 200 } else { 30 });
    (image, LabeledMask::ground_truth(mask, 1).unwrap())
}

#[test]
fn correction_clicks_fall_in_the_error_region() {
    let strategies = [
        InitialPrompt::Click,
        InitialPrompt::Box,
        InitialPrompt::BoxClick,
    ];
    for i in 0..200u64 {
        let (image, target) = scene(i);
        let seg = Noisy {
            target: target.mask.clone(),
        };
        let strategy = Strategy {
            initial: strategies[i as usize % 3],
            ..Strategy::default()
        };
        let s = run_session(&image, &target, &seg, &strategy, i).unwrap();
        for k in 1..s.rounds.len() {
            let prev = &s.rounds[k - 1].prediction;
            let [Prompt::Click { row, col, polarity }] = s.rounds[k].added[..] else {
                panic!("corrections are single clicks");
            };
            let truth = target.mask.get(row, col);
            let predicted = prev.get(row, col);
            assert_ne!(
                truth,
                predicted,
                "session {i} round {}: click outside the error region",
                k + 1
            );
            let expected = if truth {
                Polarity::Positive
            } else {
                Polarity::Negative
            };
            assert_eq!(polarity, expected);
        }
        let replay = run_session(&image, &target, &seg, &strategy, i).unwrap();
        let bits = |t: &[f64]| t.iter().map(|d| d.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&replay.dice_trace), bits(&s.dice_trace));
        assert_eq!(s.dice_trace.len(), DEFAULT_ROUNDS);
    }
}

#[test]
fn oracle_reaches_one_at_round_one() {
    for i in 0..50u64 {
        let (image, target) = scene(1000 + i);
        let oracle = OracleSegmenter::new(vec![target.clone()]);
        for initial in [InitialPrompt::Click, InitialPrompt::Box] {
            let strategy = Strategy {
                initial,
                ..Strategy::default()
            };
            let s = run_session(&image, &target, &oracle, &strategy, i).unwrap();
            assert_eq!(
                s.dice_trace[0], 1.0,
                "{i} {initial:?} {:?}",
                s.rounds[0].added
            );
            assert_eq!(s.stopped_at, Some(1));
        }
    }
}

#[test]
fn defaults_and_sweep_shape() {
    assert_eq!(DEFAULT_ROUNDS, 8);
    assert_eq!(Strategy::default().rounds, 8);
    assert_eq!(Strategy::default().jitter, 5);
    let images: Vec<SweepImage> = (0..1)
        .map(|i| {
            let (image, target) = scene(i);
            SweepImage {
                id: format!("s{i}"),
                image,
                targets: vec![target],
            }
        })
        .collect();
    let oracle = OracleSegmenter::new(images[0].targets.clone());
    let cfg = SweepConfig::default();
    let report = robustness_sweep(&images[..1], &oracle, Protocol::InteractionCount, &cfg).unwrap();
    let names: Vec<String> = report.arms.iter().map(|a| a.name.clone()).collect();
    let expected: Vec<String> = (1..=9).map(|k| format!("K={k}")).collect();
    assert_eq!(names, expected);
}
