use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::maskcore::{ImageGrid, LabeledMask};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentParams {
    /// Chance that an image is transformed at all.
    pub probability: f64,
    /// Bound on both the relative scale change and the offset (as a
    /// fraction of 255).
    pub factor: f64,
}

impl Default for AugmentParams {
    fn default() -> Self {
        Self {
            probability: 0.2,
            factor: 0.2,
        }
    }
}

/// `pixel * (1 + scale) + offset * 255`, rounded and clamped to `0..=255`.
pub fn scale_shift(image: &ImageGrid, scale: f64, offset: f64) -> ImageGrid {
    let mut lut = [0u8; 256];
    for (v, out) in lut.iter_mut().enumerate() {
        *out = (v as f64 * (1.0 + scale) + offset * 255.0)
            .round()
            .clamp(0.0, 255.0) as u8;
    }
    image.map_samples(|v| lut[v as usize])
}

/// Random intensity scale and shift applied with the configured
/// probability. Returns the image and the `(scale, offset)` drawn, if any.
/// Masks are never touched.
pub fn augment_intensity<R: Rng + ?Sized>(
    image: &ImageGrid,
    params: &AugmentParams,
    rng: &mut R,
) -> (ImageGrid, Option<(f64, f64)>) {
    if !rng.gen_bool(params.probability.clamp(0.0, 1.0)) {
        return (image.clone(), None);
    }
    let f = params.factor;
    let scale = rng.gen_range(-f..=f);
    let offset = rng.gen_range(-f..=f);
    (scale_shift(image, scale, offset), Some((scale, offset)))
}

/// Draws `n` training targets from the combined pool: without replacement
/// when the pool is large enough, otherwise with replacement.
pub fn sample_targets<R: Rng + ?Sized>(
    gt: &[LabeledMask],
    interactive: &[LabeledMask],
    n: usize,
    rng: &mut R,
) -> Result<Vec<LabeledMask>> {
    let pool: Vec<&LabeledMask> = gt.iter().chain(interactive).collect();
    if pool.is_empty() {
        return Err(Error::EmptyPool);
    }
    let picks: Vec<usize> = if pool.len() >= n {
        index::sample(rng, pool.len(), n).into_vec()
    } else {
        (0..n).map(|_| rng.gen_range(0..pool.len())).collect()
    };
    Ok(picks.into_iter().map(|i| pool[i].clone()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maskcore::BinaryMask;
    use crate::seed;

    #[test]
    fn scale_shift_arithmetic() {
        let img = ImageGrid::from_fn(1, 3, |_, c| [100, 0, 250][c]);
        assert_eq!(scale_shift(&img, 0.0, 0.0), img);
        let out = scale_shift(&img, 0.2, 0.0);
        assert_eq!(out.pixels(), &[120, 0, 255]);
        assert_eq!(scale_shift(&img, 0.0, -0.2).pixels(), &[49, 0, 199]);
    }

    #[test]
    fn augmentation_rate() {
        let img = ImageGrid::from_fn(4, 4, |r, c| (r * 40 + c) as u8);
        let never = AugmentParams {
            probability: 0.0,
            ..Default::default()
        };
        assert_eq!(
            augment_intensity(&img, &never, &mut seed::rng(0, &[])),
            (img.clone(), None)
        );
        let mut rng = seed::rng(1, &[]);
        let n = 20_000;
        let mut hits = 0;
        for _ in 0..n {
            if let (_, Some((s, o))) = augment_intensity(&img, &AugmentParams::default(), &mut rng)
            {
                assert!(s.abs() <= 0.2 && o.abs() <= 0.2);
                hits += 1;
            }
        }
        assert!((hits as f64 / n as f64 - 0.2).abs() < 0.01);
    }

    fn pool(n: usize) -> Vec<LabeledMask> {
        (0..n)
            .map(|i| LabeledMask::interactive(BinaryMask::from_fn(4, 4, |r, c| r * 4 + c == i), 0))
            .collect()
    }

    #[test]
    fn target_sampling() {
        let mut rng = seed::rng(4, &[]);
        let small = sample_targets(&pool(1), &pool(2)[1..], 5, &mut rng).unwrap();
        assert_eq!(small.len(), 5);
        let big = pool(10);
        let picked = sample_targets(&big[..4], &big[4..], 5, &mut rng).unwrap();
        let mut firsts: Vec<_> = picked.iter().map(|m| m.mask.first_one()).collect();
        firsts.sort();
        firsts.dedup();
        assert_eq!(firsts.len(), 5);
        let again = |s| sample_targets(&big, &[], 5, &mut seed::rng(s, &[])).unwrap();
        assert_eq!(again(9), again(9));
        assert!(matches!(
            sample_targets(&[], &[], 5, &mut rng),
            Err(Error::EmptyPool)
        ));
    }
}
