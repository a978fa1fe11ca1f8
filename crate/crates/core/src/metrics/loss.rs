use crate::error::{Error, Result};
use crate::maskcore::BinaryMask;

pub const DEFAULT_GAMMA: f64 = 2.0;
pub const DEFAULT_ALPHA: f64 = 0.25;
pub const FOCAL_WEIGHT: f64 = 20.0;
pub const DICE_WEIGHT: f64 = 1.0;
/// Probabilities are clamped to `[EPS, 1 - EPS]` before taking logs.
pub const EPS: f64 = 1e-7;
pub const DICE_SMOOTH: f64 = 1.0;

/// Per-pixel foreground probabilities, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbMap {
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl ProbMap {
    pub fn new(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || values.len() != height * width {
            return Err(Error::InvalidArgument(format!(
                "{} values for a {height}x{width} map",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        if let Some(i) = values.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::OutOfRange(format!(
                "probability {} at pixel {i}",
                values[i]
            )));
        }
        Ok(Self {
            height,
            width,
            values,
        })
    }

    pub fn uniform(height: usize, width: usize, p: f64) -> Result<Self> {
        Self::new(height, width, vec![p; height * width])
    }

    /// 1 on foreground, 0 elsewhere.
    pub fn from_mask(mask: &BinaryMask) -> Self {
        let values = mask
            .to_bools()
            .into_iter()
            .map(|b| if b { 1.0 } else { 0.0 })
            .collect();
        Self {
            height: mask.height(),
            width: mask.width(),
            values,
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn check(&self, target: &BinaryMask) -> Result<()> {
        if self.dims() != target.dims() {
            return Err(Error::DimensionMismatch {
                expected: self.dims(),
                found: target.dims(),
            });
        }
        Ok(())
    }
}

/// Mean focal loss `-α (1 - p_t)^γ ln p_t`, with `p_t = p` on target
/// foreground and `1 - p` on background.
pub fn focal_loss(p: &ProbMap, target: &BinaryMask, gamma: f64, alpha: f64) -> Result<f64> {
    p.check(target)?;
    let t = target.to_bools();
    let total: f64 = p
        .values
        .iter()
        .zip(&t)
        .map(|(&v, &fg)| {
            let v = v.clamp(EPS, 1.0 - EPS);
            let pt = if fg { v } else { 1.0 - v };
            -alpha * (1.0 - pt).powf(gamma) * pt.ln()
        })
        .sum();
    Ok(total / t.len() as f64)
}

/// `1 - (2 Σ p·t + 1) / (Σ p + Σ t + 1)`.
pub fn dice_loss(p: &ProbMap, target: &BinaryMask) -> Result<f64> {
    p.check(target)?;
    let t = target.to_bools();
    let (mut inter, mut sum_p) = (0.0, 0.0);
    for (&v, &fg) in p.values.iter().zip(&t) {
        sum_p += v;
        if fg {
            inter += v;
        }
    }
    let sum_t = target.count() as f64;
    Ok(1.0 - (2.0 * inter + DICE_SMOOTH) / (sum_p + sum_t + DICE_SMOOTH))
}

/// `20 · focal + 1 · dice` with the default focal parameters.
pub fn combined_loss(p: &ProbMap, target: &BinaryMask) -> Result<f64> {
    let focal = focal_loss(p, target, DEFAULT_GAMMA, DEFAULT_ALPHA)?;
    let dice = dice_loss(p, target)?;
    Ok(FOCAL_WEIGHT * focal + DICE_WEIGHT * dice)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn half() -> BinaryMask {
        BinaryMask::from_fn(8, 8, |r, _| r < 4)
    }

    #[test]
    fn uniform_half_closed_form() {
        let p = ProbMap::uniform(8, 8, 0.5).unwrap();
        let expected = 0.25 * 0.25 * std::f64::consts::LN_2;
        for t in [half(), BinaryMask::new(8, 8), BinaryMask::full(8, 8)] {
            assert!((focal_loss(&p, &t, 2.0, 0.25).unwrap() - expected).abs() < 1e-12);
        }
        // Σp = 32, Σt = 32, Σpt = 16.
        let d = dice_loss(&p, &half()).unwrap();
        assert!((d - (1.0 - 33.0 / 65.0)).abs() < 1e-12);
        let c = combined_loss(&p, &half()).unwrap();
        assert_eq!(c, 20.0 * focal_loss(&p, &half(), 2.0, 0.25).unwrap() + d);
    }

    #[test]
    fn perfect_and_empty() {
        let t = half();
        let p = ProbMap::from_mask(&t);
        assert!(focal_loss(&p, &t, 2.0, 0.25).unwrap() < 1e-12);
        assert!((dice_loss(&p, &t).unwrap() - 0.0).abs() < 1e-12);
        let zero = ProbMap::uniform(8, 8, 0.0).unwrap();
        assert!((dice_loss(&zero, &t).unwrap() - (1.0 - 1.0 / 33.0)).abs() < 1e-12);
        assert_eq!(dice_loss(&zero, &BinaryMask::new(8, 8)).unwrap(), 0.0);
    }

    #[test]
    fn gamma_zero_is_bce() {
        let t = half();
        let vals: Vec<f64> = (0..64).map(|i| (i as f64 + 0.5) / 64.0).collect();
        let p = ProbMap::new(8, 8, vals.clone()).unwrap();
        let bce: f64 = vals
            .iter()
            .zip(t.to_bools())
            .map(|(&v, fg)| if fg { -v.ln() } else { -(1.0 - v).ln() })
            .sum::<f64>()
            / 64.0;
        assert!((focal_loss(&p, &t, 0.0, 1.0).unwrap() - bce).abs() < 1e-12);
    }

    #[test]
    fn invalid_inputs() {
        assert!(matches!(
            ProbMap::new(1, 2, vec![0.5, f64::NAN]),
            Err(Error::NonFinite(1))
        ));
        assert!(ProbMap::new(1, 2, vec![0.5, 1.5]).is_err());
        assert!(ProbMap::new(1, 2, vec![0.5]).is_err());
        let p = ProbMap::uniform(2, 2, 0.5).unwrap();
        assert!(focal_loss(&p, &BinaryMask::new(2, 3), 2.0, 0.25).is_err());
    }
}
