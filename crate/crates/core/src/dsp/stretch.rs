use ndarray::{s, Array2, ArrayView2, Axis};
use rand::Rng;

use super::mel::LogMelSpectrogram;
use crate::error::{Error, Result};

/// Linear interpolation of `values` (rows x frames) along time to `target` frames.
/// Output frame `t'` samples input position `t' (T - 1) / (T' - 1)`, so both
/// endpoints are kept exactly. A single input frame is repeated.
pub fn stretch_frames(values: ArrayView2<f32>, target: usize) -> Array2<f32> {
    let (rows, frames) = values.dim();
    let mut out = Array2::zeros((rows, target));
    if frames == 0 || target == 0 {
        return out;
    }
    if frames == target {
        out.assign(&values);
        return out;
    }
    if frames == 1 || target == 1 {
        for t in 0..target {
            out.column_mut(t).assign(&values.column(0));
        }
        return out;
    }
    let scale = (frames - 1) as f64 / (target - 1) as f64;
    for t in 0..target {
        let pos = t as f64 * scale;
        let lo = (pos.floor() as usize).min(frames - 1);
        let hi = (lo + 1).min(frames - 1);
        let frac = pos - lo as f64;
        for r in 0..rows {
            let (a, b) = (values[[r, lo]] as f64, values[[r, hi]] as f64);
            out[[r, t]] = if frac == 0.0 { a as f32 } else { (a + (b - a) * frac) as f32 };
        }
    }
    out
}

/// Time-stretches a log-mel spectrogram to `target_frames` frames.
pub fn time_stretch(x: &LogMelSpectrogram, target_frames: usize) -> Result<LogMelSpectrogram> {
    if target_frames == 0 {
        return Err(Error::invalid("target frame count must be at least 1"));
    }
    if x.n_frames() == 0 {
        return Err(Error::invalid("cannot stretch an empty spectrogram"));
    }
    x.with_values(stretch_frames(x.values().view(), target_frames))
}

/// Segment and rate bounds for random resampling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomResampleConfig {
    pub seg_min: usize,
    pub seg_max: usize,
    pub rate_min: f64,
    pub rate_max: f64,
}

impl Default for RandomResampleConfig {
    fn default() -> Self {
        Self {
            seg_min: 16,
            seg_max: 32,
            rate_min: 0.5,
            rate_max: 2.0,
        }
    }
}

impl RandomResampleConfig {
    fn validate(&self) -> Result<()> {
        if self.seg_min == 0 || self.seg_min > self.seg_max {
            return Err(Error::invalid("segment bounds must satisfy 1 <= seg_min <= seg_max"));
        }
        if !(self.rate_min > 0.0 && self.rate_min <= self.rate_max) {
            return Err(Error::invalid("rate bounds must satisfy 0 < rate_min <= rate_max"));
        }
        Ok(())
    }
}

/// Splits `x` left to right into segments of random length and stretches each
/// by an independent random factor, then concatenates.
pub fn random_resample<R: Rng + ?Sized>(
    x: &LogMelSpectrogram,
    rng: &mut R,
    cfg: &RandomResampleConfig,
) -> Result<LogMelSpectrogram> {
    cfg.validate()?;
    let frames = x.n_frames();
    if frames == 0 {
        return Err(Error::invalid("cannot resample an empty spectrogram"));
    }
    let mut pieces = Vec::new();
    let mut start = 0;
    while start < frames {
        let len = rng.random_range(cfg.seg_min..=cfg.seg_max).min(frames - start);
        let rate = rng.random_range(cfg.rate_min..=cfg.rate_max);
        let new_len = ((len as f64 * rate).round() as usize).max(1);
        let seg = x.values().slice(s![.., start..start + len]);
        pieces.push(stretch_frames(seg, new_len));
        start += len;
    }
    let views: Vec<_> = pieces.iter().map(|p| p.view()).collect();
    let joined = ndarray::concatenate(Axis(1), &views)
        .map_err(|e| Error::validation(e.to_string()))?;
    x.with_values(joined)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn mel(values: Array2<f32>) -> LogMelSpectrogram {
        LogMelSpectrogram::new(values, 276, 22050).unwrap()
    }

    #[test]
    fn identity_length_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = mel(Array2::from_shape_fn((5, 13), |_| rng.random_range(-3.0..3.0)));
        assert_eq!(time_stretch(&x, 13).unwrap(), x);
    }

    #[test]
    fn constant_stays_constant() {
        let x = mel(Array2::from_elem((4, 9), -2.5));
        for t in [1, 2, 9, 17, 40] {
            let y = time_stretch(&x, t).unwrap();
            assert_eq!(y.n_frames(), t);
            assert!(y.values().iter().all(|&v| v == -2.5));
        }
    }

    #[test]
    fn ramp_matches_closed_form() {
        // frame j of a 50-frame ramp has value j / 49; stretching to 99 frames
        // samples position t * 49 / 98 = t / 2, i.e. value t / 98.
        let x = mel(Array2::from_shape_fn((3, 50), |(_, j)| j as f32 / 49.0));
        let y = time_stretch(&x, 99).unwrap();
        for t in 0..99 {
            let expected = t as f64 / 98.0;
            for r in 0..3 {
                assert!((y.values()[[r, t]] as f64 - expected).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn endpoints_preserved_and_single_frame_repeats() {
        let x = mel(Array2::from_shape_fn((2, 7), |(r, j)| (r * 10 + j) as f32));
        let y = time_stretch(&x, 23).unwrap();
        assert_eq!(y.values().column(0), x.values().column(0));
        assert_eq!(y.values().column(22), x.values().column(6));

        let one = mel(Array2::from_shape_vec((2, 1), vec![1.0, 2.0]).unwrap());
        let y = time_stretch(&one, 4).unwrap();
        for t in 0..4 {
            assert_eq!(y.values()[[0, t]], 1.0);
            assert_eq!(y.values()[[1, t]], 2.0);
        }
        assert!(time_stretch(&one, 0).is_err());
    }

    #[test]
    fn random_resample_bounds_and_determinism() {
        let x = mel(Array2::from_shape_fn((3, 64), |(r, j)| (r + j) as f32));
        let cfg = RandomResampleConfig::default();
        for seed in 0..50 {
            let a = random_resample(&x, &mut ChaCha8Rng::seed_from_u64(seed), &cfg).unwrap();
            let b = random_resample(&x, &mut ChaCha8Rng::seed_from_u64(seed), &cfg).unwrap();
            assert_eq!(a, b);
            assert!((32..=128).contains(&a.n_frames()), "{}", a.n_frames());
        }
    }

    #[test]
    fn random_resample_short_and_constant_input() {
        let x = mel(Array2::from_elem((2, 5), 0.75));
        let y = random_resample(&x, &mut ChaCha8Rng::seed_from_u64(9), &Default::default()).unwrap();
        assert!((3..=10).contains(&y.n_frames()));
        assert!(y.values().iter().all(|&v| v == 0.75));
    }
}
