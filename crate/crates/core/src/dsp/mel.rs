//! Mel filterbank (Slaney scale, area-normalized triangles), log
//! compression and the nonnegative inverse projection.

use ndarray::Array2;

use super::stft::LinearSpectrogram;
use crate::error::{Error, Result};

pub const DEFAULT_FLOOR_EPS: f64 = 1e-5;

const F_SP: f64 = 200.0 / 3.0;
const MIN_LOG_HZ: f64 = 1000.0;
const MIN_LOG_MEL: f64 = MIN_LOG_HZ / F_SP;

fn log_step() -> f64 {
    6.4f64.ln() / 27.0
}

/// Slaney mel scale: linear below 1 kHz, logarithmic above.
pub fn hz_to_mel(hz: f64) -> f64 {
    if hz < MIN_LOG_HZ {
        hz / F_SP
    } else {
        MIN_LOG_MEL + (hz / MIN_LOG_HZ).ln() / log_step()
    }
}

pub fn mel_to_hz(mel: f64) -> f64 {
    if mel < MIN_LOG_MEL {
        mel * F_SP
    } else {
        MIN_LOG_HZ * (log_step() * (mel - MIN_LOG_MEL)).exp()
    }
}

/// Triangular filterbank of shape `n_mels x (fft_size / 2 + 1)`.
#[derive(Debug, Clone)]
pub struct MelFilterbank {
    weights: Array2<f64>,
    /// Per-filter `[start, end)` of nonzero bins.
    support: Vec<(usize, usize)>,
    /// Band edges in Hz, `n_mels + 2` values.
    edges: Vec<f64>,
    sample_rate: u32,
    fft_size: usize,
}

impl MelFilterbank {
    pub fn new(sample_rate: u32, fft_size: usize, n_mels: usize, fmin: f64, fmax: f64) -> Result<Self> {
        let nyquist = sample_rate as f64 / 2.0;
        if !(0.0 <= fmin && fmin < fmax && fmax <= nyquist) {
            return Err(Error::invalid(format!(
                "mel band [{fmin}, {fmax}] must satisfy 0 <= fmin < fmax <= {nyquist}"
            )));
        }
        let bins = fft_size / 2 + 1;
        if n_mels == 0 || n_mels > bins {
            return Err(Error::invalid(format!(
                "n_mels = {n_mels} must be in 1..={bins} for fft size {fft_size}"
            )));
        }

        let (lo, hi) = (hz_to_mel(fmin), hz_to_mel(fmax));
        let edges: Vec<f64> = (0..n_mels + 2)
            .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (n_mels + 1) as f64))
            .collect();
        let fft_freqs: Vec<f64> = (0..bins)
            .map(|k| k as f64 * sample_rate as f64 / fft_size as f64)
            .collect();

        let mut weights = Array2::zeros((n_mels, bins));
        let mut support = Vec::with_capacity(n_mels);
        for i in 0..n_mels {
            let (left, center, right) = (edges[i], edges[i + 1], edges[i + 2]);
            let norm = 2.0 / (right - left);
            let mut first = bins;
            let mut last = 0;
            for (k, &f) in fft_freqs.iter().enumerate() {
                let lower = (f - left) / (center - left);
                let upper = (right - f) / (right - center);
                let w = lower.min(upper).max(0.0);
                if w > 0.0 {
                    weights[[i, k]] = w * norm;
                    first = first.min(k);
                    last = k + 1;
                }
            }
            support.push(if first < last { (first, last) } else { (0, 0) });
        }
        Ok(Self {
            weights,
            support,
            edges,
            sample_rate,
            fft_size,
        })
    }

    pub fn n_mels(&self) -> usize {
        self.weights.nrows()
    }

    pub fn n_bins(&self) -> usize {
        self.weights.ncols()
    }

    pub fn fft_size(&self) -> usize {
        self.fft_size
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn weights(&self) -> &Array2<f64> {
        &self.weights
    }

    /// Center frequency of each filter in Hz.
    pub fn center_frequencies(&self) -> Vec<f64> {
        self.edges[1..self.edges.len() - 1].to_vec()
    }

    /// Filter whose center frequency is closest to `hz`.
    pub fn nearest_filter(&self, hz: f64) -> usize {
        let centers = self.center_frequencies();
        (0..centers.len())
            .min_by(|&a, &b| {
                (centers[a] - hz)
                    .abs()
                    .partial_cmp(&(centers[b] - hz).abs())
                    .unwrap()
            })
            .unwrap_or(0)
    }

    /// `M · S` for a `bins x frames` matrix.
    pub fn project(&self, spec: &LinearSpectrogram) -> Result<Array2<f32>> {
        if spec.n_bins() != self.n_bins() {
            return Err(Error::validation(format!(
                "spectrogram has {} bins, filterbank expects {}",
                spec.n_bins(),
                self.n_bins()
            )));
        }
        let mags = spec.magnitudes();
        let frames = spec.n_frames();
        let mut out = Array2::<f32>::zeros((self.n_mels(), frames));
        for (i, &(a, b)) in self.support.iter().enumerate() {
            for t in 0..frames {
                let acc: f64 = (a..b).map(|k| self.weights[[i, k]] * mags[[k, t]] as f64).sum();
                out[[i, t]] = acc as f32;
            }
        }
        Ok(out)
    }

    fn apply(&self, s: &[f64], out: &mut [f64]) {
        for (i, &(a, b)) in self.support.iter().enumerate() {
            out[i] = (a..b).map(|k| self.weights[[i, k]] * s[k]).sum();
        }
    }

    fn apply_transpose(&self, m: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for (i, &(a, b)) in self.support.iter().enumerate() {
            for k in a..b {
                out[k] += self.weights[[i, k]] * m[i];
            }
        }
    }

    /// Largest eigenvalue of `MᵀM` by power iteration.
    fn lipschitz(&self) -> f64 {
        let mut v = vec![1.0; self.n_bins()];
        let mut mv = vec![0.0; self.n_mels()];
        let mut lambda = 0.0;
        for _ in 0..100 {
            self.apply(&v, &mut mv);
            let mut w = vec![0.0; self.n_bins()];
            self.apply_transpose(&mv, &mut w);
            let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                return 1.0;
            }
            lambda = norm / v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v = w.into_iter().map(|x| x / norm).collect();
        }
        lambda
    }

    /// Nonnegative least-squares solution of `M s ≈ m` per frame, by
    /// accelerated projected gradient.
    pub fn invert(&self, mel: &Array2<f64>, iterations: usize) -> Array2<f64> {
        let (n_mels, frames) = mel.dim();
        let bins = self.n_bins();
        let step = 1.0 / self.lipschitz();
        let row_sums: Vec<f64> = (0..n_mels).map(|i| self.weights.row(i).sum()).collect();
        let mut out = Array2::zeros((bins, frames));

        let mut m = vec![0.0; n_mels];
        let mut resid = vec![0.0; n_mels];
        let mut grad = vec![0.0; bins];
        for t in 0..frames {
            for i in 0..n_mels {
                m[i] = mel[[i, t]];
            }
            // transpose-normalized start
            let scaled: Vec<f64> = m
                .iter()
                .zip(&row_sums)
                .map(|(v, s)| if *s > 0.0 { v / s } else { 0.0 })
                .collect();
            let mut x = vec![0.0; bins];
            self.apply_transpose(&scaled, &mut x);
            let mut y = x.clone();
            let mut momentum = 1.0f64;
            for _ in 0..iterations {
                self.apply(&y, &mut resid);
                for i in 0..n_mels {
                    resid[i] -= m[i];
                }
                self.apply_transpose(&resid, &mut grad);
                let next_momentum = (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt()) / 2.0;
                let beta = (momentum - 1.0) / next_momentum;
                for k in 0..bins {
                    let x_new = (y[k] - step * grad[k]).max(0.0);
                    y[k] = x_new + beta * (x_new - x[k]);
                    x[k] = x_new;
                }
                momentum = next_momentum;
            }
            for k in 0..bins {
                out[[k, t]] = x[k];
            }
        }
        out
    }
}

/// Natural-log mel spectrogram, `n_mels x frames`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogMelSpectrogram {
    values: Array2<f32>,
    hop: u32,
    sample_rate: u32,
}

impl LogMelSpectrogram {
    pub fn new(values: Array2<f32>, hop: u32, sample_rate: u32) -> Result<Self> {
        if hop == 0 || sample_rate == 0 {
            return Err(Error::invalid("hop and sample rate must be positive"));
        }
        if let Some(((i, t), _)) = values.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::validation(format!(
                "log-mel value at (bin {i}, frame {t}) is not finite"
            )));
        }
        Ok(Self {
            values,
            hop,
            sample_rate,
        })
    }

    pub fn values(&self) -> &Array2<f32> {
        &self.values
    }

    pub fn into_values(self) -> Array2<f32> {
        self.values
    }

    pub fn n_mels(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_frames(&self) -> usize {
        self.values.ncols()
    }

    pub fn hop(&self) -> u32 {
        self.hop
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    /// Frames per second.
    pub fn frame_rate(&self) -> f64 {
        self.sample_rate as f64 / self.hop as f64
    }

    /// Same timing metadata, new values.
    pub fn with_values(&self, values: Array2<f32>) -> Result<Self> {
        Self::new(values, self.hop, self.sample_rate)
    }
}

/// Mel projection of a linear spectrogram.
pub fn mel_project(spec: &LinearSpectrogram, n_mels: usize, fmin: f64, fmax: f64) -> Result<Array2<f32>> {
    MelFilterbank::new(spec.sample_rate(), spec.fft_size(), n_mels, fmin, fmax)?.project(spec)
}

/// `ln(max(mel, floor_eps))` element-wise.
pub fn log_compress(mel: &Array2<f32>, floor_eps: f64, hop: u32, sample_rate: u32) -> Result<LogMelSpectrogram> {
    if !(floor_eps > 0.0) {
        return Err(Error::invalid("log floor must be positive"));
    }
    let values = mel.mapv(|v| (v as f64).max(floor_eps).ln() as f32);
    LogMelSpectrogram::new(values, hop, sample_rate)
}

const INVERT_ITERATIONS: usize = 200;

/// Maps a log-mel spectrogram back to linear-frequency magnitudes.
///
/// The floor is treated as silence: the nonnegative least-squares target is
/// `max(exp(x) - floor_eps, 0)`, so a spectrogram sitting at the floor inverts
/// to exactly zero energy.
pub fn mel_invert(x: &LogMelSpectrogram, fb: &MelFilterbank, floor_eps: f64) -> Result<LinearSpectrogram> {
    if x.n_mels() != fb.n_mels() {
        return Err(Error::validation(format!(
            "spectrogram has {} mel bins, filterbank has {}",
            x.n_mels(),
            fb.n_mels()
        )));
    }
    let target = x.values().mapv(|v| ((v as f64).exp() - floor_eps).max(0.0));
    let linear = fb.invert(&target, INVERT_ITERATIONS);
    LinearSpectrogram::new(
        linear.mapv(|v| v as f32),
        fb.fft_size(),
        x.hop() as usize,
        x.sample_rate(),
    )
}
