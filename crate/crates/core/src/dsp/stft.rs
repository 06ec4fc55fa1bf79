//! Short-time Fourier transform, its least-squares inverse and Griffin-Lim
//! phase reconstruction.
//!
//! Frames are centered: frame `t` covers samples around `t * hop`, with the
//! signal reflect-padded by `fft_size / 2` on both sides. The frame count is
//! `ceil(len / hop)` (at least one).

use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::audio::Waveform;
use crate::error::{Error, Result};

/// Magnitude spectrogram, `bins x frames` with `bins = fft_size / 2 + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSpectrogram {
    magnitudes: Array2<f32>,
    fft_size: usize,
    hop: usize,
    sample_rate: u32,
}

impl LinearSpectrogram {
    pub fn new(magnitudes: Array2<f32>, fft_size: usize, hop: usize, sample_rate: u32) -> Result<Self> {
        if magnitudes.nrows() != fft_size / 2 + 1 {
            return Err(Error::validation(format!(
                "expected {} bins for fft size {fft_size}, got {}",
                fft_size / 2 + 1,
                magnitudes.nrows()
            )));
        }
        if magnitudes.iter().any(|&m| !(m >= 0.0 && m.is_finite())) {
            return Err(Error::validation("magnitudes must be finite and nonnegative"));
        }
        if hop == 0 || sample_rate == 0 {
            return Err(Error::invalid("hop and sample rate must be positive"));
        }
        Ok(Self {
            magnitudes,
            fft_size,
            hop,
            sample_rate,
        })
    }

    pub fn magnitudes(&self) -> &Array2<f32> {
        &self.magnitudes
    }

    pub fn n_bins(&self) -> usize {
        self.magnitudes.nrows()
    }

    pub fn n_frames(&self) -> usize {
        self.magnitudes.ncols()
    }

    pub fn fft_size(&self) -> usize {
        self.fft_size
    }

    pub fn hop(&self) -> usize {
        self.hop
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }
}

/// Periodic Hann window.
pub fn hann_window(len: usize) -> Vec<f64> {
    (0..len)
        .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / len as f64).cos())
        .collect()
}

pub fn frame_count(len: usize, hop: usize) -> usize {
    len.div_ceil(hop).max(1)
}

/// Index into a signal of length `len` with reflection at both ends
/// (numpy's "reflect" mode, repeated as often as needed).
fn reflect_index(i: isize, len: usize) -> Option<usize> {
    match len {
        0 => None,
        1 => Some(0),
        _ => {
            let period = 2 * (len as isize - 1);
            let mut m = i.rem_euclid(period);
            if m >= len as isize {
                m = period - m;
            }
            Some(m as usize)
        }
    }
}

/// Shared FFT plans for one frame size.
struct Transform {
    size: usize,
    window: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl Transform {
    fn new(size: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            size,
            window: hann_window(size),
            forward: planner.plan_fft_forward(size),
            inverse: planner.plan_fft_inverse(size),
        }
    }

    fn bins(&self) -> usize {
        self.size / 2 + 1
    }

    /// Windowed forward transform of `frame` (length `size`), first `bins` outputs.
    fn analyze(&self, frame: impl Iterator<Item = f64>, buf: &mut Vec<Complex64>) {
        buf.clear();
        buf.extend(frame.zip(&self.window).map(|(x, w)| Complex64::new(x * w, 0.0)));
        self.forward.process(buf);
        buf.truncate(self.bins());
    }

    /// Real inverse transform of a half spectrum, windowed for overlap-add.
    fn synthesize(&self, half: &[Complex64], buf: &mut Vec<Complex64>) {
        let n = self.size;
        buf.clear();
        buf.resize(n, Complex64::new(0.0, 0.0));
        for (k, &c) in half.iter().enumerate() {
            buf[k] = c;
            if k > 0 && k < n - k {
                buf[n - k] = c.conj();
            }
        }
        buf[0].im = 0.0;
        if n.is_multiple_of(2) {
            buf[n / 2].im = 0.0;
        }
        self.inverse.process(buf);
        let scale = 1.0 / n as f64;
        for (c, w) in buf.iter_mut().zip(&self.window) {
            *c = Complex64::new(c.re * scale * w, 0.0);
        }
    }
}

fn validate_frame_params(fft_size: usize, hop: usize) -> Result<()> {
    if fft_size < 2 || !fft_size.is_power_of_two() {
        return Err(Error::invalid(format!("fft size {fft_size} is not a power of two")));
    }
    if hop == 0 {
        return Err(Error::invalid("hop must be positive"));
    }
    Ok(())
}

/// Magnitude of the centered, Hann-windowed STFT.
pub fn stft_magnitude(wave: &Waveform, fft_size: usize, hop: usize) -> Result<LinearSpectrogram> {
    validate_frame_params(fft_size, hop)?;
    let x: Vec<f64> = wave.samples().iter().map(|&s| s as f64).collect();
    let tf = Transform::new(fft_size);
    let frames = frame_count(x.len(), hop);
    let pad = (fft_size / 2) as isize;

    let mut mags = Array2::<f32>::zeros((tf.bins(), frames));
    let mut buf = Vec::with_capacity(fft_size);
    for t in 0..frames {
        let start = (t * hop) as isize - pad;
        let frame = (0..fft_size as isize).map(|j| {
            reflect_index(start + j, x.len()).map_or(0.0, |i| x[i])
        });
        tf.analyze(frame, &mut buf);
        for (k, c) in buf.iter().enumerate() {
            mags[[k, t]] = c.norm() as f32;
        }
    }
    LinearSpectrogram::new(mags, fft_size, hop, wave.sample_rate())
}

/// Overlap-add inverse of `frames` complex half-spectra (`frames[t][k]`),
/// producing the uncentered signal of length `(T - 1) * hop + fft_size`.
/// This is the least-squares signal estimate given the frames.
fn istft_uncentered(tf: &Transform, frames: &[Vec<Complex64>], hop: usize) -> Vec<f64> {
    let n = tf.size;
    let len = (frames.len().saturating_sub(1)) * hop + n;
    let mut out = vec![0.0; len];
    let mut norm = vec![0.0; len];
    let mut buf = Vec::with_capacity(n);
    for (t, half) in frames.iter().enumerate() {
        tf.synthesize(half, &mut buf);
        let off = t * hop;
        for j in 0..n {
            out[off + j] += buf[j].re;
            norm[off + j] += tf.window[j] * tf.window[j];
        }
    }
    for (o, w) in out.iter_mut().zip(&norm) {
        if *w > 1e-10 {
            *o /= *w;
        } else {
            *o = 0.0;
        }
    }
    out
}

/// Complex STFT of an uncentered signal, `frames` frames starting at 0.
fn stft_uncentered(tf: &Transform, x: &[f64], hop: usize, frames: usize) -> Vec<Vec<Complex64>> {
    let mut buf = Vec::with_capacity(tf.size);
    (0..frames)
        .map(|t| {
            let off = t * hop;
            let frame = (0..tf.size).map(|j| x.get(off + j).copied().unwrap_or(0.0));
            tf.analyze(frame, &mut buf);
            buf.clone()
        })
        .collect()
}

#[derive(Debug, Clone, Default)]
pub struct GriffinLimOptions {
    pub iterations: usize,
    /// Random initial phase from this seed; zero phase when `None`.
    pub seed: Option<u64>,
    /// Output length in samples; defaults to `frames * hop`.
    pub length: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct GriffinLimOutput {
    pub waveform: Waveform,
    /// Spectral convergence `‖|STFT(x)| − S‖ / ‖S‖` after each iteration.
    pub convergence: Vec<f64>,
}

pub const DEFAULT_GRIFFIN_LIM_ITERATIONS: usize = 60;

pub fn griffin_lim(spec: &LinearSpectrogram, iterations: usize) -> Result<Waveform> {
    Ok(griffin_lim_with(
        spec,
        &GriffinLimOptions {
            iterations,
            ..Default::default()
        },
    )?
    .waveform)
}

/// Griffin-Lim phase reconstruction.
///
/// Iterates in the padded signal domain, so every iteration is an exact
/// alternating projection and the convergence trace is non-increasing. The
/// centering pad is trimmed from the final signal only.
pub fn griffin_lim_with(spec: &LinearSpectrogram, opts: &GriffinLimOptions) -> Result<GriffinLimOutput> {
    let (fft_size, hop) = (spec.fft_size, spec.hop);
    validate_frame_params(fft_size, hop)?;
    let tf = Transform::new(fft_size);
    let (bins, frames) = spec.magnitudes.dim();
    let target: Vec<Vec<f64>> = (0..frames)
        .map(|t| (0..bins).map(|k| spec.magnitudes[[k, t]] as f64).collect())
        .collect();
    let target_norm = target.iter().flatten().map(|m| m * m).sum::<f64>().sqrt();

    let mut phase: Vec<Vec<f64>> = match opts.seed {
        None => vec![vec![0.0; bins]; frames],
        Some(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..frames)
                .map(|_| (0..bins).map(|_| rng.random_range(0.0..2.0 * PI)).collect())
                .collect()
        }
    };

    let combine = |phase: &[Vec<f64>]| -> Vec<Vec<Complex64>> {
        target
            .iter()
            .zip(phase)
            .map(|(mag, ph)| {
                mag.iter()
                    .zip(ph)
                    .map(|(&m, &p)| Complex64::from_polar(m, p))
                    .collect()
            })
            .collect()
    };

    let mut convergence = Vec::with_capacity(opts.iterations);
    for _ in 0..opts.iterations {
        let x = istft_uncentered(&tf, &combine(&phase), hop);
        let rebuilt = stft_uncentered(&tf, &x, hop, frames);
        let mut err = 0.0;
        for (t, frame) in rebuilt.iter().enumerate() {
            for (k, c) in frame.iter().enumerate() {
                let d = c.norm() - target[t][k];
                err += d * d;
                phase[t][k] = c.arg();
            }
        }
        convergence.push(if target_norm > 0.0 {
            err.sqrt() / target_norm
        } else {
            0.0
        });
    }

    let x = istft_uncentered(&tf, &combine(&phase), hop);
    let length = opts.length.unwrap_or(frames * hop);
    let pad = fft_size / 2;
    let samples = (0..length)
        .map(|i| x.get(i + pad).copied().unwrap_or(0.0) as f32)
        .collect();
    Ok(GriffinLimOutput {
        waveform: Waveform::new(samples, spec.sample_rate)?,
        convergence,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::melody::{estimate_f0, F0Config};

    #[test]
    fn zero_signal_gives_zero_spectrum() {
        let w = Waveform::silence(5000, 22050).unwrap();
        let s = stft_magnitude(&w, 1024, 276).unwrap();
        assert_eq!(s.n_bins(), 513);
        assert_eq!(s.n_frames(), 5000usize.div_ceil(276));
        assert!(s.magnitudes().iter().all(|&m| m == 0.0));
    }

    #[test]
    fn sine_peaks_at_expected_bin() {
        let w = Waveform::sine(440.0, 1.0, 1.0, 22050).unwrap();
        let s = stft_magnitude(&w, 1024, 276).unwrap();
        // round(440 * 1024 / 22050) = round(20.43) = 20
        let expected = (440.0f64 * 1024.0 / 22050.0).round() as usize;
        assert_eq!(expected, 20);
        for t in 0..s.n_frames() {
            let col = s.magnitudes().column(t);
            let arg = (0..col.len())
                .max_by(|&a, &b| col[a].partial_cmp(&col[b]).unwrap())
                .unwrap();
            if t == 0 {
                // reflect padding folds sin(wn) into sin(w|n|) around the first
                // frame center, which smears the peak by up to one bin
                assert!(arg.abs_diff(expected) <= 1, "frame 0 peak {arg}");
            } else {
                assert_eq!(arg, expected, "frame {t}");
            }
        }
    }

    #[test]
    fn shape_contract_for_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x: Vec<f32> = (0..10_000).map(|_| rng.random_range(-0.5..0.5)).collect();
        let s = stft_magnitude(&Waveform::new(x, 22050).unwrap(), 1024, 256).unwrap();
        assert_eq!(s.n_bins(), 513);
        assert_eq!(s.n_frames(), 40);
    }

    #[test]
    fn short_input_gives_one_frame() {
        let w = Waveform::new(vec![0.1, -0.2, 0.3], 22050).unwrap();
        let s = stft_magnitude(&w, 1024, 276).unwrap();
        assert_eq!(s.n_frames(), 1);
        let empty = Waveform::new(vec![], 22050).unwrap();
        assert_eq!(stft_magnitude(&empty, 1024, 276).unwrap().n_frames(), 1);
    }

    #[test]
    fn rejects_bad_frame_params() {
        let w = Waveform::silence(100, 22050).unwrap();
        assert!(stft_magnitude(&w, 1000, 276).is_err());
        assert!(stft_magnitude(&w, 1024, 0).is_err());
    }

    #[test]
    fn reflect_padding_indices() {
        // numpy reflect of [0,1,2,3]: ... 2 1 | 0 1 2 3 | 2 1 0 1 ...
        let idx: Vec<usize> = (-3..8).map(|i| reflect_index(i, 4).unwrap()).collect();
        assert_eq!(idx, vec![3, 2, 1, 0, 1, 2, 3, 2, 1, 0, 1]);
    }

    #[test]
    fn istft_inverts_stft_with_true_phase() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x: Vec<f64> = (0..4000).map(|_| rng.random_range(-1.0..1.0)).collect();
        let tf = Transform::new(256);
        let frames = (x.len() - 256) / 64 + 1;
        let spec = stft_uncentered(&tf, &x, 64, frames);
        let y = istft_uncentered(&tf, &spec, 64);
        // interior samples (full window overlap) are recovered exactly
        for i in 256..(frames - 1) * 64 {
            assert!((x[i] - y[i]).abs() < 1e-9, "sample {i}");
        }
    }

    #[test]
    fn griffin_lim_zero_spectrum_is_silent() {
        let s = LinearSpectrogram::new(Array2::zeros((513, 20)), 1024, 276, 22050).unwrap();
        let w = griffin_lim(&s, 10).unwrap();
        assert_eq!(w.len(), 20 * 276);
        assert!(w.samples().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn griffin_lim_zero_iterations_is_deterministic() {
        let w = Waveform::sine(300.0, 0.5, 0.3, 22050).unwrap();
        let s = stft_magnitude(&w, 1024, 276).unwrap();
        let a = griffin_lim(&s, 0).unwrap();
        let b = griffin_lim(&s, 0).unwrap();
        assert_eq!(a, b);
        assert!(a.samples().iter().any(|&v| v != 0.0));
    }

    #[test]
    fn griffin_lim_recovers_sine_pitch() {
        let w = Waveform::sine(440.0, 0.8, 1.0, 22050).unwrap();
        let s = stft_magnitude(&w, 1024, 276).unwrap();
        let out = griffin_lim(&s, 60).unwrap();
        let track = estimate_f0(&out, 276, &F0Config::default()).unwrap();
        let mut voiced: Vec<f64> = track.f0_hz().iter().copied().filter(|&f| f > 0.0).collect();
        voiced.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = voiced[voiced.len() / 2];
        assert!((median - 440.0).abs() / 440.0 < 0.01, "median {median}");
    }

    #[test]
    fn griffin_lim_convergence_is_monotone() {
        // a chirp-like mix so the phase problem is not trivial
        let sr = 22050;
        let x: Vec<f32> = (0..sr / 2)
            .map(|n| {
                let t = n as f64 / sr as f64;
                (0.4 * (2.0 * PI * (200.0 + 300.0 * t) * t).sin() + 0.3 * (2.0 * PI * 1250.0 * t).sin()) as f32
            })
            .collect();
        let s = stft_magnitude(&Waveform::new(x, sr).unwrap(), 1024, 276).unwrap();
        for seed in [None, Some(5)] {
            let out = griffin_lim_with(
                &s,
                &GriffinLimOptions {
                    iterations: 10,
                    seed,
                    length: None,
                },
            )
            .unwrap();
            for pair in out.convergence.windows(2) {
                assert!(pair[1] <= pair[0] + 1e-12, "{:?}", out.convergence);
            }
        }
    }

    #[test]
    fn seeded_random_phase_is_reproducible() {
        let w = Waveform::sine(500.0, 0.5, 0.2, 22050).unwrap();
        let s = stft_magnitude(&w, 1024, 276).unwrap();
        let opts = GriffinLimOptions {
            iterations: 3,
            seed: Some(42),
            length: Some(1000),
        };
        let a = griffin_lim_with(&s, &opts).unwrap();
        let b = griffin_lim_with(&s, &opts).unwrap();
        assert_eq!(a.waveform, b.waveform);
        assert_eq!(a.waveform.len(), 1000);
    }
}
