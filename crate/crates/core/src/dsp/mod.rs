//! Signal processing kernels: resampling, STFT, mel features, time
//! stretching, Griffin-Lim, and audio/feature file I/O.

mod audio;
mod mel;
mod mel_file;
mod stft;
mod stretch;

pub use audio::{read_wav, resample_audio, write_wav, WavFormat, Waveform};
pub use mel::{
    hz_to_mel, log_compress, mel_invert, mel_project, mel_to_hz, LogMelSpectrogram, MelFilterbank,
    DEFAULT_FLOOR_EPS,
};
pub use mel_file::{decode_mel1, encode_mel1, read_mel1, write_mel1, MEL1_MAGIC};
pub use stft::{
    frame_count, griffin_lim, griffin_lim_with, hann_window, stft_magnitude, GriffinLimOptions,
    GriffinLimOutput, LinearSpectrogram, DEFAULT_GRIFFIN_LIM_ITERATIONS,
};
pub use stretch::{random_resample, stretch_frames, time_stretch, RandomResampleConfig};

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// Feature extraction settings. Defaults: 22.05 kHz audio, 1024-point FFT,
/// 276-sample hop (12.5 ms rounded to an integer), 80 mel bins over
/// `[0, sr/2]`, natural log with a `1e-5` floor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DspConfig {
    pub sample_rate: u32,
    pub fft_size: usize,
    pub hop: usize,
    pub n_mels: usize,
    pub fmin: f64,
    /// Upper mel edge; `None` means Nyquist.
    pub fmax: Option<f64>,
    pub floor_eps: f64,
    pub griffin_lim_iterations: usize,
}

impl Default for DspConfig {
    fn default() -> Self {
        Self {
            sample_rate: 22050,
            fft_size: 1024,
            hop: 276,
            n_mels: 80,
            fmin: 0.0,
            fmax: None,
            floor_eps: DEFAULT_FLOOR_EPS,
            griffin_lim_iterations: DEFAULT_GRIFFIN_LIM_ITERATIONS,
        }
    }
}

impl DspConfig {
    pub fn fmax(&self) -> f64 {
        self.fmax.unwrap_or(self.sample_rate as f64 / 2.0)
    }

    pub fn log_floor(&self) -> f32 {
        self.floor_eps.ln() as f32
    }

    pub fn frame_rate(&self) -> f64 {
        self.sample_rate as f64 / self.hop as f64
    }

    pub fn filterbank(&self) -> Result<MelFilterbank> {
        MelFilterbank::new(self.sample_rate, self.fft_size, self.n_mels, self.fmin, self.fmax())
    }

    /// Resamples to the working rate if needed, then computes the log-mel
    /// spectrogram.
    pub fn log_mel(&self, wave: &Waveform) -> Result<LogMelSpectrogram> {
        self.log_mel_with(wave, &self.filterbank()?)
    }

    pub fn log_mel_with(&self, wave: &Waveform, fb: &MelFilterbank) -> Result<LogMelSpectrogram> {
        let resampled;
        let wave = if wave.sample_rate() != self.sample_rate {
            resampled = resample_audio(wave, self.sample_rate)?;
            &resampled
        } else {
            wave
        };
        let spec = stft_magnitude(wave, self.fft_size, self.hop)?;
        let mel = fb.project(&spec)?;
        log_compress(&mel, self.floor_eps, self.hop as u32, self.sample_rate)
    }

    /// Inverts a log-mel spectrogram to audio with Griffin-Lim; output length
    /// is `frames * hop`.
    pub fn to_waveform(&self, mel: &LogMelSpectrogram, fb: &MelFilterbank) -> Result<Waveform> {
        let linear = mel_invert(mel, fb, self.floor_eps)?;
        griffin_lim(&linear, self.griffin_lim_iterations)
    }
}
