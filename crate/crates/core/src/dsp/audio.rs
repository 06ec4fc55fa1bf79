use std::f64::consts::PI;
use std::path::Path;

use crate::error::{Error, Result};

/// Mono audio at a fixed sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<f32>,
    sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::invalid("sample rate must be positive"));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::validation(format!("sample {i} is not finite")));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn silence(len: usize, sample_rate: u32) -> Result<Self> {
        Self::new(vec![0.0; len], sample_rate)
    }

    /// A sine tone, mostly useful for tests and examples.
    pub fn sine(freq_hz: f64, amplitude: f64, seconds: f64, sample_rate: u32) -> Result<Self> {
        let len = (seconds * sample_rate as f64).round() as usize;
        let samples = (0..len)
            .map(|n| (amplitude * (2.0 * PI * freq_hz * n as f64 / sample_rate as f64).sin()) as f32)
            .collect();
        Self::new(samples, sample_rate)
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f32> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Samples in `[start, end)`, clamped to the signal.
    pub fn slice(&self, start: usize, end: usize) -> Waveform {
        let end = end.min(self.samples.len());
        let start = start.min(end);
        Waveform {
            samples: self.samples[start..end].to_vec(),
            sample_rate: self.sample_rate,
        }
    }
}

const SINC_ZERO_CROSSINGS: f64 = 32.0;
const DOWNSAMPLE_ROLLOFF: f64 = 0.97;

/// Band-limited resampling by windowed-sinc interpolation (Blackman window).
pub fn resample_audio(wave: &Waveform, dst_rate: u32) -> Result<Waveform> {
    if dst_rate == 0 {
        return Err(Error::invalid("destination sample rate must be positive"));
    }
    let src_rate = wave.sample_rate;
    if src_rate == dst_rate || wave.is_empty() {
        return Ok(Waveform {
            samples: if src_rate == dst_rate {
                wave.samples.clone()
            } else {
                Vec::new()
            },
            sample_rate: dst_rate,
        });
    }

    let ratio = dst_rate as f64 / src_rate as f64;
    let cutoff = if ratio < 1.0 {
        ratio * DOWNSAMPLE_ROLLOFF
    } else {
        1.0
    };
    let half_width = SINC_ZERO_CROSSINGS / cutoff;
    let x = &wave.samples;
    let out_len = (x.len() as u64 * dst_rate as u64).div_ceil(src_rate as u64) as usize;

    let mut out = Vec::with_capacity(out_len);
    for n in 0..out_len {
        let t = n as f64 * src_rate as f64 / dst_rate as f64;
        let lo = ((t - half_width).ceil().max(0.0)) as usize;
        let hi = ((t + half_width).floor() as usize).min(x.len() - 1);
        let mut acc = 0.0f64;
        for (k, &sample) in x.iter().enumerate().take(hi + 1).skip(lo) {
            let d = t - k as f64;
            acc += sample as f64 * cutoff * sinc(cutoff * d) * blackman(d / half_width);
        }
        out.push(acc as f32);
    }
    Waveform::new(out, dst_rate)
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        let px = PI * x;
        px.sin() / px
    }
}

/// Blackman window on `[-1, 1]`, zero outside.
fn blackman(u: f64) -> f64 {
    if u.abs() > 1.0 {
        return 0.0;
    }
    let phase = PI * (u + 1.0);
    0.42 - 0.5 * phase.cos() + 0.08 * (2.0 * phase).cos()
}

/// Reads a RIFF WAV file (integer PCM or 32-bit float). Multi-channel audio is
/// downmixed by averaging.
pub fn read_wav(path: impl AsRef<Path>) -> Result<Waveform> {
    let path = path.as_ref();
    let mut reader = hound::WavReader::open(path).map_err(|e| match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => Error::Format {
            path: path.to_path_buf(),
            message: other.to_string(),
        },
    })?;
    let spec = reader.spec();
    let channels = spec.channels.max(1) as usize;

    let interleaved: Vec<f32> = match spec.sample_format {
        hound::SampleFormat::Float => reader.samples::<f32>().collect::<Result<_, _>>()?,
        hound::SampleFormat::Int => {
            let scale = 1.0 / (1u64 << (spec.bits_per_sample - 1)) as f32;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f32 * scale))
                .collect::<Result<_, _>>()?
        }
    };

    let samples = interleaved
        .chunks(channels)
        .map(|frame| frame.iter().sum::<f32>() / frame.len() as f32)
        .collect();
    Waveform::new(samples, spec.sample_rate)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WavFormat {
    #[default]
    Pcm16,
    Float32,
}

pub fn write_wav(path: impl AsRef<Path>, wave: &Waveform, format: WavFormat) -> Result<()> {
    let path = path.as_ref();
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: wave.sample_rate,
        bits_per_sample: match format {
            WavFormat::Pcm16 => 16,
            WavFormat::Float32 => 32,
        },
        sample_format: match format {
            WavFormat::Pcm16 => hound::SampleFormat::Int,
            WavFormat::Float32 => hound::SampleFormat::Float,
        },
    };
    let mut writer = hound::WavWriter::create(path, spec)?;
    for &s in &wave.samples {
        match format {
            WavFormat::Pcm16 => {
                let v = (s.clamp(-1.0, 1.0) * i16::MAX as f32).round() as i16;
                writer.write_sample(v)?;
            }
            WavFormat::Float32 => writer.write_sample(s)?,
        }
    }
    writer.finalize()?;
    Ok(())
}
