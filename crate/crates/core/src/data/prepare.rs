use rand::Rng;

use super::phones::{phoneme_sync_stretch, remove_silence, PhoneAnnotation};
use super::{PairedExample, UnpairedExample};
use crate::dsp::{random_resample, resample_audio, time_stretch, DspConfig, RandomResampleConfig, Waveform};
use crate::error::{Error, Result};
use crate::melody::{contour_from_f0, estimate_f0, F0Config, F0Track};

#[derive(Debug, Clone, PartialEq)]
pub struct PrepareConfig {
    pub dsp: DspConfig,
    pub f0: F0Config,
    /// Random resampling of the speech features before stretching; training
    /// data only.
    pub random_resample: Option<RandomResampleConfig>,
    /// Stretch each speech phone to its sung duration when both annotations
    /// are present.
    pub phsync: bool,
    /// Utterances shorter than this are skipped.
    pub min_duration_secs: f64,
    pub max_silence_secs: f64,
}

impl Default for PrepareConfig {
    fn default() -> Self {
        Self {
            dsp: DspConfig::default(),
            f0: F0Config::default(),
            random_resample: None,
            phsync: false,
            min_duration_secs: 1.5,
            max_silence_secs: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PrepareOutcome<T> {
    Ready(T),
    /// The example was dropped; the reason is for logs.
    Skipped(String),
}

impl<T> PrepareOutcome<T> {
    pub fn ready(self) -> Option<T> {
        match self {
            Self::Ready(t) => Some(t),
            Self::Skipped(_) => None,
        }
    }
}

fn at_rate(w: &Waveform, sr: u32) -> Result<Waveform> {
    if w.sample_rate() == sr {
        Ok(w.clone())
    } else {
        resample_audio(w, sr)
    }
}

/// Silence removal (or phone-level sync), log-mel analysis, contour
/// extraction from the singing, optional random resampling, and time
/// stretching so speech, singing and contour share a frame count.
///
/// `f0` overrides the built-in tracker for the singing contour.
pub fn prepare_paired<R: Rng + ?Sized>(
    id: &str,
    speech: &Waveform,
    singing: &Waveform,
    phones: Option<(&PhoneAnnotation, &PhoneAnnotation)>,
    f0: Option<&F0Track>,
    cfg: &PrepareConfig,
    rng: Option<&mut R>,
) -> Result<PrepareOutcome<PairedExample>> {
    if speech.is_empty() || singing.is_empty() {
        return Err(Error::invalid(format!("{id}: empty waveform")));
    }
    let dsp = &cfg.dsp;
    if singing.duration_secs() < cfg.min_duration_secs {
        return Ok(PrepareOutcome::Skipped(format!(
            "{id}: singing lasts {:.2} s, below {:.2} s",
            singing.duration_secs(),
            cfg.min_duration_secs
        )));
    }
    let fb = dsp.filterbank()?;
    let singing = at_rate(singing, dsp.sample_rate)?;
    let sing_mel = dsp.log_mel_with(&singing, &fb)?;
    let mut speech_mel = dsp.log_mel_with(speech, &fb)?;
    if let Some((sp, sg)) = phones {
        speech_mel = if cfg.phsync {
            phoneme_sync_stretch(&speech_mel, sp, sg)?
        } else {
            remove_silence(&speech_mel, sp)?
        };
    }
    if speech_mel.n_frames() == 0 {
        return Ok(PrepareOutcome::Skipped(format!("{id}: speech is empty after silence removal")));
    }
    let n = sing_mel.n_frames();
    let hop = dsp.hop as u32;
    let track = match f0 {
        Some(t) => t.clone(),
        None => estimate_f0(&singing, dsp.hop, &cfg.f0)?,
    };
    let contour = contour_from_f0(&track, n, hop, dsp.sample_rate)?;
    if let (Some(rr), Some(rng)) = (cfg.random_resample.as_ref(), rng) {
        speech_mel = random_resample(&speech_mel, rng, rr)?;
    }
    let speech_mel = time_stretch(&speech_mel, n)?;
    Ok(PrepareOutcome::Ready(PairedExample::new(id, speech_mel, sing_mel, contour)?))
}

/// Singing-only example: long unvoiced runs are cut and each remaining
/// segment becomes one example.
pub fn prepare_unpaired(
    id: &str,
    singing: &Waveform,
    f0: Option<&F0Track>,
    cfg: &PrepareConfig,
) -> Result<Vec<PrepareOutcome<UnpairedExample>>> {
    let dsp = &cfg.dsp;
    let singing = at_rate(singing, dsp.sample_rate)?;
    let track = match f0 {
        Some(t) => t.clone(),
        None => estimate_f0(&singing, dsp.hop, &cfg.f0)?,
    };
    let fb = dsp.filterbank()?;
    let mut out = Vec::new();
    let sr = dsp.sample_rate as f64;
    for (i, (a, b)) in voiced_spans(&singing, &track, cfg.max_silence_secs).into_iter().enumerate() {
        let seg = singing.slice(a, b);
        let seg_id = format!("{id}#{i}");
        if seg.duration_secs() < cfg.min_duration_secs {
            out.push(PrepareOutcome::Skipped(format!("{seg_id}: shorter than {:.2} s", cfg.min_duration_secs)));
            continue;
        }
        let mel = dsp.log_mel_with(&seg, &fb)?;
        let seg_track = match f0 {
            Some(t) => {
                let (t0, t1) = (a as f64 / sr, b as f64 / sr);
                let (times, hz): (Vec<f64>, Vec<f64>) = t
                    .times()
                    .iter()
                    .zip(t.f0_hz())
                    .filter(|(&x, _)| x >= t0 && x < t1)
                    .map(|(&x, &f)| (x - t0, f))
                    .unzip();
                F0Track::new(times, hz)?
            }
            None => estimate_f0(&seg, dsp.hop, &cfg.f0)?,
        };
        let contour = contour_from_f0(&seg_track, mel.n_frames(), dsp.hop as u32, dsp.sample_rate)?;
        out.push(PrepareOutcome::Ready(UnpairedExample::new(seg_id, mel, contour)?));
    }
    Ok(out)
}

/// Cuts out unvoiced runs longer than `max_silence` seconds and returns the
/// remaining pieces in order. Shorter gaps stay inside their segment.
pub fn filter_long_silence(singing: &Waveform, f0: &F0Track, max_silence: f64) -> Vec<Waveform> {
    voiced_spans(singing, f0, max_silence)
        .into_iter()
        .map(|(a, b)| singing.slice(a, b))
        .collect()
}

/// Sample ranges kept by [`filter_long_silence`].
fn voiced_spans(singing: &Waveform, f0: &F0Track, max_silence: f64) -> Vec<(usize, usize)> {
    let sr = singing.sample_rate() as f64;
    let n = singing.len();
    let times = f0.times();
    if times.is_empty() {
        return vec![(0, n)];
    }
    let period = if times.len() > 1 {
        (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64
    } else {
        n as f64 / sr
    };
    let to_sample = |t: f64| ((t * sr).round().max(0.0) as usize).min(n);
    let voiced = f0.voicing();
    let mut cuts = Vec::new();
    let mut i = 0;
    while i < voiced.len() {
        if voiced[i] {
            i += 1;
            continue;
        }
        let start = i;
        while i < voiced.len() && !voiced[i] {
            i += 1;
        }
        let (t0, t1) = (times[start], times[i - 1] + period);
        if t1 - t0 > max_silence {
            let a = if start == 0 { 0 } else { to_sample(t0) };
            let b = if i == voiced.len() { n } else { to_sample(t1) };
            cuts.push((a, b));
        }
    }
    let mut segments = Vec::new();
    let mut pos = 0;
    for (a, b) in cuts.into_iter().chain(std::iter::once((n, n))) {
        if a > pos {
            segments.push((pos, a));
        }
        pos = pos.max(b);
    }
    segments
}
