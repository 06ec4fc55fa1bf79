//! Toy paired data with a known answer: the "speech" carries per-syllable
//! band patterns at a steady tempo, the "singing" carries the same patterns
//! under a bright ridge at each note's pitch.

use ndarray::Array2;
use rand::Rng;

use super::PairedExample;
use crate::dsp::{stretch_frames, DspConfig, LogMelSpectrogram, MelFilterbank};
use crate::error::{Error, Result};
use crate::melody::{midi_to_hz, MelodyContour};

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticParams {
    pub n_notes: usize,
    pub frames_per_note: usize,
    pub n_mels: usize,
    /// Inclusive MIDI range of the notes.
    pub midi_min: u8,
    pub midi_max: u8,
    /// Speech frames per syllable before stretching to the singing length.
    pub speech_frames_per_note: usize,
}

impl Default for SyntheticParams {
    fn default() -> Self {
        Self {
            n_notes: 8,
            frames_per_note: 32,
            n_mels: 80,
            midi_min: 55,
            midi_max: 79,
            speech_frames_per_note: 20,
        }
    }
}

/// Log level of everything outside the bands.
pub const SYNTHETIC_BACKGROUND: f32 = -5.0;
/// Peak height of the pitch ridge above the background.
pub const SYNTHETIC_RIDGE: f32 = 5.0;
const BAND_MAX: f64 = 3.0;
const SPEECH_PITCH_HZ: f64 = 120.0;
const SPEECH_RIDGE: f64 = 1.5;

struct Band {
    center: f64,
    width: f64,
    amp: f64,
}

fn bands_at(bands: &[Band], bin: usize) -> f64 {
    bands
        .iter()
        .map(|b| b.amp * (-(bin as f64 - b.center).powi(2) / (2.0 * b.width * b.width)).exp())
        .fold(0.0, f64::max)
}

fn ridge_at(center: usize, bin: usize, amp: f64) -> f64 {
    amp * (-((bin as f64 - center as f64).powi(2)) / (2.0 * 0.6 * 0.6)).exp()
}

/// Mel bin where a note's ridge is drawn.
pub fn synthetic_ridge_bin(fb: &MelFilterbank, midi: u8) -> usize {
    fb.nearest_filter(midi_to_hz(midi))
}

pub fn make_synthetic_pair<R: Rng + ?Sized>(rng: &mut R, params: &SyntheticParams, id: &str) -> Result<PairedExample> {
    let SyntheticParams {
        n_notes,
        frames_per_note,
        n_mels,
        midi_min,
        midi_max,
        speech_frames_per_note,
    } = *params;
    if n_notes == 0 || frames_per_note == 0 || n_mels < 4 || speech_frames_per_note == 0 {
        return Err(Error::invalid("synthetic parameters must be positive (n_mels >= 4)"));
    }
    if midi_min == 0 || midi_min > midi_max || midi_max > 127 {
        return Err(Error::invalid("MIDI range must lie within 1..=127"));
    }
    let dsp = DspConfig {
        n_mels,
        ..DspConfig::default()
    };
    let fb = dsp.filterbank()?;
    let (hop, sr) = (dsp.hop as u32, dsp.sample_rate);

    let notes: Vec<u8> = (0..n_notes).map(|_| rng.random_range(midi_min..=midi_max)).collect();
    let syllables: Vec<Vec<Band>> = (0..n_notes)
        .map(|_| {
            (0..rng.random_range(2..=3))
                .map(|_| Band {
                    center: rng.random_range(0.0..n_mels as f64),
                    width: rng.random_range(1.5..4.0),
                    amp: rng.random_range(1.5..BAND_MAX),
                })
                .collect()
        })
        .collect();

    let total = n_notes * frames_per_note;
    let mut singing = Array2::from_elem((n_mels, total), SYNTHETIC_BACKGROUND);
    for (i, (&note, bands)) in notes.iter().zip(&syllables).enumerate() {
        let ridge = synthetic_ridge_bin(&fb, note);
        for k in 0..frames_per_note {
            let env = 1.0 - 0.2 * k as f64 / frames_per_note as f64;
            for bin in 0..n_mels {
                let v = bands_at(bands, bin).max(ridge_at(ridge, bin, SYNTHETIC_RIDGE as f64));
                singing[[bin, i * frames_per_note + k]] = SYNTHETIC_BACKGROUND + (env * v) as f32;
            }
        }
    }

    let low = fb.nearest_filter(SPEECH_PITCH_HZ);
    let speech_len = n_notes * speech_frames_per_note;
    let mut speech = Array2::from_elem((n_mels, speech_len), SYNTHETIC_BACKGROUND);
    for (i, bands) in syllables.iter().enumerate() {
        for k in 0..speech_frames_per_note {
            for bin in 0..n_mels {
                let v = bands_at(bands, bin).max(ridge_at(low, bin, SPEECH_RIDGE));
                speech[[bin, i * speech_frames_per_note + k]] = SYNTHETIC_BACKGROUND + v as f32;
            }
        }
    }
    let speech = stretch_frames(speech.view(), total);

    let rows = notes.iter().flat_map(|&n| std::iter::repeat_n(n, frames_per_note)).collect();
    PairedExample::new(
        id,
        LogMelSpectrogram::new(speech, hop, sr)?,
        LogMelSpectrogram::new(singing, hop, sr)?,
        MelodyContour::from_rows(rows, hop, sr)?,
    )
}
