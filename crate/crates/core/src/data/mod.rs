//! Manifests, phone annotations, silence handling, paired example
//! preparation and synthetic toy data.

mod manifest;
mod phones;
mod prepare;
mod synthetic;

pub use manifest::{load_manifest, parse_manifest, Manifest, ManifestRecord, RecordError};
pub use phones::{
    frame_at, phoneme_sync_stretch, remove_silence, PhoneAnnotation, PhoneEntry, DEFAULT_SILENCE_LABELS,
};
pub use prepare::{filter_long_silence, prepare_paired, prepare_unpaired, PrepareConfig, PrepareOutcome};
pub use synthetic::{
    make_synthetic_pair, synthetic_ridge_bin, SyntheticParams, SYNTHETIC_BACKGROUND, SYNTHETIC_RIDGE,
};

use crate::dsp::LogMelSpectrogram;
use crate::error::{Error, Result};
use crate::melody::MelodyContour;

/// Speech and singing features of one utterance, aligned frame for frame
/// with the singing's melody contour.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedExample {
    pub id: String,
    pub speech: LogMelSpectrogram,
    pub singing: LogMelSpectrogram,
    pub contour: MelodyContour,
}

impl PairedExample {
    pub fn new(
        id: impl Into<String>,
        speech: LogMelSpectrogram,
        singing: LogMelSpectrogram,
        contour: MelodyContour,
    ) -> Result<Self> {
        let id = id.into();
        let n = singing.n_frames();
        if speech.n_frames() != n || contour.n_frames() != n {
            return Err(Error::validation(format!(
                "{id}: speech {} / singing {n} / contour {} frames differ",
                speech.n_frames(),
                contour.n_frames()
            )));
        }
        if speech.n_mels() != singing.n_mels() {
            return Err(Error::validation(format!("{id}: speech and singing mel counts differ")));
        }
        Ok(Self {
            id,
            speech,
            singing,
            contour,
        })
    }

    pub fn n_frames(&self) -> usize {
        self.singing.n_frames()
    }
}

/// Singing with its own contour and no speech counterpart.
#[derive(Debug, Clone, PartialEq)]
pub struct UnpairedExample {
    pub id: String,
    pub singing: LogMelSpectrogram,
    pub contour: MelodyContour,
}

impl UnpairedExample {
    pub fn new(id: impl Into<String>, singing: LogMelSpectrogram, contour: MelodyContour) -> Result<Self> {
        let id = id.into();
        if singing.n_frames() != contour.n_frames() {
            return Err(Error::validation(format!(
                "{id}: singing {} and contour {} frames differ",
                singing.n_frames(),
                contour.n_frames()
            )));
        }
        Ok(Self { id, singing, contour })
    }

    pub fn n_frames(&self) -> usize {
        self.singing.n_frames()
    }
}
