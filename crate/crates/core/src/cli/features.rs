//! On-disk feature cache written by `prepare`.
//!
//! ```text
//! <dir>/dsp.json                 feature settings
//! <dir>/<id>/entry.json          id, kind, segment count, input stamp
//! <dir>/<id>/speech.mel1         paired records
//! <dir>/<id>/singing.mel1
//! <dir>/<id>/contour.f0
//! <dir>/<id>/singing-000.mel1    singing-only records, one pair per segment
//! <dir>/<id>/contour-000.f0
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{PairedExample, UnpairedExample};
use crate::dsp::{read_mel1, write_mel1, DspConfig, LogMelSpectrogram};
use crate::error::{Error, Result};
use crate::melody::{contour_from_f0, load_f0_file, write_f0_file, MelodyContour};

pub const FEATURES_DSP_FILE: &str = "dsp.json";
pub const ENTRY_FILE: &str = "entry.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub(crate) enum EntryKind {
    Paired,
    Unpaired,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(crate) struct Entry {
    pub id: String,
    pub kind: EntryKind,
    /// Ready examples stored; 0 when the record was skipped.
    pub segments: usize,
    pub stamp: String,
}

/// Directory name for a record id.
pub(crate) fn entry_dir(root: &Path, id: &str) -> PathBuf {
    let safe: String = id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' })
        .collect();
    root.join(safe)
}

pub(crate) fn read_entry(dir: &Path) -> Option<Entry> {
    let text = std::fs::read_to_string(dir.join(ENTRY_FILE)).ok()?;
    serde_json::from_str(&text).ok()
}

pub(crate) fn write_entry(dir: &Path, entry: &Entry) -> Result<()> {
    let path = dir.join(ENTRY_FILE);
    let text = serde_json::to_string_pretty(entry)?;
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

fn write_contour(path: &Path, c: &MelodyContour) -> Result<()> {
    write_f0_file(path, &c.to_f0_track()?)
}

fn read_contour(path: &Path, like: &LogMelSpectrogram) -> Result<MelodyContour> {
    contour_from_f0(&load_f0_file(path)?, like.n_frames(), like.hop(), like.sample_rate())
}

pub(crate) fn write_paired(dir: &Path, ex: &PairedExample) -> Result<()> {
    write_mel1(dir.join("speech.mel1"), &ex.speech)?;
    write_mel1(dir.join("singing.mel1"), &ex.singing)?;
    write_contour(&dir.join("contour.f0"), &ex.contour)
}

pub(crate) fn write_unpaired(dir: &Path, i: usize, ex: &UnpairedExample) -> Result<()> {
    write_mel1(dir.join(format!("singing-{i:03}.mel1")), &ex.singing)?;
    write_contour(&dir.join(format!("contour-{i:03}.f0")), &ex.contour)
}

#[derive(Debug, Clone)]
pub struct FeatureSet {
    pub dsp: DspConfig,
    pub paired: Vec<PairedExample>,
    pub unpaired: Vec<UnpairedExample>,
}

pub(crate) fn read_dsp(root: &Path) -> Result<Option<DspConfig>> {
    let path = root.join(FEATURES_DSP_FILE);
    if !path.exists() {
        return Ok(None);
    }
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    Ok(Some(serde_json::from_str(&text)?))
}

/// Loads every prepared record under `root`, ordered by directory name.
pub fn load_features(root: impl AsRef<Path>) -> Result<FeatureSet> {
    let root = root.as_ref();
    let dsp = read_dsp(root)?.ok_or_else(|| {
        Error::validation(format!("{} is not a feature directory (no {FEATURES_DSP_FILE})", root.display()))
    })?;
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(root)
        .map_err(|e| Error::io(root, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(ENTRY_FILE).is_file())
        .collect();
    dirs.sort();
    let mut set = FeatureSet {
        dsp,
        paired: Vec::new(),
        unpaired: Vec::new(),
    };
    for dir in dirs {
        let entry = read_entry(&dir).ok_or_else(|| Error::Format {
            path: dir.join(ENTRY_FILE),
            message: "unreadable entry".into(),
        })?;
        match entry.kind {
            EntryKind::Paired if entry.segments > 0 => {
                let singing = read_mel1(dir.join("singing.mel1"))?;
                let contour = read_contour(&dir.join("contour.f0"), &singing)?;
                let speech = read_mel1(dir.join("speech.mel1"))?;
                set.paired.push(PairedExample::new(entry.id, speech, singing, contour)?);
            }
            EntryKind::Paired => {}
            EntryKind::Unpaired => {
                for i in 0..entry.segments {
                    let singing = read_mel1(dir.join(format!("singing-{i:03}.mel1")))?;
                    let contour = read_contour(&dir.join(format!("contour-{i:03}.f0")), &singing)?;
                    set.unpaired
                        .push(UnpairedExample::new(format!("{}#{i}", entry.id), singing, contour)?);
                }
            }
        }
    }
    Ok(set)
}
