use std::path::Path;

use ndarray::{s, Array2, Axis};

use crate::dsp::{stretch_frames, LogMelSpectrogram, DEFAULT_FLOOR_EPS};
use crate::error::{Error, Result};

pub const DEFAULT_SILENCE_LABELS: [&str; 3] = ["sil", "sp", "br"];

#[derive(Debug, Clone, PartialEq)]
pub struct PhoneEntry {
    pub label: String,
    pub start: f64,
    pub end: f64,
}

/// Time-ordered, non-overlapping phone spans in seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct PhoneAnnotation {
    entries: Vec<PhoneEntry>,
    silence: Vec<String>,
}

/// Index of the first frame whose center `t * hop / sr` is at or after
/// `time`.
pub fn frame_at(time: f64, frame_rate: f64) -> usize {
    (time * frame_rate - 1e-6).ceil().max(0.0) as usize
}

impl PhoneAnnotation {
    pub fn new(entries: Vec<PhoneEntry>) -> Result<Self> {
        let mut prev_end = f64::NEG_INFINITY;
        for (i, e) in entries.iter().enumerate() {
            if !(e.start.is_finite() && e.end.is_finite()) || e.start < 0.0 || e.end <= e.start {
                return Err(Error::validation(format!(
                    "phone {i} ({}) has invalid span {}..{}",
                    e.label, e.start, e.end
                )));
            }
            if e.start < prev_end - 1e-9 {
                return Err(Error::validation(format!("phone {i} ({}) overlaps its predecessor", e.label)));
            }
            prev_end = e.end;
        }
        Ok(Self {
            entries,
            silence: DEFAULT_SILENCE_LABELS.iter().map(|s| s.to_string()).collect(),
        })
    }

    pub fn with_silence_labels(mut self, labels: impl IntoIterator<Item = impl Into<String>>) -> Self {
        self.silence = labels.into_iter().map(Into::into).collect();
        self
    }

    /// Parses `label start end` lines; blank lines and `#` comments are
    /// skipped.
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| Error::Parse {
                path: origin.to_string(),
                line: n + 1,
                message,
            };
            let fields: Vec<&str> = line.split_whitespace().collect();
            let [label, start, end] = fields[..] else {
                return Err(err(format!("expected `label start end`, got {} fields", fields.len())));
            };
            let num = |s: &str| s.parse::<f64>().map_err(|_| err(format!("bad time {s:?}")));
            entries.push(PhoneEntry {
                label: label.to_string(),
                start: num(start)?,
                end: num(end)?,
            });
        }
        Self::new(entries).map_err(|e| Error::Parse {
            path: origin.to_string(),
            line: 0,
            message: e.to_string(),
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn entries(&self) -> &[PhoneEntry] {
        &self.entries
    }

    pub fn is_silence(&self, label: &str) -> bool {
        self.silence.iter().any(|s| s == label)
    }

    /// End of the last phone, or 0.
    pub fn end(&self) -> f64 {
        self.entries.last().map_or(0.0, |e| e.end)
    }

    /// Labels with silence removed.
    pub fn voiced_labels(&self) -> Vec<&str> {
        self.entries
            .iter()
            .filter(|e| !self.is_silence(&e.label))
            .map(|e| e.label.as_str())
            .collect()
    }
}

fn check_covers(x: &LogMelSpectrogram, phones: &PhoneAnnotation, what: &str) -> Result<()> {
    let duration = x.n_frames() as f64 / x.frame_rate();
    if phones.end() > duration + 1e-6 {
        return Err(Error::validation(format!(
            "{what} annotation ends at {:.3} s but audio lasts {duration:.3} s",
            phones.end()
        )));
    }
    Ok(())
}

/// Drops every frame whose center lies inside a silence-labelled span.
pub fn remove_silence(speech: &LogMelSpectrogram, phones: &PhoneAnnotation) -> Result<LogMelSpectrogram> {
    check_covers(speech, phones, "speech")?;
    let fps = speech.frame_rate();
    let n = speech.n_frames();
    let mut keep = vec![true; n];
    for e in phones.entries().iter().filter(|e| phones.is_silence(&e.label)) {
        let (a, b) = (frame_at(e.start, fps).min(n), frame_at(e.end, fps).min(n));
        keep[a..b].iter_mut().for_each(|k| *k = false);
    }
    let idx: Vec<usize> = (0..n).filter(|&t| keep[t]).collect();
    speech.with_values(speech.values().select(Axis(1), &idx))
}

/// Stretches each non-silence speech phone to the frame count of its sung
/// counterpart. Silence and unannotated gaps in the singing timeline are
/// filled with the log floor. Output length is the frame index of the end
/// of the singing annotation.
pub fn phoneme_sync_stretch(
    speech: &LogMelSpectrogram,
    speech_phones: &PhoneAnnotation,
    singing_phones: &PhoneAnnotation,
) -> Result<LogMelSpectrogram> {
    let a = speech_phones.voiced_labels();
    let b = singing_phones.voiced_labels();
    if a != b {
        let i = a.iter().zip(&b).take_while(|(x, y)| x == y).count();
        let show = |v: &[&str]| v.get(i).map_or("<end>".to_string(), |s| format!("{s:?}"));
        return Err(Error::validation(format!(
            "phone sequences differ at index {i}: speech {} vs singing {}",
            show(&a),
            show(&b)
        )));
    }
    check_covers(speech, speech_phones, "speech")?;
    let fps = speech.frame_rate();
    let n = speech.n_frames();
    let f = speech.n_mels();
    let floor = DEFAULT_FLOOR_EPS.ln() as f32;
    let mut sources = speech_phones.entries().iter().filter(|e| !speech_phones.is_silence(&e.label));
    let total = frame_at(singing_phones.end(), fps);
    let mut out = Array2::from_elem((f, total), floor);
    for e in singing_phones.entries() {
        let (s0, s1) = (frame_at(e.start, fps), frame_at(e.end, fps));
        if singing_phones.is_silence(&e.label) || s1 == s0 {
            if !singing_phones.is_silence(&e.label) {
                sources.next();
            }
            continue;
        }
        let src = sources.next().expect("label sequences already matched");
        let (mut a0, mut a1) = (frame_at(src.start, fps).min(n), frame_at(src.end, fps).min(n));
        if a1 == a0 {
            // phone shorter than a frame: borrow the nearest frame
            a0 = a0.min(n.saturating_sub(1));
            a1 = a0 + 1;
        }
        let stretched = stretch_frames(speech.values().slice(s![.., a0..a1]), s1 - s0);
        out.slice_mut(s![.., s0..s1]).assign(&stretched);
    }
    speech.with_values(out)
}
