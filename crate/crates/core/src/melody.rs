//! F0 tracking, MIDI quantization and one-hot melody contours.
//!
//! The built-in tracker is a YIN-style estimator (cumulative mean normalized
//! difference with parabolic refinement). An F0 text file, when given,
//! always takes precedence over it.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array2;

use crate::dsp::Waveform;
use crate::error::{Error, Result};

/// Number of rows of a melody contour (MIDI notes 0..=127).
pub const N_NOTES: usize = 128;

/// Row used for unvoiced frames. MIDI note 0 (8.18 Hz) is never sung.
pub const REST_ROW: usize = 0;

/// Time-stamped F0 values; `0` marks an unvoiced frame.
#[derive(Debug, Clone, PartialEq)]
pub struct F0Track {
    times: Vec<f64>,
    f0_hz: Vec<f64>,
    voicing: Vec<bool>,
}

impl F0Track {
    /// Builds a track from times and frequencies; voicing is `f0 > 0`.
    pub fn new(times: Vec<f64>, f0_hz: Vec<f64>) -> Result<Self> {
        if times.len() != f0_hz.len() {
            return Err(Error::validation(format!(
                "{} times but {} f0 values",
                times.len(),
                f0_hz.len()
            )));
        }
        if let Some(i) = times.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(Error::validation(format!(
                "times must be strictly increasing (index {})",
                i + 1
            )));
        }
        if let Some(i) = f0_hz.iter().position(|f| !(f.is_finite() && *f >= 0.0)) {
            return Err(Error::validation(format!("f0 at index {i} is negative or not finite")));
        }
        if times.iter().any(|t| !t.is_finite()) {
            return Err(Error::validation("times must be finite"));
        }
        let voicing = f0_hz.iter().map(|&f| f > 0.0).collect();
        Ok(Self {
            times,
            f0_hz,
            voicing,
        })
    }

    /// Track sampled on a uniform grid `i * hop / sample_rate`.
    pub fn uniform(f0_hz: Vec<f64>, hop: usize, sample_rate: u32) -> Result<Self> {
        let step = hop as f64 / sample_rate as f64;
        let times = (0..f0_hz.len()).map(|i| i as f64 * step).collect();
        Self::new(times, f0_hz)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn f0_hz(&self) -> &[f64] {
        &self.f0_hz
    }

    pub fn voicing(&self) -> &[bool] {
        &self.voicing
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Index of the sample nearest in time to `t`.
    pub fn nearest_index(&self, t: f64) -> Option<usize> {
        if self.times.is_empty() {
            return None;
        }
        let i = self.times.partition_point(|&x| x < t);
        if i == 0 {
            Some(0)
        } else if i == self.times.len() || t - self.times[i - 1] <= self.times[i] - t {
            Some(i - 1)
        } else {
            Some(i)
        }
    }

    /// Every voiced value multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.times.clone(), self.f0_hz.iter().map(|f| f * factor).collect())
    }

    /// Nearest-time resampling onto another track's time grid.
    pub fn resampled_to(&self, times: &[f64]) -> Result<Self> {
        let f0 = times
            .iter()
            .map(|&t| self.nearest_index(t).map_or(0.0, |i| self.f0_hz[i]))
            .collect();
        Self::new(times.to_vec(), f0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct F0Config {
    pub fmin: f64,
    pub fmax: f64,
    /// Cumulative-mean-normalized difference below which a lag counts as periodic.
    pub threshold: f64,
    /// Analysis window in seconds.
    pub window_secs: f64,
    /// Frames with RMS below this are unvoiced.
    pub silence_rms: f64,
}

impl Default for F0Config {
    fn default() -> Self {
        Self {
            fmin: 50.0,
            fmax: 1000.0,
            threshold: 0.15,
            window_secs: 0.025,
            silence_rms: 1e-4,
        }
    }
}

/// One F0 estimate per hop, frame `i` centered at sample `i * hop`
/// (`ceil(len / hop)` frames, matching the STFT grid).
pub fn estimate_f0(wave: &Waveform, hop: usize, cfg: &F0Config) -> Result<F0Track> {
    if wave.is_empty() {
        return Err(Error::invalid("cannot track pitch of an empty waveform"));
    }
    if hop == 0 {
        return Err(Error::invalid("hop must be positive"));
    }
    if !(cfg.fmin > 0.0 && cfg.fmin < cfg.fmax) {
        return Err(Error::invalid("pitch range must satisfy 0 < fmin < fmax"));
    }
    let sr = wave.sample_rate() as f64;
    let x = wave.samples();
    let tau_min = ((sr / cfg.fmax).floor() as usize).max(2);
    let tau_max = (sr / cfg.fmin).ceil() as usize;
    let window = ((cfg.window_secs * sr).round() as usize).max(tau_max / 2).max(8);
    let span = window + tau_max + 1;
    let frames = crate::dsp::frame_count(x.len(), hop);

    let mut buf = vec![0.0f64; span];
    let mut diff = vec![0.0f64; tau_max + 2];
    let mut f0 = Vec::with_capacity(frames);
    for i in 0..frames {
        let start = (i * hop) as isize - (span / 2) as isize;
        for (j, b) in buf.iter_mut().enumerate() {
            let idx = start + j as isize;
            *b = if idx >= 0 && (idx as usize) < x.len() {
                x[idx as usize] as f64
            } else {
                0.0
            };
        }
        let rms = (buf[..window].iter().map(|v| v * v).sum::<f64>() / window as f64).sqrt();
        let center_rms = {
            let c = span / 2;
            let lo = c.saturating_sub(window / 2);
            let seg = &buf[lo..(lo + window).min(span)];
            (seg.iter().map(|v| v * v).sum::<f64>() / seg.len() as f64).sqrt()
        };
        if rms.max(center_rms) < cfg.silence_rms {
            f0.push(0.0);
            continue;
        }
        f0.push(yin_frame(&buf, window, tau_min, tau_max, cfg.threshold, &mut diff).map_or(0.0, |tau| sr / tau));
    }
    let f0 = f0
        .into_iter()
        .map(|f| if f >= cfg.fmin && f <= cfg.fmax { f } else { 0.0 })
        .collect();
    F0Track::uniform(f0, hop, wave.sample_rate())
}

/// Returns the refined period in samples, or `None` when no lag is periodic enough.
fn yin_frame(
    buf: &[f64],
    window: usize,
    tau_min: usize,
    tau_max: usize,
    threshold: f64,
    diff: &mut [f64],
) -> Option<f64> {
    diff[0] = 1.0;
    let mut running = 0.0;
    for tau in 1..=tau_max + 1 {
        let d: f64 = (0..window).map(|j| {
            let e = buf[j] - buf[j + tau];
            e * e
        }).sum();
        running += d;
        diff[tau] = if running > 0.0 { d * tau as f64 / running } else { 1.0 };
    }

    let mut tau = tau_min;
    while tau <= tau_max {
        if diff[tau] < threshold {
            while tau < tau_max && diff[tau + 1] < diff[tau] {
                tau += 1;
            }
            let (a, b, c) = (diff[tau - 1], diff[tau], diff[tau + 1]);
            let denom = a - 2.0 * b + c;
            let shift = if denom.abs() > 1e-12 {
                (0.5 * (a - c) / denom).clamp(-1.0, 1.0)
            } else {
                0.0
            };
            return Some(tau as f64 + shift);
        }
        tau += 1;
    }
    None
}

/// A quantized pitch: a MIDI note or a rest.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Note {
    Rest,
    Midi(u8),
}

impl Note {
    /// Row of the one-hot contour.
    pub fn row(self) -> usize {
        match self {
            Note::Rest => REST_ROW,
            Note::Midi(n) => n as usize,
        }
    }
}

/// `round(69 + 12 log2(f / 440))` clamped to `[0, 127]`, rounding halves up;
/// `0 Hz` is a rest.
pub fn hz_to_midi(f0: f64) -> Result<Note> {
    if !(f0 >= 0.0) || !f0.is_finite() {
        return Err(Error::invalid(format!("f0 must be a nonnegative frequency, got {f0}")));
    }
    if f0 == 0.0 {
        return Ok(Note::Rest);
    }
    let midi = (69.0 + 12.0 * (f0 / 440.0).log2() + 0.5).floor();
    Ok(Note::Midi(midi.clamp(0.0, 127.0) as u8))
}

pub fn midi_to_hz(note: u8) -> f64 {
    440.0 * 2f64.powf((note as f64 - 69.0) / 12.0)
}

/// One-hot melody, stored as one row index per frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MelodyContour {
    rows: Vec<u8>,
    frame_hop: u32,
    sample_rate: u32,
}

impl MelodyContour {
    pub fn from_rows(rows: Vec<u8>, frame_hop: u32, sample_rate: u32) -> Result<Self> {
        if rows.iter().any(|&r| r as usize >= N_NOTES) {
            return Err(Error::validation("contour row out of range"));
        }
        Ok(Self {
            rows,
            frame_hop,
            sample_rate,
        })
    }

    /// Validates a dense `128 x T` matrix; every column must be exactly one-hot.
    pub fn from_onehot(onehot: &Array2<f32>, frame_hop: u32, sample_rate: u32) -> Result<Self> {
        if onehot.nrows() != N_NOTES {
            return Err(Error::validation(format!(
                "contour must have {N_NOTES} rows, got {}",
                onehot.nrows()
            )));
        }
        let mut rows = Vec::with_capacity(onehot.ncols());
        for (t, col) in onehot.columns().into_iter().enumerate() {
            let mut hot = None;
            for (r, &v) in col.iter().enumerate() {
                if v == 1.0 {
                    if hot.is_some() {
                        return Err(Error::validation(format!("column {t} has several ones")));
                    }
                    hot = Some(r as u8);
                } else if v != 0.0 {
                    return Err(Error::validation(format!("column {t} has entry {v} not in {{0, 1}}")));
                }
            }
            rows.push(hot.ok_or_else(|| Error::validation(format!("column {t} has no one")))?);
        }
        Ok(Self {
            rows,
            frame_hop,
            sample_rate,
        })
    }

    pub fn onehot(&self) -> Array2<f32> {
        let mut m = Array2::zeros((N_NOTES, self.rows.len()));
        for (t, &r) in self.rows.iter().enumerate() {
            m[[r as usize, t]] = 1.0;
        }
        m
    }

    pub fn rows(&self) -> &[u8] {
        &self.rows
    }

    pub fn n_frames(&self) -> usize {
        self.rows.len()
    }

    pub fn frame_hop(&self) -> u32 {
        self.frame_hop
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    /// Frames `[start, end)`, padded with rests past the end.
    pub fn window(&self, start: usize, len: usize) -> MelodyContour {
        let rows = (start..start + len)
            .map(|t| self.rows.get(t).copied().unwrap_or(REST_ROW as u8))
            .collect();
        MelodyContour {
            rows,
            frame_hop: self.frame_hop,
            sample_rate: self.sample_rate,
        }
    }

    /// The contour as an F0 track on its frame grid (rests map to 0 Hz).
    pub fn to_f0_track(&self) -> Result<F0Track> {
        let f0 = self
            .rows
            .iter()
            .map(|&r| if r as usize == REST_ROW { 0.0 } else { midi_to_hz(r) })
            .collect();
        F0Track::uniform(f0, self.frame_hop as usize, self.sample_rate)
    }
}

/// Quantizes `track` onto a grid of `n_frames` frames spaced `frame_hop`
/// samples apart (nearest-time lookup) and one-hot encodes each note.
pub fn contour_from_f0(
    track: &F0Track,
    n_frames: usize,
    frame_hop: u32,
    sample_rate: u32,
) -> Result<MelodyContour> {
    if track.is_empty() {
        return Err(Error::invalid("F0 track is empty"));
    }
    if n_frames == 0 {
        return Err(Error::invalid("contour needs at least one frame"));
    }
    if frame_hop == 0 || sample_rate == 0 {
        return Err(Error::invalid("hop and sample rate must be positive"));
    }
    let step = frame_hop as f64 / sample_rate as f64;
    let rows = (0..n_frames)
        .map(|j| {
            let i = track.nearest_index(j as f64 * step).unwrap_or(0);
            hz_to_midi(track.f0_hz()[i]).map(|n| n.row() as u8)
        })
        .collect::<Result<Vec<_>>>()?;
    MelodyContour::from_rows(rows, frame_hop, sample_rate)
}

/// Parses the F0 text format: one `time_sec f0_hz` pair per line, `#`
/// comments and blank lines ignored, `0` for unvoiced.
pub fn parse_f0_text(text: &str, origin: &str) -> Result<F0Track> {
    let mut times = Vec::new();
    let mut f0 = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |message: String| Error::Parse {
            path: origin.to_string(),
            line: n + 1,
            message,
        };
        let mut fields = line.split_whitespace();
        let (Some(t), Some(f), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(err(format!("expected `time f0`, got {line:?}")));
        };
        let t: f64 = t.parse().map_err(|_| err(format!("bad time {t:?}")))?;
        let f: f64 = f.parse().map_err(|_| err(format!("bad frequency {f:?}")))?;
        if !(f >= 0.0) || !f.is_finite() || !t.is_finite() {
            return Err(err(format!("invalid values {line:?}")));
        }
        times.push(t);
        f0.push(f);
    }
    F0Track::new(times, f0)
}

pub fn load_f0_file(path: impl AsRef<Path>) -> Result<F0Track> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_f0_text(&text, &path.display().to_string())
}

pub fn format_f0_text(track: &F0Track) -> String {
    let mut out = String::new();
    for (t, f) in track.times().iter().zip(track.f0_hz()) {
        let _ = writeln!(out, "{t} {f}");
    }
    out
}

pub fn write_f0_file(path: impl AsRef<Path>, track: &F0Track) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, format_f0_text(track)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn median_voiced(track: &F0Track) -> f64 {
        let mut v: Vec<f64> = track.f0_hz().iter().copied().filter(|&f| f > 0.0).collect();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v[v.len() / 2]
    }

    #[test]
    fn tracks_a4() {
        let w = Waveform::sine(440.0, 0.5, 1.0, 22050).unwrap();
        let track = estimate_f0(&w, 276, &F0Config::default()).unwrap();
        let good = track
            .f0_hz()
            .iter()
            .filter(|&&f| f > 0.0 && (f - 440.0).abs() / 440.0 < 0.01)
            .count();
        assert!(good as f64 >= 0.95 * track.len() as f64, "{good}/{}", track.len());
    }

    #[test]
    fn tracks_a3() {
        let w = Waveform::sine(220.0, 0.5, 1.0, 22050).unwrap();
        let track = estimate_f0(&w, 276, &F0Config::default()).unwrap();
        assert!((median_voiced(&track) - 220.0).abs() / 220.0 < 0.01);
    }

    #[test]
    fn silence_is_unvoiced() {
        let w = Waveform::silence(22050, 22050).unwrap();
        let track = estimate_f0(&w, 276, &F0Config::default()).unwrap();
        assert!(track.voicing().iter().all(|&v| !v));
        assert!(estimate_f0(&Waveform::new(vec![], 22050).unwrap(), 276, &F0Config::default()).is_err());
    }

    #[test]
    fn midi_reference_points() {
        assert_eq!(hz_to_midi(440.0).unwrap(), Note::Midi(69));
        assert_eq!(hz_to_midi(261.6256).unwrap(), Note::Midi(60));
        assert_eq!(hz_to_midi(0.0).unwrap(), Note::Rest);
        assert_eq!(hz_to_midi(1.0).unwrap(), Note::Midi(0));
        assert_eq!(hz_to_midi(1e6).unwrap(), Note::Midi(127));
        assert!(matches!(hz_to_midi(-1.0), Err(Error::InvalidArgument(_))));
        // halves round up: 69.5 semitones
        let half = 440.0 * 2f64.powf(0.5 / 12.0);
        assert_eq!(hz_to_midi(half * (1.0 + 1e-12)).unwrap(), Note::Midi(70));
    }

    #[test]
    fn constant_track_contour() {
        let track = F0Track::uniform(vec![440.0; 100], 276, 22050).unwrap();
        let c = contour_from_f0(&track, 100, 276, 22050).unwrap();
        let m = c.onehot();
        assert_eq!(m.dim(), (128, 100));
        for t in 0..100 {
            assert_eq!(m[[69, t]], 1.0);
            assert_eq!(m.column(t).sum(), 1.0);
        }
    }

    #[test]
    fn unvoiced_and_alternating_tracks() {
        let track = F0Track::uniform(vec![0.0; 10], 276, 22050).unwrap();
        let c = contour_from_f0(&track, 10, 276, 22050).unwrap();
        assert!(c.rows().iter().all(|&r| r == 0));

        let alt: Vec<f64> = (0..20).map(|i| if i % 2 == 0 { 440.0 } else { 880.0 }).collect();
        let track = F0Track::uniform(alt, 276, 22050).unwrap();
        let c = contour_from_f0(&track, 20, 276, 22050).unwrap();
        for (i, &r) in c.rows().iter().enumerate() {
            assert_eq!(r, if i % 2 == 0 { 69 } else { 81 });
        }
        assert!(contour_from_f0(&track, 0, 276, 22050).is_err());
    }

    #[test]
    fn onehot_validation() {
        let mut m = Array2::zeros((128, 3));
        m[[5, 0]] = 1.0;
        m[[6, 1]] = 1.0;
        m[[7, 2]] = 1.0;
        let c = MelodyContour::from_onehot(&m, 276, 22050).unwrap();
        assert_eq!(c.rows(), &[5, 6, 7]);
        assert_eq!(c.onehot(), m);
        m[[8, 2]] = 1.0;
        assert!(MelodyContour::from_onehot(&m, 276, 22050).is_err());
        m[[8, 2]] = 0.0;
        m[[7, 2]] = 0.5;
        assert!(MelodyContour::from_onehot(&m, 276, 22050).is_err());
    }

    #[test]
    fn f0_file_parsing() {
        let t = parse_f0_text("0.00 440.0\n0.01 441.0", "f").unwrap();
        assert_eq!(t.len(), 2);
        assert!(t.voicing().iter().all(|&v| v));

        let t = parse_f0_text("# comment\n\n0.00 0.0\n", "f").unwrap();
        assert_eq!(t.len(), 1);
        assert!(!t.voicing()[0]);

        match parse_f0_text("abc 440", "f") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("{other:?}"),
        }
        match parse_f0_text("0.0 1\n0.1 2\n0.1 3", "f") {
            Err(Error::Validation(_)) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn f0_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.f0");
        let t = F0Track::uniform(vec![0.0, 220.5, 441.25], 276, 22050).unwrap();
        write_f0_file(&p, &t).unwrap();
        assert_eq!(load_f0_file(&p).unwrap(), t);
    }

    proptest! {
        #[test]
        fn octave_up_adds_twelve(f in 8.2f64..6000.0) {
            if let (Note::Midi(a), Note::Midi(b)) = (hz_to_midi(f).unwrap(), hz_to_midi(2.0 * f).unwrap()) {
                if a > 0 && b < 127 {
                    prop_assert_eq!(b, a + 12);
                }
            }
        }

        #[test]
        fn contour_transposes_by_rows(notes in proptest::collection::vec(30u8..100, 1..40)) {
            let f0: Vec<f64> = notes.iter().map(|&n| midi_to_hz(n)).collect();
            let track = F0Track::uniform(f0, 276, 22050).unwrap();
            let up = track.scaled(2.0).unwrap();
            let a = contour_from_f0(&track, notes.len(), 276, 22050).unwrap();
            let b = contour_from_f0(&up, notes.len(), 276, 22050).unwrap();
            for (x, y) in a.rows().iter().zip(b.rows()) {
                prop_assert_eq!(*y, *x + 12);
            }
            for col in b.onehot().columns() {
                prop_assert_eq!(col.sum(), 1.0);
            }
        }
    }
}
