//! Objective metrics: log-spectral distance and raw chroma accuracy, plus
//! batch evaluation reports.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::ArrayView2;
use rayon::prelude::*;

use crate::data::PairedExample;
use crate::dsp::{time_stretch, DspConfig, LogMelSpectrogram};
use crate::error::{Error, Result};
use crate::melody::{estimate_f0, F0Config, F0Track, MelodyContour};
use crate::net::Generator;

/// Band used for the log-spectral distance, in Hz.
pub const LSD_BAND_HZ: (f64, f64) = (100.0, 3500.0);
pub const RCA_TOLERANCE_CENTS: f64 = 50.0;

const DB_PER_NEPER: f64 = 20.0 / std::f64::consts::LN_10;

/// Log-spectral distance in dB between two natural-log spectrograms
/// (bins × frames). Only bins whose center frequency `bin_hz[i]` lies in
/// `band` take part; each frame contributes the RMS over those bins of the
/// dB difference, and frames are averaged.
pub fn lsd(y_true: ArrayView2<f64>, y_pred: ArrayView2<f64>, bin_hz: &[f64], band: (f64, f64)) -> Result<f64> {
    if y_true.dim() != y_pred.dim() {
        return Err(Error::validation(format!(
            "spectrogram shapes differ: {:?} vs {:?}",
            y_true.dim(),
            y_pred.dim()
        )));
    }
    if bin_hz.len() != y_true.nrows() {
        return Err(Error::validation(format!(
            "{} bin frequencies for {} bins",
            bin_hz.len(),
            y_true.nrows()
        )));
    }
    if !(band.0 < band.1) {
        return Err(Error::invalid(format!("empty band {band:?}")));
    }
    let bins: Vec<usize> = (0..bin_hz.len())
        .filter(|&i| bin_hz[i] >= band.0 && bin_hz[i] <= band.1)
        .collect();
    if bins.is_empty() {
        return Err(Error::invalid(format!("no bins inside {band:?} Hz")));
    }
    if y_true.ncols() == 0 {
        return Err(Error::invalid("spectrograms have no frames"));
    }
    let total: f64 = (0..y_true.ncols())
        .map(|t| {
            let sq: f64 = bins
                .iter()
                .map(|&i| {
                    let d = DB_PER_NEPER * (y_true[(i, t)] - y_pred[(i, t)]);
                    d * d
                })
                .sum();
            (sq / bins.len() as f64).sqrt()
        })
        .sum();
    Ok(total / y_true.ncols() as f64)
}

/// [`lsd`] for log-mel spectrograms over [`LSD_BAND_HZ`].
pub fn lsd_mel(y_true: &LogMelSpectrogram, y_pred: &LogMelSpectrogram, dsp: &DspConfig) -> Result<f64> {
    let nyquist = dsp.sample_rate as f64 / 2.0;
    if LSD_BAND_HZ.1 > nyquist {
        return Err(Error::invalid(format!("band exceeds Nyquist ({nyquist} Hz)")));
    }
    let fb = dsp.filterbank()?;
    let (a, b) = (y_true.values().mapv(f64::from), y_pred.values().mapv(f64::from));
    lsd(a.view(), b.view(), &fb.center_frequencies(), LSD_BAND_HZ)
}

fn chroma_cents(hz: f64) -> f64 {
    (1200.0 * (hz / 440.0).log2()).rem_euclid(1200.0)
}

/// Fraction of reference-voiced frames whose estimate is voiced and within
/// `tolerance_cents` of the reference after folding both to one octave.
/// The estimate is looked up at the reference frame times.
pub fn rca(f0_ref: &F0Track, f0_est: &F0Track, tolerance_cents: f64) -> Result<f64> {
    if f0_est.is_empty() {
        return Err(Error::invalid("estimated F0 track is empty"));
    }
    let mut voiced = 0usize;
    let mut correct = 0usize;
    for (i, &t) in f0_ref.times().iter().enumerate() {
        if !f0_ref.voicing()[i] {
            continue;
        }
        voiced += 1;
        let j = f0_est.nearest_index(t).expect("non-empty track");
        if !f0_est.voicing()[j] {
            continue;
        }
        let d = (chroma_cents(f0_ref.f0_hz()[i]) - chroma_cents(f0_est.f0_hz()[j])).abs();
        if d.min(1200.0 - d) <= tolerance_cents {
            correct += 1;
        }
    }
    if voiced == 0 {
        return Err(Error::UndefinedMetric("reference track has no voiced frames".into()));
    }
    Ok(correct as f64 / voiced as f64)
}

/// Anything that turns speech features and a contour into singing features.
pub trait SingingGenerator: Sync {
    fn sing(&self, speech: &LogMelSpectrogram, contour: &MelodyContour) -> Result<LogMelSpectrogram>;
}

impl SingingGenerator for Generator {
    fn sing(&self, speech: &LogMelSpectrogram, contour: &MelodyContour) -> Result<LogMelSpectrogram> {
        let x = if speech.n_frames() == contour.n_frames() {
            speech.clone()
        } else {
            time_stretch(speech, contour.n_frames())?
        };
        self.generate(&x, contour)
    }
}

/// Returns the speech features stretched to the contour length.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityGenerator;

impl SingingGenerator for IdentityGenerator {
    fn sing(&self, speech: &LogMelSpectrogram, contour: &MelodyContour) -> Result<LogMelSpectrogram> {
        if speech.n_frames() == contour.n_frames() {
            Ok(speech.clone())
        } else {
            time_stretch(speech, contour.n_frames())
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub example_id: String,
    pub lsd_db: f64,
    pub rca: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub model_id: String,
    pub config_hash: String,
    pub rows: Vec<EvalRow>,
    /// Examples that could not be scored, with the reason.
    pub failures: Vec<(String, String)>,
}

impl EvalReport {
    pub fn n_examples(&self) -> usize {
        self.rows.len() + self.failures.len()
    }

    pub fn mean_lsd(&self) -> Option<f64> {
        mean(self.rows.iter().map(|r| r.lsd_db))
    }

    pub fn mean_rca(&self) -> Option<f64> {
        mean(self.rows.iter().map(|r| r.rca))
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("example_id,lsd_db,rca\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{}", r.example_id, r.lsd_db, r.rca);
        }
        s
    }

    pub fn summary(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |v| format!("{v:.4}"));
        let mut s = format!(
            "model {} (config {}): {} examples, {} scored, {} failed, mean lsd {} dB, mean rca {}\n",
            self.model_id,
            self.config_hash,
            self.n_examples(),
            self.rows.len(),
            self.failures.len(),
            fmt(self.mean_lsd()),
            fmt(self.mean_rca()),
        );
        for (id, why) in &self.failures {
            let _ = writeln!(s, "failed {id}: {why}");
        }
        s
    }

    /// Writes the CSV and a `.summary.txt` file next to it.
    pub fn write(&self, csv_path: impl AsRef<Path>) -> Result<()> {
        let csv_path = csv_path.as_ref();
        std::fs::write(csv_path, self.to_csv()).map_err(|e| Error::io(csv_path, e))?;
        let summary = csv_path.with_extension("summary.txt");
        std::fs::write(&summary, self.summary()).map_err(|e| Error::io(&summary, e))
    }
}

fn mean(values: impl ExactSizeIterator<Item = f64>) -> Option<f64> {
    let n = values.len();
    (n > 0).then(|| values.sum::<f64>() / n as f64)
}

fn score(model: &dyn SingingGenerator, ex: &PairedExample, dsp: &DspConfig, f0: &F0Config) -> Result<EvalRow> {
    let out = model.sing(&ex.speech, &ex.contour)?;
    let lsd_db = lsd_mel(&ex.singing, &out, dsp)?;
    let audio = dsp.to_waveform(&out, &dsp.filterbank()?)?;
    let est = estimate_f0(&audio, dsp.hop, f0)?;
    let rca = rca(&ex.contour.to_f0_track()?, &est, RCA_TOLERANCE_CENTS)?;
    Ok(EvalRow {
        example_id: ex.id.clone(),
        lsd_db,
        rca,
    })
}

/// Generates every example, then scores LSD against the target features and
/// RCA of the pitch track of the Griffin-Lim audio against the contour.
/// Examples are scored in parallel; the report keeps input order.
pub fn evaluate_model(
    testset: &[PairedExample],
    model: &dyn SingingGenerator,
    dsp: &DspConfig,
    model_id: &str,
    config_hash: &str,
) -> Result<EvalReport> {
    if testset.is_empty() {
        return Err(Error::invalid("no paired examples"));
    }
    let f0 = F0Config::default();
    let scored: Vec<_> = testset.par_iter().map(|ex| score(model, ex, dsp, &f0)).collect();
    let mut report = EvalReport {
        model_id: model_id.to_string(),
        config_hash: config_hash.to_string(),
        rows: Vec::new(),
        failures: Vec::new(),
    };
    for (ex, r) in testset.iter().zip(scored) {
        match r {
            Ok(row) => report.rows.push(row),
            Err(e) => {
                log::warn!("{}: {e}", ex.id);
                report.failures.push((ex.id.clone(), e.to_string()));
            }
        }
    }
    Ok(report)
}
