//! Tracks the F0 of a stepped-pitch tone and quantizes it into a one-hot
//! melody contour.
//!
//! cargo run --release --example pitch_tracking

use anyhow::Result;
use sts_core::dsp::{DspConfig, Waveform};
use sts_core::melody::{contour_from_f0, estimate_f0, midi_to_hz, F0Config};

fn main() -> Result<()> {
    let dsp = DspConfig::default();
    let notes = [57u8, 60, 64, 0, 67];
    let mut samples = Vec::new();
    for &n in &notes {
        let seg = if n == 0 {
            Waveform::silence(dsp.sample_rate as usize / 4, dsp.sample_rate)?
        } else {
            Waveform::sine(midi_to_hz(n), 0.3, 0.25, dsp.sample_rate)?
        };
        samples.extend_from_slice(seg.samples());
    }
    let wave = Waveform::new(samples, dsp.sample_rate)?;

    let track = estimate_f0(&wave, dsp.hop, &F0Config::default())?;
    let voiced = track.voicing().iter().filter(|&&v| v).count();
    println!("{} frames, {voiced} voiced", track.len());

    let contour = contour_from_f0(&track, track.len(), dsp.hop as u32, dsp.sample_rate)?;
    let mut runs: Vec<(u8, usize)> = Vec::new();
    for &r in contour.rows() {
        match runs.last_mut() {
            Some((row, n)) if *row == r => *n += 1,
            _ => runs.push((r, 1)),
        }
    }
    for (row, n) in runs {
        let label = if row == 0 { "rest".to_string() } else { format!("MIDI {row}") };
        println!("  {label:>8} x {n} frames");
    }
    println!("one-hot matrix: {:?}", contour.onehot().dim());
    Ok(())
}
