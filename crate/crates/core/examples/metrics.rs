//! Log-spectral distance and raw chroma accuracy on hand-made inputs.
//!
//! cargo run --example metrics

use anyhow::Result;
use ndarray::Array2;
use sts_core::dsp::DspConfig;
use sts_core::eval::{lsd, lsd_mel, rca, LSD_BAND_HZ, RCA_TOLERANCE_CENTS};
use sts_core::melody::F0Track;

fn main() -> Result<()> {
    let dsp = DspConfig::default();
    let fb = dsp.filterbank()?;
    let centers = fb.center_frequencies();
    let y = Array2::from_shape_fn((centers.len(), 50), |(b, t)| ((b * 7 + t * 3) % 11) as f64 * 0.3 - 4.0);
    println!("LSD(y, y)          = {:.3} dB", lsd(y.view(), y.view(), &centers, LSD_BAND_HZ)?);
    let louder = y.mapv(|v| v + 10f64.ln());
    println!("LSD(y, 10 * y)     = {:.3} dB", lsd(y.view(), louder.view(), &centers, LSD_BAND_HZ)?);

    let mel = sts_core::dsp::LogMelSpectrogram::new(y.mapv(|v| v as f32), dsp.hop as u32, dsp.sample_rate)?;
    let noisy = mel.with_values(mel.values().mapv(|v| v + 0.1))?;
    println!("LSD(mel, mel + 0.1) = {:.3} dB", lsd_mel(&mel, &noisy, &dsp)?);

    let reference = F0Track::uniform(vec![220.0; 40], dsp.hop, dsp.sample_rate)?;
    for cents in [0.0, 30.0, 80.0, 1200.0] {
        let est = reference.scaled(2f64.powf(cents / 1200.0))?;
        println!("RCA at {cents:>6} cents = {:.2}", rca(&reference, &est, RCA_TOLERANCE_CENTS)?);
    }
    Ok(())
}
