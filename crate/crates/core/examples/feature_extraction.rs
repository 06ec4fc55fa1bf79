//! Log-mel analysis of a two-tone signal, a `.mel1` round trip and
//! Griffin-Lim resynthesis.
//!
//! cargo run --release --example feature_extraction -- [out_dir]

use anyhow::Result;
use sts_core::dsp::{decode_mel1, encode_mel1, write_wav, DspConfig, WavFormat, Waveform};

fn main() -> Result<()> {
    let out_dir = std::env::args().nth(1).unwrap_or_else(|| std::env::temp_dir().display().to_string());
    let dsp = DspConfig::default();
    let a = Waveform::sine(220.0, 0.4, 1.0, dsp.sample_rate)?;
    let b = Waveform::sine(660.0, 0.2, 1.0, dsp.sample_rate)?;
    let mix: Vec<f32> = a.samples().iter().zip(b.samples()).map(|(x, y)| x + y).collect();
    let wave = Waveform::new(mix, dsp.sample_rate)?;

    let mel = dsp.log_mel(&wave)?;
    let fb = dsp.filterbank()?;
    let centers = fb.center_frequencies();
    let mid = mel.values().column(mel.n_frames() / 2);
    println!("{} mel bins x {} frames at {:.1} frames/s", mel.n_mels(), mel.n_frames(), mel.frame_rate());
    for hz in [220.0, 660.0, 3000.0] {
        let bin = fb.nearest_filter(hz);
        println!("  {hz:>6} Hz -> bin {bin} (center {:.0} Hz): {:.2}", centers[bin], mid[bin]);
    }

    let bytes = encode_mel1(&mel);
    assert_eq!(decode_mel1(&bytes, std::path::Path::new("memory"))?, mel);
    println!(".mel1 round trip: {} bytes, bit-exact", bytes.len());

    let audio = dsp.to_waveform(&mel, &fb)?;
    let path = std::path::Path::new(&out_dir).join("feature_extraction.wav");
    write_wav(&path, &audio, WavFormat::Pcm16)?;
    println!("Griffin-Lim: {} samples -> {}", audio.len(), path.display());
    Ok(())
}
