use std::path::{Path, PathBuf};

use clap::Args;
use image::{Rgb, RgbImage};

use crate::dsp::{read_mel1, read_wav, DspConfig, LogMelSpectrogram};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Args)]
pub struct PlotArgs {
    /// `.mel1` or `.wav` files, drawn top to bottom on a shared scale.
    #[arg(long = "input", required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Pixel height of one mel bin.
    #[arg(long, default_value_t = 3)]
    pub bin_height: u32,
}

fn load(path: &Path) -> Result<LogMelSpectrogram> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("wav") => DspConfig::default().log_mel(&read_wav(path)?),
        _ => read_mel1(path),
    }
}

/// Dark blue through red to yellow.
fn color(v: f64) -> Rgb<u8> {
    let v = v.clamp(0.0, 1.0);
    let stops = [(0.0, [10.0, 10.0, 40.0]), (0.5, [180.0, 30.0, 60.0]), (1.0, [250.0, 240.0, 120.0])];
    let i = if v < 0.5 { 0 } else { 1 };
    let (a, ca) = stops[i];
    let (b, cb) = stops[i + 1];
    let t = (v - a) / (b - a);
    Rgb([0, 1, 2].map(|k| (ca[k] + t * (cb[k] - ca[k])).round() as u8))
}

/// Stacks spectrograms vertically, low frequencies at the bottom of each
/// panel, with a shared color scale and a one-pixel separator.
pub fn render_spectrograms(mels: &[LogMelSpectrogram], bin_height: u32) -> Result<RgbImage> {
    if mels.is_empty() {
        return Err(Error::invalid("nothing to plot"));
    }
    let bin_height = bin_height.max(1);
    let width = mels.iter().map(|m| m.n_frames()).max().unwrap_or(0).max(1) as u32;
    let height: u32 = mels.iter().map(|m| m.n_mels() as u32 * bin_height + 1).sum();
    let (lo, hi) = mels
        .iter()
        .flat_map(|m| m.values().iter())
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    let span = f64::from((hi - lo).max(1e-6));
    let mut img = RgbImage::from_pixel(width, height, Rgb([255, 255, 255]));
    let mut top = 0;
    for m in mels {
        let rows = m.n_mels() as u32;
        for (t, col) in m.values().columns().into_iter().enumerate() {
            for (b, &v) in col.iter().enumerate() {
                let c = color(f64::from(v - lo) / span);
                let y0 = top + (rows - 1 - b as u32) * bin_height;
                for dy in 0..bin_height {
                    img.put_pixel(t as u32, y0 + dy, c);
                }
            }
        }
        top += rows * bin_height + 1;
    }
    Ok(img)
}

pub fn cmd_plot(args: &PlotArgs) -> Result<()> {
    let mels = args.inputs.iter().map(|p| load(p)).collect::<Result<Vec<_>>>()?;
    let img = render_spectrograms(&mels, args.bin_height)?;
    img.save(&args.out)
        .map_err(|e| Error::io(&args.out, std::io::Error::other(e.to_string())))?;
    println!("wrote {}", args.out.display());
    Ok(())
}
