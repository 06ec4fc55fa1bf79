use std::path::{Path, PathBuf};
use std::process::Command;

use clap::{Args, ValueEnum};

use crate::data::frame_at;
use crate::dsp::{frame_count, read_wav, resample_audio, time_stretch, write_mel1, write_wav, DspConfig, WavFormat, Waveform};
use crate::error::{Error, Result};
use crate::melody::{contour_from_f0, estimate_f0, load_f0_file, F0Config, MelodyContour};
use crate::net::{Checkpoint, TIME_REDUCTION};
use crate::train::{checkpoint_train_config, load_generator, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Vocoder {
    Griffinlim,
    /// Run `--vocoder-cmd <mel_in.mel1> <wav_out.wav>`.
    External,
}

#[derive(Debug, Clone, Args)]
#[command(group = clap::ArgGroup::new("melody").required(true).args(["f0", "melody_from"]))]
pub struct ConvertArgs {
    /// Spoken input.
    #[arg(long)]
    pub speech: PathBuf,
    /// Target melody as an F0 text file.
    #[arg(long)]
    pub f0: Option<PathBuf>,
    /// Take the target melody from this recording instead.
    #[arg(long)]
    pub melody_from: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Output WAV; the generated features go next to it as `.mel1`.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = Vocoder::Griffinlim)]
    pub vocoder: Vocoder,
    #[arg(long)]
    pub vocoder_cmd: Option<String>,
    /// Refuse to run unless the checkpoint was trained with this config.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

fn at_rate(w: Waveform, sr: u32) -> Result<Waveform> {
    if w.sample_rate() == sr {
        Ok(w)
    } else {
        resample_audio(&w, sr)
    }
}

/// Target contour on the feature frame grid.
pub(crate) fn target_contour(args: &ConvertArgs, dsp: &DspConfig) -> Result<MelodyContour> {
    let hop = dsp.hop as u32;
    let (track, n) = match (&args.f0, &args.melody_from) {
        (Some(path), _) => {
            let track = load_f0_file(path)?;
            let last = track.times().last().copied().unwrap_or(0.0);
            (track, frame_at(last, dsp.frame_rate()) + 1)
        }
        (None, Some(path)) => {
            let wave = at_rate(read_wav(path)?, dsp.sample_rate)?;
            let n = frame_count(wave.len(), dsp.hop);
            (estimate_f0(&wave, dsp.hop, &F0Config::default())?, n)
        }
        (None, None) => return Err(Error::invalid("give --f0 or --melody-from")),
    };
    if n < TIME_REDUCTION {
        return Err(Error::validation(format!(
            "melody contour has {n} frames; at least {TIME_REDUCTION} are needed"
        )));
    }
    contour_from_f0(&track, n, hop, dsp.sample_rate)
}

fn check_config(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    let cfg = TrainConfig::load(path)?;
    if cfg.hash() != ckpt.metadata.config_hash {
        let keys = cfg.differing_keys(&checkpoint_train_config(ckpt)?);
        return Err(Error::Config(format!(
            "checkpoint does not match {}: {}",
            path.display(),
            keys.join(", ")
        )));
    }
    Ok(())
}

/// Speech to singing: features, stretch to the contour, generate, then
/// invert. Returns the generated `.mel1` path.
pub fn cmd_convert(args: &ConvertArgs) -> Result<PathBuf> {
    if args.vocoder == Vocoder::External && args.vocoder_cmd.is_none() {
        return Err(Error::invalid("--vocoder external needs --vocoder-cmd"));
    }
    let ckpt = Checkpoint::read(&args.checkpoint)?;
    if let Some(path) = &args.config {
        check_config(&ckpt, path)?;
    }
    let dsp = ckpt.metadata.dsp.clone();
    let generator = load_generator(&ckpt)?;
    let contour = target_contour(args, &dsp)?;
    let speech = read_wav(&args.speech)?;
    let fb = dsp.filterbank()?;
    let speech = dsp.log_mel_with(&speech, &fb)?;
    let speech = time_stretch(&speech, contour.n_frames())?;
    let out = generator.generate(&speech, &contour)?;

    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mel_path = args.out.with_extension("mel1");
    write_mel1(&mel_path, &out)?;
    match args.vocoder {
        Vocoder::Griffinlim => {
            let wave = dsp.to_waveform(&out, &fb)?;
            write_wav(&args.out, &wave, WavFormat::Pcm16)?;
        }
        Vocoder::External => {
            let cmd = args.vocoder_cmd.as_deref().expect("checked above");
            let status = Command::new(cmd)
                .arg(&mel_path)
                .arg(&args.out)
                .status()
                .map_err(|e| Error::io(cmd, e))?;
            if !status.success() {
                return Err(Error::io(
                    cmd,
                    std::io::Error::other(format!("vocoder exited with {status}")),
                ));
            }
            if !args.out.is_file() {
                return Err(Error::io(
                    &args.out,
                    std::io::Error::other("vocoder did not write its output"),
                ));
            }
        }
    }
    println!("wrote {} and {}", args.out.display(), mel_path.display());
    Ok(mel_path)
}
