use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};

use super::config::TrainConfig;
use super::losses::diversity_ratio_estimate;
use super::trainer::{StepMetrics, Trainer};
use crate::data::{PairedExample, UnpairedExample};
use crate::dsp::DspConfig;
use crate::error::{Error, Result};
use crate::net::{Checkpoint, NetConfig};

pub const METRICS_HEADER: &str = "step,L_D,L_G,L_real,L_fake,k,lr";
pub const LATEST_CHECKPOINT: &str = "latest.ckpt";

pub fn format_metrics_row(m: &StepMetrics) -> String {
    format!("{},{},{},{},{},{},{}", m.step, m.l_d, m.l_g, m.l_real, m.l_fake, m.k, m.lr)
}

/// Append-only CSV of step metrics, flushed after every row.
pub struct MetricsLog {
    path: PathBuf,
    out: BufWriter<File>,
}

impl MetricsLog {
    /// Starts a fresh log.
    pub fn create(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut log = Self {
            out: BufWriter::new(file),
            path,
        };
        log.write_line(METRICS_HEADER)?;
        Ok(log)
    }

    /// Continues a log after `step`: rows past it (written after the last
    /// checkpoint) are dropped.
    pub fn resume(path: impl AsRef<Path>, step: u64) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        if !path.exists() {
            return Self::create(&path);
        }
        let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
        let mut kept = Vec::new();
        for line in BufReader::new(file).lines() {
            let line = line.map_err(|e| Error::io(&path, e))?;
            if line == METRICS_HEADER {
                continue;
            }
            let s: u64 = line
                .split(',')
                .next()
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::Format {
                    path: path.clone(),
                    message: format!("bad metrics row {line:?}"),
                })?;
            if s <= step {
                kept.push(line);
            }
        }
        let mut log = Self::create(&path)?;
        for line in kept {
            log.write_line(&line)?;
        }
        Ok(log)
    }

    fn write_line(&mut self, line: &str) -> Result<()> {
        writeln!(self.out, "{line}")
            .and_then(|_| self.out.flush())
            .map_err(|e| Error::io(&self.path, e))
    }

    pub fn append(&mut self, m: &StepMetrics) -> Result<()> {
        self.write_line(&format_metrics_row(m))
    }
}

#[derive(Default)]
pub struct TrainOptions<'a> {
    pub net: NetConfig,
    pub dsp: DspConfig,
    /// Checkpoints go here as `step-XXXXXXXX.ckpt` plus `latest.ckpt`.
    pub checkpoint_dir: Option<PathBuf>,
    pub metrics_path: Option<PathBuf>,
    pub resume: Option<Checkpoint>,
    /// Checked before every step; when set the loop stops and writes a final
    /// checkpoint.
    pub stop: Option<&'a AtomicBool>,
    pub on_step: Option<&'a mut dyn FnMut(&StepMetrics)>,
}

pub struct TrainOutcome {
    pub trainer: Trainer,
    pub metrics: Vec<StepMetrics>,
    pub final_checkpoint: Option<PathBuf>,
    pub interrupted: bool,
}

fn save(trainer: &Trainer, dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let ckpt = trainer.to_checkpoint()?;
    let path = dir.join(format!("step-{:08}.ckpt", trainer.step()));
    ckpt.write(&path)?;
    ckpt.write(dir.join(LATEST_CHECKPOINT))?;
    Ok(path)
}

/// Runs (or resumes) training until `config.steps` steps are complete.
/// Steps alternate between paired and singing-only batches when
/// singing-only data exists.
pub fn train_loop(
    config: &TrainConfig,
    paired: &[PairedExample],
    unpaired: &[UnpairedExample],
    mut opts: TrainOptions<'_>,
) -> Result<TrainOutcome> {
    config.validate()?;
    if paired.is_empty() {
        return Err(Error::Config("no paired training examples".into()));
    }
    let mut trainer = match &opts.resume {
        Some(ckpt) => Trainer::from_checkpoint(ckpt, config.clone())?,
        None => Trainer::new(config.clone(), opts.net.clone(), opts.dsp.clone())?,
    };
    let mut log = match &opts.metrics_path {
        Some(p) if opts.resume.is_some() => Some(MetricsLog::resume(p, trainer.step())?),
        Some(p) => Some(MetricsLog::create(p)?),
        None => None,
    };
    let mut metrics = Vec::new();
    let mut final_checkpoint = None;
    let mut interrupted = false;
    let mut saved_at = None;
    while trainer.step() < config.steps {
        if opts.stop.is_some_and(|s| s.load(Ordering::SeqCst)) {
            interrupted = true;
            log::warn!("interrupted after step {}", trainer.step());
            break;
        }
        let batch = trainer.sample_batch(paired, unpaired)?;
        let m = trainer.train_step(&batch)?;
        if let Some(log) = log.as_mut() {
            log.append(&m)?;
        }
        if let Some(cb) = opts.on_step.as_mut() {
            cb(&m);
        }
        metrics.push(m);
        if let Some(dir) = &opts.checkpoint_dir {
            if config.checkpoint_every > 0 && m.step % config.checkpoint_every == 0 {
                final_checkpoint = Some(save(&trainer, dir)?);
                saved_at = Some(m.step);
                let (r, f): (Vec<f64>, Vec<f64>) = metrics.iter().map(|m| (m.l_real, m.l_fake)).unzip();
                if let Ok(ratio) = diversity_ratio_estimate(&r, &f) {
                    log::info!("step {}: diversity ratio estimate {ratio:.4}", m.step);
                }
            }
        }
    }
    if let Some(dir) = &opts.checkpoint_dir {
        if saved_at != Some(trainer.step()) {
            final_checkpoint = Some(save(&trainer, dir)?);
        }
    }
    Ok(TrainOutcome {
        trainer,
        metrics,
        final_checkpoint,
        interrupted,
    })
}
