use std::path::PathBuf;
use std::sync::atomic::AtomicBool;

use clap::Args;

use super::features::load_features;
use super::Status;
use crate::error::{Error, Result};
use crate::net::{Checkpoint, NetConfig};
use crate::train::{checkpoint_train_config, train_loop, TrainConfig, TrainOptions, CONFIG_ENV};

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    /// `key = value` config file; defaults to the file named by STS_CONFIG.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Feature directory written by `prepare`.
    #[arg(long)]
    pub features: Option<PathBuf>,
    /// Directory for checkpoints, the metrics log and the effective config.
    #[arg(long)]
    pub run_dir: Option<PathBuf>,
    #[arg(long)]
    pub steps: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub segment_frames: Option<usize>,
    /// Continue from this checkpoint.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Any other config key, as `key=value`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

fn sets_key(text: &str, key: &str) -> bool {
    text.lines()
        .filter_map(|l| l.split('#').next()?.split_once('='))
        .any(|(k, _)| k.trim() == key)
}

/// Base config, flag overrides, and whether the seed was given anywhere.
fn effective_config(args: &TrainArgs, resume: Option<&Checkpoint>) -> Result<TrainConfig> {
    let file = args
        .config
        .clone()
        .or_else(|| std::env::var_os(CONFIG_ENV).map(PathBuf::from));
    let mut seeded = false;
    let mut cfg = match (&file, resume) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            seeded = sets_key(&text, "seed");
            TrainConfig::parse(&text, &path.display().to_string(), path.parent())?
        }
        (None, Some(ckpt)) => {
            seeded = true;
            checkpoint_train_config(ckpt)?
        }
        (None, None) => TrainConfig::default(),
    };
    for kv in &args.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects key=value, got {kv:?}")))?;
        cfg.set(k.trim(), v.trim())?;
        seeded |= k.trim() == "seed";
    }
    if let Some(v) = args.steps {
        cfg.steps = v;
    }
    if let Some(v) = args.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = args.lr {
        cfg.lr = v;
    }
    if let Some(v) = args.segment_frames {
        cfg.segment_frames = v;
    }
    if let Some(v) = &args.features {
        cfg.features = Some(v.clone());
    }
    if let Some(v) = &args.run_dir {
        cfg.run_dir = Some(v.clone());
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    } else if !seeded {
        cfg.seed = rand::random();
        log::info!("no seed given; using {}", cfg.seed);
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Trains on a prepared feature directory. Returns `Partial` when
/// interrupted; a final checkpoint is written either way.
pub fn cmd_train(args: &TrainArgs, stop: Option<&AtomicBool>) -> Result<Status> {
    let resume = args.resume.as_ref().map(Checkpoint::read).transpose()?;
    let cfg = effective_config(args, resume.as_ref())?;
    let features = cfg
        .features
        .clone()
        .ok_or_else(|| Error::Config("features: no feature directory given".into()))?;
    let run_dir = cfg
        .run_dir
        .clone()
        .ok_or_else(|| Error::Config("run_dir: no run directory given".into()))?;
    let set = load_features(&features)?;
    if set.paired.is_empty() {
        return Err(Error::validation(format!("{}: no paired examples", features.display())));
    }
    let net = match &resume {
        Some(c) => c.metadata.net.clone(),
        None => NetConfig {
            n_mels: set.dsp.n_mels,
            ..Default::default()
        },
    };
    net.validate()?;
    if let Some(c) = &resume {
        if c.metadata.dsp != set.dsp {
            return Err(Error::Config("features were prepared with different settings than the checkpoint".into()));
        }
    }

    std::fs::create_dir_all(&run_dir).map_err(|e| Error::io(&run_dir, e))?;
    let echo = run_dir.join("config.txt");
    std::fs::write(&echo, cfg.to_text()).map_err(|e| Error::io(&echo, e))?;
    println!("effective config:\n{}", cfg.to_text());
    log::info!(
        "{} paired and {} singing-only examples",
        set.paired.len(),
        set.unpaired.len()
    );

    let every = cfg.checkpoint_every.max(1);
    let mut progress = |m: &crate::train::StepMetrics| {
        if m.step.is_multiple_of(every) || m.step == 1 {
            log::info!(
                "step {} L_D {:.4} L_G {:.4} L_real {:.4} L_fake {:.4} k {:.4}",
                m.step,
                m.l_d,
                m.l_g,
                m.l_real,
                m.l_fake,
                m.k
            );
        }
    };
    let out = train_loop(
        &cfg,
        &set.paired,
        &set.unpaired,
        TrainOptions {
            net,
            dsp: set.dsp.clone(),
            checkpoint_dir: Some(run_dir.join("checkpoints")),
            metrics_path: Some(run_dir.join("metrics.csv")),
            resume,
            stop,
            on_step: Some(&mut progress),
        },
    )?;
    if let Some(p) = &out.final_checkpoint {
        println!("checkpoint {}", p.display());
    }
    Ok(if out.interrupted { Status::Partial } else { Status::Ok })
}
