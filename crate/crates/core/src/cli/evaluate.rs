use std::path::PathBuf;

use clap::Args;
use rayon::prelude::*;

use super::Status;
use crate::data::{load_manifest, prepare_paired, PhoneAnnotation, PrepareConfig, PrepareOutcome};
use crate::dsp::read_wav;
use crate::error::{Error, Result};
use crate::eval::{evaluate_model, IdentityGenerator, SingingGenerator};
use crate::net::Checkpoint;
use crate::train::load_generator;

#[derive(Debug, Clone, Args)]
#[command(group = clap::ArgGroup::new("model").required(true).args(["checkpoint", "identity"]))]
pub struct EvaluateArgs {
    /// Manifest of paired records; targets are required.
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Score the time-stretched input itself instead of a model.
    #[arg(long)]
    pub identity: bool,
    /// Per-example CSV; a `.summary.txt` is written beside it.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub phsync: bool,
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<Status> {
    let manifest = load_manifest(&args.manifest)?;
    if manifest.paired.is_empty() {
        return Err(Error::validation(format!("{}: no paired examples", args.manifest.display())));
    }
    let ckpt = args.checkpoint.as_ref().map(Checkpoint::read).transpose()?;
    let mut cfg = PrepareConfig {
        phsync: args.phsync,
        min_duration_secs: 0.0,
        ..Default::default()
    };
    if let Some(c) = &ckpt {
        cfg.dsp = c.metadata.dsp.clone();
    }
    let prepared: Vec<_> = manifest
        .paired
        .par_iter()
        .map(|rec| -> Result<_> {
            let speech = read_wav(rec.speech.as_ref().expect("paired record"))?;
            let singing = read_wav(&rec.singing)?;
            let phones = match (&rec.speech_phones, &rec.singing_phones) {
                (Some(a), Some(b)) => Some((PhoneAnnotation::load(a)?, PhoneAnnotation::load(b)?)),
                _ => None,
            };
            prepare_paired::<rand_chacha::ChaCha8Rng>(
                &rec.id,
                &speech,
                &singing,
                phones.as_ref().map(|(a, b)| (a, b)),
                None,
                &cfg,
                None,
            )
        })
        .collect();
    let mut failures: Vec<(String, String)> = manifest
        .errors
        .iter()
        .map(|e| (e.id.clone(), e.message.clone()))
        .collect();
    let mut testset = Vec::new();
    for (rec, r) in manifest.paired.iter().zip(prepared) {
        match r {
            Ok(PrepareOutcome::Ready(ex)) => testset.push(ex),
            Ok(PrepareOutcome::Skipped(why)) => failures.push((rec.id.clone(), why)),
            Err(e) => failures.push((rec.id.clone(), e.to_string())),
        }
    }
    if testset.is_empty() {
        return Err(Error::validation("no paired examples could be prepared"));
    }

    let (model, model_id, hash): (Box<dyn SingingGenerator>, String, String) = match &ckpt {
        Some(c) => (
            Box::new(load_generator(c)?),
            format!("{} (step {})", args.checkpoint.as_ref().expect("set").display(), c.metadata.step),
            c.metadata.config_hash.clone(),
        ),
        None => (Box::new(IdentityGenerator), "identity".into(), "-".into()),
    };
    let mut report = evaluate_model(&testset, model.as_ref(), &cfg.dsp, &model_id, &hash)?;
    report.failures.splice(0..0, failures);
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    report.write(&args.out)?;
    print!("{}", report.summary());
    Ok(if report.failures.is_empty() { Status::Ok } else { Status::Partial })
}
