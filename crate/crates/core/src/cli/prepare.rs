use std::collections::HashSet;
use std::path::{Path, PathBuf};

use clap::Args;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use super::features::{entry_dir, read_dsp, read_entry, write_entry, write_paired, write_unpaired, Entry, EntryKind};
use super::features::FEATURES_DSP_FILE;
use super::Status;
use crate::data::{
    load_manifest, prepare_paired, prepare_unpaired, ManifestRecord, PhoneAnnotation, PrepareConfig, PrepareOutcome,
};
use crate::dsp::{read_wav, RandomResampleConfig};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Args)]
pub struct PrepareArgs {
    /// JSON-lines manifest.
    pub manifest: PathBuf,
    /// Output feature directory.
    pub out_dir: PathBuf,
    /// Rebuild every record even when its cache is up to date.
    #[arg(long)]
    pub force: bool,
    /// Stretch speech phone by phone to the sung durations when both
    /// annotations are present.
    #[arg(long)]
    pub phsync: bool,
    /// Randomly resample speech features before stretching.
    #[arg(long)]
    pub random_resample: bool,
    /// Seed for random resampling; a random seed is logged when omitted.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Skip utterances shorter than this many seconds.
    #[arg(long, default_value_t = 1.5)]
    pub min_duration: f64,
    /// Cut unvoiced runs longer than this many seconds from singing-only audio.
    #[arg(long, default_value_t = 1.0)]
    pub max_silence: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PrepareSummary {
    pub ok: usize,
    pub rebuilt: usize,
    /// Records dropped by the duration or silence filters.
    pub skipped: usize,
    /// `(record id, reason)`.
    pub failed: Vec<(String, String)>,
}

impl PrepareSummary {
    pub fn status(&self) -> Status {
        if self.failed.is_empty() {
            Status::Ok
        } else {
            Status::Partial
        }
    }

    pub fn line(&self) -> String {
        format!(
            "{} ok, {} failed, {} rebuilt, {} skipped",
            self.ok,
            self.failed.len(),
            self.rebuilt,
            self.skipped
        )
    }
}

fn phones(rec: &ManifestRecord) -> Result<Option<(PhoneAnnotation, PhoneAnnotation)>> {
    match (&rec.speech_phones, &rec.singing_phones) {
        (Some(a), Some(b)) => Ok(Some((PhoneAnnotation::load(a)?, PhoneAnnotation::load(b)?))),
        _ => Ok(None),
    }
}

fn stamp(rec: &ManifestRecord, settings: &str) -> Result<String> {
    let mut h = Sha256::new();
    h.update(settings.as_bytes());
    let paths = [Some(&rec.singing), rec.speech.as_ref(), rec.speech_phones.as_ref(), rec.singing_phones.as_ref()];
    for p in paths {
        match p {
            Some(p) => {
                let bytes = std::fs::read(p).map_err(|e| Error::io(p, e))?;
                h.update((bytes.len() as u64).to_le_bytes());
                h.update(&bytes);
            }
            None => h.update([0u8]),
        }
    }
    Ok(hex::encode(h.finalize()))
}

/// Builds one record's cache entry; returns whether it was rebuilt and how
/// many examples it holds.
fn build(rec: &ManifestRecord, index: u64, root: &Path, cfg: &PrepareConfig, settings: &str, seed: u64, force: bool) -> Result<(bool, usize)> {
    let stamp = stamp(rec, settings)?;
    let dir = entry_dir(root, &rec.id);
    if !force {
        if let Some(e) = read_entry(&dir) {
            if e.stamp == stamp && e.id == rec.id {
                return Ok((false, e.segments));
            }
        }
    }
    let singing = read_wav(&rec.singing)?;
    if dir.exists() {
        std::fs::remove_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let (kind, segments) = match &rec.speech {
        Some(speech_path) => {
            let speech = read_wav(speech_path)?;
            let ph = phones(rec)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(index);
            let outcome = prepare_paired(
                &rec.id,
                &speech,
                &singing,
                ph.as_ref().map(|(a, b)| (a, b)),
                None,
                cfg,
                Some(&mut rng),
            )?;
            match outcome {
                PrepareOutcome::Ready(ex) => {
                    write_paired(&dir, &ex)?;
                    (EntryKind::Paired, 1)
                }
                PrepareOutcome::Skipped(why) => {
                    log::info!("skipped {why}");
                    (EntryKind::Paired, 0)
                }
            }
        }
        None => {
            let mut n = 0;
            for outcome in prepare_unpaired(&rec.id, &singing, None, cfg)? {
                match outcome {
                    PrepareOutcome::Ready(ex) => {
                        write_unpaired(&dir, n, &ex)?;
                        n += 1;
                    }
                    PrepareOutcome::Skipped(why) => log::info!("skipped {why}"),
                }
            }
            (EntryKind::Unpaired, n)
        }
    };
    write_entry(
        &dir,
        &Entry {
            id: rec.id.clone(),
            kind,
            segments,
            stamp,
        },
    )?;
    Ok((true, segments))
}

/// Extracts features for every manifest record into `out_dir`. Records whose
/// inputs and settings are unchanged since the last run are left alone.
pub fn cmd_prepare(args: &PrepareArgs) -> Result<PrepareSummary> {
    let manifest = load_manifest(&args.manifest)?;
    let records: Vec<&ManifestRecord> = manifest.paired.iter().chain(&manifest.unpaired).collect();
    let mut seen = HashSet::new();
    for r in &records {
        if !seen.insert(entry_dir(&args.out_dir, &r.id)) {
            return Err(Error::validation(format!("duplicate record id {:?} (line {})", r.id, r.line)));
        }
    }
    if !(args.min_duration >= 0.0 && args.max_silence > 0.0) {
        return Err(Error::invalid("--min-duration must be >= 0 and --max-silence > 0"));
    }
    let cfg = PrepareConfig {
        phsync: args.phsync,
        random_resample: args.random_resample.then(RandomResampleConfig::default),
        min_duration_secs: args.min_duration,
        max_silence_secs: args.max_silence,
        ..Default::default()
    };
    let seed = match (args.random_resample, args.seed) {
        (_, Some(s)) => s,
        (true, None) => {
            let s = rand::random();
            log::info!("using random seed {s}");
            s
        }
        (false, None) => 0,
    };
    let settings = format!(
        "{}|{}|{:?}|{}|{}|{}",
        serde_json::to_string(&cfg.dsp)?,
        cfg.phsync,
        cfg.random_resample,
        cfg.min_duration_secs,
        cfg.max_silence_secs,
        if args.random_resample { seed } else { 0 },
    );

    let root = &args.out_dir;
    std::fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    if read_dsp(root)?.as_ref() != Some(&cfg.dsp) {
        let path = root.join(FEATURES_DSP_FILE);
        std::fs::write(&path, serde_json::to_string_pretty(&cfg.dsp)?).map_err(|e| Error::io(&path, e))?;
    }

    let results: Vec<_> = records
        .par_iter()
        .map(|r| build(r, r.line as u64, root, &cfg, &settings, seed, args.force))
        .collect();
    let mut summary = PrepareSummary::default();
    for e in &manifest.errors {
        summary.failed.push((e.id.clone(), format!("line {}: {}", e.line, e.message)));
    }
    for (r, res) in records.iter().zip(results) {
        match res {
            Ok((rebuilt, segments)) => {
                summary.ok += 1;
                summary.rebuilt += usize::from(rebuilt);
                summary.skipped += usize::from(segments == 0);
            }
            Err(e) => summary.failed.push((r.id.clone(), e.to_string())),
        }
    }
    for (id, why) in &summary.failed {
        eprintln!("failed {id}: {why}");
    }
    println!("{}", summary.line());
    Ok(summary)
}
