//! Training configuration and its `key = value` file format.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Environment variable naming the default config file.
pub const CONFIG_ENV: &str = "STS_CONFIG";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub steps: u64,
    pub batch_size: usize,
    pub lr: f64,
    /// Multiplier applied once per `decay_interval` steps.
    pub lr_decay: f64,
    pub decay_interval: u64,
    pub lambda: f64,
    pub k0: f64,
    pub gamma: f64,
    pub beta: f64,
    /// Crop length in frames; a multiple of 8.
    pub segment_frames: usize,
    pub seed: u64,
    /// Steps between checkpoints; 0 writes only the final one.
    pub checkpoint_every: u64,
    /// Paired steps per singing-only step when singing-only data exists.
    pub paired_per_unpaired: u64,
    /// Directory written by `prepare`.
    pub features: Option<PathBuf>,
    /// Directory for checkpoints and the metrics log.
    pub run_dir: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 20_000,
            batch_size: 32,
            lr: 1e-3,
            lr_decay: 0.99,
            decay_interval: 100,
            lambda: 0.01,
            k0: 0.0,
            gamma: 0.0,
            beta: 0.5,
            segment_frames: 256,
            seed: 0,
            checkpoint_every: 1000,
            paired_per_unpaired: 1,
            features: None,
            run_dir: None,
        }
    }
}

pub const CONFIG_KEYS: [&str; 15] = [
    "steps",
    "batch_size",
    "lr",
    "lr_decay",
    "decay_interval",
    "lambda",
    "k0",
    "gamma",
    "beta",
    "segment_frames",
    "seed",
    "checkpoint_every",
    "paired_per_unpaired",
    "features",
    "run_dir",
];

/// Keys that change the optimization trajectory; a resumed run must agree
/// on all of them.
const HASHED_KEYS: [&str; 11] = [
    "batch_size",
    "lr",
    "lr_decay",
    "decay_interval",
    "lambda",
    "k0",
    "gamma",
    "beta",
    "segment_frames",
    "seed",
    "paired_per_unpaired",
];

impl TrainConfig {
    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| Error::Config(format!("{key}: cannot parse {v:?}")))
        }
        match key {
            "steps" => self.steps = num(key, value)?,
            "batch_size" => self.batch_size = num(key, value)?,
            "lr" => self.lr = num(key, value)?,
            "lr_decay" => self.lr_decay = num(key, value)?,
            "decay_interval" => self.decay_interval = num(key, value)?,
            "lambda" => self.lambda = num(key, value)?,
            "k0" => self.k0 = num(key, value)?,
            "gamma" => self.gamma = num(key, value)?,
            "beta" => self.beta = num(key, value)?,
            "segment_frames" => self.segment_frames = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "checkpoint_every" => self.checkpoint_every = num(key, value)?,
            "paired_per_unpaired" => self.paired_per_unpaired = num(key, value)?,
            "features" => self.features = Some(PathBuf::from(value)),
            "run_dir" => self.run_dir = Some(PathBuf::from(value)),
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Parses `key = value` lines over the defaults. `#` starts a comment.
    /// Relative paths are resolved against `base`.
    pub fn parse(text: &str, origin: &str, base: Option<&Path>) -> Result<Self> {
        let mut cfg = Self::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| Error::Parse {
                path: origin.to_string(),
                line: n + 1,
                message,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err("expected `key = value`".into()))?;
            cfg.set(key.trim(), value.trim()).map_err(|e| err(e.to_string()))?;
        }
        if let Some(base) = base {
            for p in [&mut cfg.features, &mut cfg.run_dir].into_iter().flatten() {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string(), path.parent())
    }

    /// The config in its own file format.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let v = serde_json::to_value(self).expect("config serializes");
        for key in CONFIG_KEYS {
            match &v[key] {
                serde_json::Value::Null => {}
                serde_json::Value::String(p) => s.push_str(&format!("{key} = {p}\n")),
                other => s.push_str(&format!("{key} = {other}\n")),
            }
        }
        s
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, why: &str| Err(Error::Config(format!("{key}: {why}")));
        if self.steps == 0 {
            return bad("steps", "must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size", "must be positive");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr", "must be positive");
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return bad("lr_decay", "must lie in (0, 1]");
        }
        if self.decay_interval == 0 {
            return bad("decay_interval", "must be positive");
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return bad("lambda", "must be positive");
        }
        if !(0.0..=1.0).contains(&self.k0) {
            return bad("k0", "must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma", "must lie in [0, 1]");
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return bad("beta", "must be non-negative");
        }
        if self.segment_frames == 0 || !self.segment_frames.is_multiple_of(8) {
            return bad("segment_frames", "must be a positive multiple of 8");
        }
        if self.paired_per_unpaired == 0 {
            return bad("paired_per_unpaired", "must be positive");
        }
        Ok(())
    }

    fn hashed(&self) -> serde_json::Map<String, serde_json::Value> {
        let v = serde_json::to_value(self).expect("config serializes");
        HASHED_KEYS.iter().map(|&k| (k.to_string(), v[k].clone())).collect()
    }

    /// Hex SHA-256 of the trajectory-relevant keys.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(&self.hashed()).expect("map serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    /// Trajectory-relevant keys whose values differ between two configs.
    pub fn differing_keys(&self, other: &TrainConfig) -> Vec<String> {
        let (a, b) = (self.hashed(), other.hashed());
        HASHED_KEYS
            .iter()
            .filter(|&&k| a.get(k) != b.get(k))
            .map(|k| k.to_string())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_overrides_and_rejects_unknown_keys() {
        let c = TrainConfig::parse("steps = 10\n# comment\nbeta=0.25 # trailing\nrun_dir = out\n", "c", Some(Path::new("/x")))
            .unwrap();
        assert_eq!(c.steps, 10);
        assert_eq!(c.beta, 0.25);
        assert_eq!(c.run_dir, Some(PathBuf::from("/x/out")));
        assert_eq!(c.batch_size, 32);

        let e = TrainConfig::parse("stpes = 3", "c", None).unwrap_err();
        assert!(e.to_string().contains("stpes"), "{e}");
        let e = TrainConfig::parse("segment_frames = 30", "c", None).unwrap_err();
        assert!(e.to_string().contains("segment_frames"), "{e}");
        assert!(TrainConfig::parse("steps", "c", None).is_err());
    }

    #[test]
    fn text_round_trip_and_hash() {
        let c = TrainConfig {
            seed: 42,
            run_dir: Some("/tmp/run".into()),
            ..Default::default()
        };
        let back = TrainConfig::parse(&c.to_text(), "t", None).unwrap();
        assert_eq!(back, c);
        let longer = TrainConfig { steps: 5, ..c.clone() };
        assert_eq!(longer.hash(), c.hash());
        let other = TrainConfig { gamma: 0.5, ..c.clone() };
        assert_ne!(other.hash(), c.hash());
        assert_eq!(other.differing_keys(&c), vec!["gamma".to_string()]);
    }
}
