//! Generator and autoencoder discriminator as differentiable maps over a
//! small reverse-mode autodiff tape.

mod checkpoint;
mod discriminator;
mod generator;
mod graph;
mod params;
mod tensor;

pub use checkpoint::{Checkpoint, CheckpointMetadata, NamedTensor, CHECKPOINT_FORMAT_VERSION, CHECKPOINT_MAGIC};
pub use discriminator::{discriminate, Autoencoder, Discriminator, IdentityAutoencoder};
pub use generator::{Generator, LatentCode};
pub use graph::{conv_out_len, Gradients, Graph, Var};
pub use params::{Bound, Conv1d, Embedding, GroupNorm, Param, ParamId, ParamStore};
pub use tensor::Tensor;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::melody::N_NOTES;

/// Total time downsampling of the encoders.
pub const TIME_REDUCTION: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetConfig {
    /// Mel bins, treated as input channels.
    pub n_mels: usize,
    pub n_notes: usize,
    /// Pitch embedding width.
    pub embed_dim: usize,
    pub leaky_slope: f64,
    /// Upper bound on group-norm groups; the actual count is
    /// `gcd(groups, channels)`.
    pub groups: usize,
    /// Output clamp range of the generator head.
    pub out_min: f64,
    pub out_max: f64,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            n_mels: 80,
            n_notes: N_NOTES,
            embed_dim: 64,
            leaky_slope: 0.2,
            groups: 4,
            out_min: crate::dsp::DEFAULT_FLOOR_EPS.ln(),
            out_max: 10.0,
        }
    }
}

impl NetConfig {
    /// Eight mel channels and an eight-wide embedding; used for gradient
    /// checks.
    pub fn reduced() -> Self {
        Self {
            n_mels: 8,
            embed_dim: 8,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_mels == 0 || !self.n_mels.is_multiple_of(TIME_REDUCTION) {
            return Err(Error::Config(format!("n_mels {} must be a positive multiple of 8", self.n_mels)));
        }
        if self.embed_dim == 0 || !self.embed_dim.is_multiple_of(4) {
            return Err(Error::Config(format!(
                "embed_dim {} must be a positive multiple of 4",
                self.embed_dim
            )));
        }
        if self.n_notes == 0 || self.groups == 0 {
            return Err(Error::Config("n_notes and groups must be positive".into()));
        }
        if !(self.leaky_slope.is_finite() && self.out_min < self.out_max) {
            return Err(Error::Config("invalid slope or output range".into()));
        }
        Ok(())
    }

    /// Content channels after each encoder stack.
    pub fn content_widths(&self) -> [usize; 3] {
        [self.n_mels / 2, self.n_mels / 4, self.n_mels / 8]
    }

    /// Pitch channels after each encoder stack.
    pub fn pitch_widths(&self) -> [usize; 3] {
        [self.embed_dim, self.embed_dim / 2, self.embed_dim / 4]
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

pub(crate) fn group_count(max_groups: usize, channels: usize) -> usize {
    gcd(max_groups, channels).max(1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn widths() {
        let c = NetConfig::default();
        c.validate().unwrap();
        assert_eq!(c.content_widths(), [40, 20, 10]);
        assert_eq!(c.pitch_widths(), [64, 32, 16]);
        assert_eq!(group_count(4, 10), 2);
        assert_eq!(group_count(4, 40), 4);
        assert!(NetConfig { n_mels: 12, ..c }.validate().is_err());
    }
}
