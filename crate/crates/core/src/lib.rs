//! Speech-to-singing conversion.
//!
//! A spoken utterance is turned into log-mel features, time-stretched to the
//! length of a target melody contour, and passed through an encoder/decoder
//! generator conditioned on the one-hot melody. The generator is trained with
//! a supervised L1 term on paired data and a boundary-equilibrium GAN term on
//! paired and singing-only data. Generated spectrograms are turned back into
//! audio with Griffin-Lim, or handed to an external vocoder.
//!
//! Modules:
//!
//! - [`dsp`]: resampling, STFT, mel projection, time stretching, Griffin-Lim,
//!   WAV and `MEL1` file I/O.
//! - [`melody`]: F0 estimation, MIDI quantization, one-hot melody contours.
//! - [`net`]: a small reverse-mode autodiff graph, the generator and the
//!   autoencoder discriminator, checkpoints.
//! - [`train`]: BEGAN losses, the `k` controller, Adam, the training loop.
//! - [`data`]: manifests, phone annotations, silence handling, paired example
//!   preparation, synthetic toy data.
//! - [`eval`]: log-spectral distance, raw chroma accuracy, reports.
//! - [`cli`]: the `prepare`, `train`, `convert`, `evaluate` and `plot`
//!   commands behind the `sts` binary.

pub mod cli;
pub mod data;
pub mod dsp;
pub mod error;
pub mod eval;
pub mod melody;
pub mod net;
pub mod train;

pub use error::{Error, Result};
