//! `MEL1` binary spectrogram files.
//!
//! Layout (all little-endian): magic `MEL1`, `u32` mel bins F, `u32` frames T,
//! `u32` sample rate, `u32` hop in samples, then `F * T` `f32` values stored
//! frame-major (the F values of frame 0, then frame 1, ...).

use std::path::Path;

use ndarray::Array2;

use super::mel::LogMelSpectrogram;
use crate::error::{Error, Result};

pub const MEL1_MAGIC: &[u8; 4] = b"MEL1";
const HEADER_LEN: usize = 20;

pub fn encode_mel1(mel: &LogMelSpectrogram) -> Vec<u8> {
    let (f, t) = mel.values().dim();
    let mut buf = Vec::with_capacity(HEADER_LEN + 4 * f * t);
    buf.extend_from_slice(MEL1_MAGIC);
    for v in [f as u32, t as u32, mel.sample_rate(), mel.hop()] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for frame in 0..t {
        for bin in 0..f {
            buf.extend_from_slice(&mel.values()[[bin, frame]].to_le_bytes());
        }
    }
    buf
}

pub fn decode_mel1(bytes: &[u8], origin: &Path) -> Result<LogMelSpectrogram> {
    let bad = |message: String| Error::Format {
        path: origin.to_path_buf(),
        message,
    };
    if bytes.len() < HEADER_LEN || &bytes[..4] != MEL1_MAGIC {
        return Err(bad("missing MEL1 header".into()));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap());
    let (f, t, sample_rate, hop) = (word(0) as usize, word(1) as usize, word(2), word(3));
    let expected = f
        .checked_mul(t)
        .and_then(|n| n.checked_mul(4))
        .and_then(|n| n.checked_add(HEADER_LEN))
        .ok_or_else(|| bad("dimensions overflow".into()))?;
    if bytes.len() != expected {
        return Err(bad(format!(
            "expected {expected} bytes for {f}x{t}, found {}",
            bytes.len()
        )));
    }
    let mut values = Array2::zeros((f, t));
    let body = &bytes[HEADER_LEN..];
    for frame in 0..t {
        for bin in 0..f {
            let off = 4 * (frame * f + bin);
            values[[bin, frame]] = f32::from_le_bytes(body[off..off + 4].try_into().unwrap());
        }
    }
    LogMelSpectrogram::new(values, hop, sample_rate).map_err(|e| bad(e.to_string()))
}

pub fn write_mel1(path: impl AsRef<Path>, mel: &LogMelSpectrogram) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_mel1(mel)).map_err(|e| Error::io(path, e))
}

pub fn read_mel1(path: impl AsRef<Path>) -> Result<LogMelSpectrogram> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_mel1(&bytes, path)
}
