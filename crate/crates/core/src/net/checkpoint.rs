//! Binary checkpoint container.
//!
//! Layout (little-endian): magic `STSCKPT\0`, `u32` format version, `u32`
//! metadata length, metadata as JSON, `u32` tensor count, then per tensor a
//! `u32`-prefixed UTF-8 name, `u32` rank, `u32` dims, and `f32` data.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use super::NetConfig;
use crate::dsp::DspConfig;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"STSCKPT\0";
pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMetadata {
    pub format_version: u32,
    /// Hex digest of the training configuration.
    pub config_hash: String,
    pub step: u64,
    pub net: NetConfig,
    pub dsp: DspConfig,
    /// Free-form training state (controller value, optimizer counters, the
    /// training configuration).
    #[serde(default)]
    pub state: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl NamedTensor {
    pub fn from_tensor(name: impl Into<String>, t: &Tensor) -> Self {
        Self {
            name: name.into(),
            shape: vec![t.rows(), t.cols()],
            data: t.data().iter().map(|&v| v as f32).collect(),
        }
    }

    pub fn to_tensor(&self) -> Result<Tensor> {
        match self.shape[..] {
            [r, c] => Ok(Tensor::from_vec(r, c, self.data.iter().map(|&v| v as f64).collect())),
            _ => Err(Error::validation(format!("tensor {} is not 2-D", self.name))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub metadata: CheckpointMetadata,
    pub tensors: Vec<NamedTensor>,
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    origin: &'a Path,
}

impl Reader<'_> {
    fn bad(&self, message: impl Into<String>) -> Error {
        Error::Format {
            path: self.origin.to_path_buf(),
            message: message.into(),
        }
    }

    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| self.bad("truncated checkpoint"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

impl Checkpoint {
    pub fn tensor(&self, name: &str) -> Option<&NamedTensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    /// Tensors whose names start with `prefix`, with the prefix removed.
    pub fn with_prefix<'a>(&'a self, prefix: &'a str) -> impl Iterator<Item = (&'a str, &'a NamedTensor)> + 'a {
        self.tensors
            .iter()
            .filter_map(move |t| t.name.strip_prefix(prefix).map(|n| (n, t)))
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let meta = serde_json::to_vec(&self.metadata)?;
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
        out.extend_from_slice(&meta);
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for t in &self.tensors {
            if t.shape.iter().product::<usize>() != t.data.len() {
                return Err(Error::validation(format!("tensor {} data does not match shape", t.name)));
            }
            out.extend_from_slice(&(t.name.len() as u32).to_le_bytes());
            out.extend_from_slice(t.name.as_bytes());
            out.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
            for &d in &t.shape {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8], origin: &Path) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0, origin };
        if r.take(8)? != CHECKPOINT_MAGIC {
            return Err(r.bad("not a checkpoint file"));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_FORMAT_VERSION {
            return Err(r.bad(format!("unsupported checkpoint version {version}")));
        }
        let n = r.u32()? as usize;
        let metadata: CheckpointMetadata =
            serde_json::from_slice(r.take(n)?).map_err(|e| r.bad(format!("metadata: {e}")))?;
        let count = r.u32()? as usize;
        let mut tensors = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            let len = r.u32()? as usize;
            let name = String::from_utf8(r.take(len)?.to_vec()).map_err(|_| r.bad("tensor name is not UTF-8"))?;
            let rank = r.u32()? as usize;
            let mut shape = Vec::with_capacity(rank.min(8));
            for _ in 0..rank {
                shape.push(r.u32()? as usize);
            }
            let numel = shape
                .iter()
                .try_fold(1usize, |a, &d| a.checked_mul(d))
                .ok_or_else(|| r.bad("tensor size overflows"))?;
            let raw = r.take(numel.checked_mul(4).ok_or_else(|| r.bad("tensor size overflows"))?)?;
            let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
            tensors.push(NamedTensor { name, shape, data });
        }
        if r.pos != bytes.len() {
            return Err(r.bad("trailing bytes after tensors"));
        }
        Ok(Self { metadata, tensors })
    }

    /// Writes atomically through a temporary sibling file.
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let bytes = self.encode()?;
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes, path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn meta() -> CheckpointMetadata {
        CheckpointMetadata {
            format_version: CHECKPOINT_FORMAT_VERSION,
            config_hash: "abc".into(),
            step: 12,
            net: NetConfig::reduced(),
            dsp: DspConfig::default(),
            state: serde_json::json!({"k": 0.25}),
        }
    }

    #[test]
    fn rejects_garbage() {
        let p = Path::new("x");
        assert!(Checkpoint::decode(b"nope", p).is_err());
        let c = Checkpoint {
            metadata: meta(),
            tensors: vec![],
        };
        let mut b = c.encode().unwrap();
        b.push(0);
        assert!(Checkpoint::decode(&b, p).is_err());
        b.truncate(b.len() - 3);
        assert!(Checkpoint::decode(&b, p).is_err());
    }

    proptest! {
        #[test]
        fn round_trip_bit_exact(bits in proptest::collection::vec(any::<u32>(), 0..40), cols in 1usize..5) {
            let data: Vec<f32> = bits.iter().map(|&b| f32::from_bits(b)).collect();
            let rows = data.len() / cols;
            let data = data[..rows * cols].to_vec();
            let c = Checkpoint {
                metadata: meta(),
                tensors: vec![NamedTensor { name: "generator/head.weight".into(), shape: vec![rows, cols], data }],
            };
            let back = Checkpoint::decode(&c.encode().unwrap(), Path::new("m")).unwrap();
            prop_assert_eq!(&back.metadata, &c.metadata);
            let a: Vec<u32> = back.tensors[0].data.iter().map(|v| v.to_bits()).collect();
            let b: Vec<u32> = c.tensors[0].data.iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(a, b);
            prop_assert_eq!(&back.tensors[0].shape, &c.tensors[0].shape);
        }
    }
}
