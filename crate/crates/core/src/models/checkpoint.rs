//! Binary checkpoint container.
//!
//! ```text
//! magic      4 bytes   "NMCK"
//! version    u16 LE    1
//! manifest   u32 LE length, then UTF-8 JSON
//!            {spec, normalization, epoch, best_val_accuracy, adam, adam_step, tensors}
//! tensors    repeated `tensors` times:
//!            u32 LE rank, rank x u32 LE extents, extent-product x f32 LE values
//!            order: parameters, Adam first moments, Adam second moments
//! ```
//!
//! Values are stored as `f32`, so a loaded checkpoint re-serializes to the
//! same bytes.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AdamConfig, AdamState, Checkpoint, ModelSpec, Normalization};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"NMCK";
pub const CHECKPOINT_VERSION: u16 = 1;

#[derive(Serialize, Deserialize)]
struct Manifest {
    spec: ModelSpec,
    normalization: Normalization,
    epoch: usize,
    best_val_accuracy: f64,
    adam: AdamConfig,
    adam_step: u64,
    tensors: usize,
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let Some(end) = end else {
            return Err(Error::Checkpoint(format!(
                "truncated: wanted {n} bytes at offset {}, file has {}",
                self.pos,
                self.bytes.len()
            )));
        };
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn tensor(&mut self) -> Result<Tensor> {
        let rank = self.u32()? as usize;
        if rank > 8 {
            return Err(Error::Checkpoint(format!("implausible tensor rank {rank}")));
        }
        let shape = (0..rank)
            .map(|_| self.u32().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let len: usize = shape.iter().product();
        let raw = self.take(len.checked_mul(4).ok_or_else(|| {
            Error::Checkpoint(format!("tensor extents {shape:?} overflow"))
        })?)?;
        let data = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
            .collect();
        Tensor::new(shape, data).map_err(|e| Error::Checkpoint(e.to_string()))
    }
}

fn write_tensor(out: &mut Vec<u8>, t: &Tensor) {
    out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
    for &d in t.shape() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for &v in t.data() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let manifest = Manifest {
            spec: self.spec.clone(),
            normalization: self.normalization.clone(),
            epoch: self.epoch,
            best_val_accuracy: self.best_val_accuracy,
            adam: self.adam.config,
            adam_step: self.adam.t,
            tensors: self.params.len() * 3,
        };
        let json = serde_json::to_vec(&manifest)?;
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        for t in self.params.iter().chain(&self.adam.m).chain(&self.adam.v) {
            write_tensor(&mut out, t);
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(4)?;
        if magic != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint(format!("bad magic {magic:?}")));
        }
        let version = r.u16()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let manifest_len = r.u32()? as usize;
        let manifest: Manifest = serde_json::from_slice(r.take(manifest_len)?)
            .map_err(|e| Error::Checkpoint(format!("manifest: {e}")))?;
        let shapes = manifest
            .spec
            .param_shapes()
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
        if manifest.tensors != shapes.len() * 3 {
            return Err(Error::Checkpoint(format!(
                "manifest lists {} tensors, spec needs {}",
                manifest.tensors,
                shapes.len() * 3
            )));
        }
        let mut tensors = Vec::with_capacity(manifest.tensors);
        for i in 0..manifest.tensors {
            let t = r.tensor()?;
            let expected = &shapes[i % shapes.len()];
            if t.shape() != expected.as_slice() {
                return Err(Error::Checkpoint(format!(
                    "tensor {i} has shape {:?}, spec needs {expected:?}",
                    t.shape()
                )));
            }
            tensors.push(t);
        }
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint(format!(
                "{} trailing bytes",
                bytes.len() - r.pos
            )));
        }
        let v = tensors.split_off(2 * shapes.len());
        let m = tensors.split_off(shapes.len());
        let params = tensors;
        let ckpt = Checkpoint {
            spec: manifest.spec,
            normalization: Normalization::identity(0),
            params,
            adam: AdamState {
                config: manifest.adam,
                m,
                v,
                t: manifest.adam_step,
            },
            epoch: manifest.epoch,
            best_val_accuracy: manifest.best_val_accuracy,
        };
        let ckpt = ckpt
            .with_normalization(manifest.normalization)
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
        if !ckpt.is_finite() {
            return Err(Error::Checkpoint("non-finite parameter".into()));
        }
        Ok(ckpt)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}
