//! IDX containers (MNIST's native format): big-endian magic, big-endian
//! extents, then raw unsigned bytes.

use std::fs;
use std::path::{Path, PathBuf};

use super::{LabeledDataset, Split};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

fn be_u32(bytes: &[u8], offset: usize, path: &Path) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
        .ok_or_else(|| Error::Truncated {
            path: path.to_path_buf(),
            expected: offset + 4,
            found: bytes.len(),
        })
}

fn check_magic(bytes: &[u8], expected: u32, path: &Path) -> Result<()> {
    let found = be_u32(bytes, 0, path)?;
    if found != expected {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
            expected,
            found,
        });
    }
    Ok(())
}

fn check_len(bytes: &[u8], expected: usize, path: &Path) -> Result<()> {
    if bytes.len() != expected {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            expected,
            found: bytes.len(),
        });
    }
    Ok(())
}

/// Image tensor `[n, 1, rows, cols]` scaled by 1/255.
pub fn parse_idx_images(bytes: &[u8], path: &Path) -> Result<Tensor> {
    check_magic(bytes, IDX_IMAGES_MAGIC, path)?;
    let n = be_u32(bytes, 4, path)? as usize;
    let rows = be_u32(bytes, 8, path)? as usize;
    let cols = be_u32(bytes, 12, path)? as usize;
    if n == 0 || rows == 0 || cols == 0 {
        return Err(Error::Malformed(format!("{}: zero extent in header", path.display())));
    }
    check_len(bytes, 16 + n * rows * cols, path)?;
    let data = bytes[16..].iter().map(|&b| b as f64 / 255.0).collect();
    Tensor::new(vec![n, 1, rows, cols], data)
}

pub fn parse_idx_labels(bytes: &[u8], path: &Path) -> Result<Vec<usize>> {
    check_magic(bytes, IDX_LABELS_MAGIC, path)?;
    let n = be_u32(bytes, 4, path)? as usize;
    check_len(bytes, 8 + n, path)?;
    Ok(bytes[8..].iter().map(|&b| b as usize).collect())
}

/// Load an image/label file pair; the class count is `max(label) + 1`, at least 10.
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<LabeledDataset> {
    let images_path = images_path.as_ref();
    let labels_path = labels_path.as_ref();
    let images = parse_idx_images(&fs::read(images_path)?, images_path)?;
    let labels = parse_idx_labels(&fs::read(labels_path)?, labels_path)?;
    if images.shape()[0] != labels.len() {
        return Err(Error::CountMismatch {
            images: images.shape()[0],
            labels: labels.len(),
        });
    }
    let classes = labels.iter().max().map_or(10, |&m| (m + 1).max(10));
    LabeledDataset::new(images, labels, classes, Split::Train)
}

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Images `[n, 1, h, w]` (values in `[0, 1]`) as IDX bytes.
pub fn encode_idx_images(images: &Tensor) -> Result<Vec<u8>> {
    let s = images.shape();
    if s.len() != 4 || s[1] != 1 {
        return Err(Error::InvalidArgument(format!(
            "IDX images must be [n, 1, h, w], got {s:?}"
        )));
    }
    let mut out = Vec::with_capacity(16 + images.len());
    for v in [IDX_IMAGES_MAGIC, s[0] as u32, s[2] as u32, s[3] as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend(images.data().iter().map(|&v| to_u8(v)));
    Ok(out)
}

pub fn encode_idx_labels(labels: &[usize]) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    for &l in labels {
        out.push(u8::try_from(l).map_err(|_| Error::InvalidArgument(format!("label {l} exceeds a byte")))?);
    }
    Ok(out)
}

/// Write a dataset as an IDX image/label pair.
pub fn write_idx(dataset: &LabeledDataset, images_path: impl Into<PathBuf>, labels_path: impl Into<PathBuf>) -> Result<()> {
    fs::write(images_path.into(), encode_idx_images(&dataset.images)?)?;
    fs::write(labels_path.into(), encode_idx_labels(&dataset.labels)?)?;
    Ok(())
}
