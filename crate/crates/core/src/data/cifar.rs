//! CIFAR-10 binary batches: records of one label byte followed by a
//! channel-planar 3x32x32 image.

use std::fs;
use std::path::Path;

use super::{LabeledDataset, Split};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const SIDE: usize = 32;
const PIXELS: usize = 3 * SIDE * SIDE;
pub const CIFAR10_RECORD: usize = 1 + PIXELS;

/// Parse one batch file's bytes into `(images [n, 3, 32, 32], labels)`.
pub fn parse_cifar10_records(bytes: &[u8], path: &Path) -> Result<(Vec<f64>, Vec<usize>)> {
    if bytes.is_empty() || bytes.len() % CIFAR10_RECORD != 0 {
        return Err(Error::RecordSize {
            path: path.to_path_buf(),
            len: bytes.len(),
            record: CIFAR10_RECORD,
        });
    }
    let n = bytes.len() / CIFAR10_RECORD;
    let mut pixels = Vec::with_capacity(n * PIXELS);
    let mut labels = Vec::with_capacity(n);
    for record in bytes.chunks_exact(CIFAR10_RECORD) {
        if record[0] > 9 {
            return Err(Error::LabelOutOfRange {
                label: record[0] as usize,
                classes: 10,
            });
        }
        labels.push(record[0] as usize);
        pixels.extend(record[1..].iter().map(|&b| b as f64 / 255.0));
    }
    Ok((pixels, labels))
}

/// Concatenate one or more batch files.
pub fn load_cifar10_binary<P: AsRef<Path>>(paths: &[P]) -> Result<LabeledDataset> {
    if paths.is_empty() {
        return Err(Error::InvalidArgument("no CIFAR-10 batch files given".into()));
    }
    let mut pixels = Vec::new();
    let mut labels = Vec::new();
    for path in paths {
        let path = path.as_ref();
        let (p, l) = parse_cifar10_records(&fs::read(path)?, path)?;
        pixels.extend(p);
        labels.extend(l);
    }
    let images = Tensor::new(vec![labels.len(), 3, SIDE, SIDE], pixels)?;
    LabeledDataset::new(images, labels, 10, Split::Train)
}

/// Encode images `[n, 3, 32, 32]` with labels as CIFAR-10 records.
pub fn encode_cifar10_records(images: &Tensor, labels: &[usize]) -> Result<Vec<u8>> {
    if images.shape() != [labels.len(), 3, SIDE, SIDE] {
        return Err(Error::shape("cifar10 encode", images.shape(), &[labels.len(), 3, SIDE, SIDE]));
    }
    let mut out = Vec::with_capacity(labels.len() * CIFAR10_RECORD);
    for (img, &label) in images.data().chunks_exact(PIXELS).zip(labels) {
        if label > 9 {
            return Err(Error::LabelOutOfRange { label, classes: 10 });
        }
        out.push(label as u8);
        out.extend(img.iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ten_records_per_30730_bytes() {
        let mut bytes = vec![0u8; 10 * CIFAR10_RECORD];
        bytes[0] = 9;
        bytes[CIFAR10_RECORD + 5] = 255;
        let (pixels, labels) = parse_cifar10_records(&bytes, Path::new("mem")).unwrap();
        assert_eq!(bytes.len(), 30730);
        assert_eq!(labels.len(), 10);
        assert_eq!(labels[0], 9);
        assert_eq!(pixels[PIXELS + 4], 1.0);
    }

    #[test]
    fn record_round_trip() {
        let mut bytes: Vec<u8> = (0..CIFAR10_RECORD).map(|i| (i % 251) as u8).collect();
        bytes[0] = 4;
        let (pixels, labels) = parse_cifar10_records(&bytes, Path::new("mem")).unwrap();
        let images = Tensor::new(vec![1, 3, 32, 32], pixels).unwrap();
        assert_eq!(encode_cifar10_records(&images, &labels).unwrap(), bytes);
    }

    #[test]
    fn size_mismatch_rejected() {
        let bytes = vec![0u8; CIFAR10_RECORD + 1];
        assert!(matches!(
            parse_cifar10_records(&bytes, Path::new("mem")),
            Err(Error::RecordSize { .. })
        ));
    }
}
