//! Datasets, file formats and exported artifacts.

mod cifar;
mod grid;
mod idx;
mod metrics;
mod synthetic;

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use cifar::{encode_cifar10_records, load_cifar10_binary, parse_cifar10_records, CIFAR10_RECORD};
pub use grid::{
    decode_png, encode_grid, export_image_grid, read_pnm, GridImage, DEFAULT_GRID_COLUMNS,
};
pub use idx::{
    encode_idx_images, encode_idx_labels, load_idx, parse_idx_images, parse_idx_labels,
    write_idx, IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC,
};
pub use metrics::{read_metrics, MetricsRow, MetricsWriter, METRICS_HEADER};
pub use synthetic::{synthetic_dataset, SyntheticSpec};

use crate::error::{Error, Result};
use crate::models::Normalization;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

/// Images `[n, c, h, w]` in `[0, 1]` with their labels.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    pub images: Tensor,
    pub labels: Vec<usize>,
    pub classes: usize,
    pub split: Split,
}

impl LabeledDataset {
    pub fn new(images: Tensor, labels: Vec<usize>, classes: usize, split: Split) -> Result<Self> {
        if images.rank() != 4 {
            return Err(Error::Malformed(format!(
                "images must be [n, c, h, w], got {:?}",
                images.shape()
            )));
        }
        if images.shape()[0] != labels.len() {
            return Err(Error::CountMismatch {
                images: images.shape()[0],
                labels: labels.len(),
            });
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::LabelOutOfRange { label, classes });
        }
        if images.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Malformed("pixel values must lie in [0, 1]".into()));
        }
        Ok(Self {
            images,
            labels,
            classes,
            split,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// `[c, h, w]`
    pub fn image_shape(&self) -> [usize; 3] {
        let s = self.images.shape();
        [s[1], s[2], s[3]]
    }

    /// Rows `start..start + count`, tagged with `split`.
    pub fn slice(&self, start: usize, count: usize, split: Split) -> Result<Self> {
        if count == 0 || start + count > self.len() {
            return Err(Error::InvalidArgument(format!(
                "slice {start}..{} of a {}-example dataset",
                start + count,
                self.len()
            )));
        }
        Ok(Self {
            images: self.images.narrow_leading(start, count)?,
            labels: self.labels[start..start + count].to_vec(),
            classes: self.classes,
            split,
        })
    }

    /// The first `n` examples (or all of them when `n` is larger).
    pub fn take(&self, n: usize) -> Result<Self> {
        self.slice(0, n.min(self.len()), self.split)
    }

    /// Carve the last `fraction` of the examples off as a validation split.
    pub fn split_validation(&self, fraction: f64) -> Result<(Self, Self)> {
        if !(fraction > 0.0 && fraction < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "validation fraction must be in (0, 1), got {fraction}"
            )));
        }
        let val = ((self.len() as f64 * fraction).round() as usize).max(1);
        if val >= self.len() {
            return Err(Error::InvalidArgument(format!(
                "{} examples are too few for a validation split",
                self.len()
            )));
        }
        let train = self.len() - val;
        Ok((
            self.slice(0, train, Split::Train)?,
            self.slice(train, val, Split::Val)?,
        ))
    }

    /// Gather examples by index into a batch.
    pub fn batch(&self, indices: &[usize]) -> Result<(Tensor, Vec<usize>)> {
        let per = self.images.len() / self.len();
        let mut data = Vec::with_capacity(per * indices.len());
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(Error::InvalidArgument(format!("index {i} out of range")));
            }
            data.extend_from_slice(&self.images.data()[i * per..(i + 1) * per]);
            labels.push(self.labels[i]);
        }
        let [c, h, w] = self.image_shape();
        Ok((Tensor::new(vec![indices.len(), c, h, w], data)?, labels))
    }

    /// Per-channel mean and (population) standard deviation.
    pub fn channel_stats(&self) -> Normalization {
        let [c, h, w] = self.image_shape();
        let plane = h * w;
        let mut sum = vec![0.0; c];
        let mut sq = vec![0.0; c];
        for (i, &v) in self.images.data().iter().enumerate() {
            let ch = (i / plane) % c;
            sum[ch] += v;
            sq[ch] += v * v;
        }
        let count = (self.len() * plane) as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / count).collect();
        let std = sq
            .iter()
            .zip(&mean)
            .map(|(s, m)| {
                let var = (s / count - m * m).max(0.0);
                // A constant channel would otherwise divide by zero.
                if var > 0.0 { var.sqrt() } else { 1.0 }
            })
            .collect();
        Normalization { mean, std }
    }
}

/// `(x - mean) / std` per channel for a batch `[n, c, h, w]`.
pub fn normalize(images: &Tensor, stats: &Normalization) -> Result<Tensor> {
    channel_map(images, stats, |v, m, s| (v - m) / s)
}

/// Inverse of [`normalize`].
pub fn denormalize(images: &Tensor, stats: &Normalization) -> Result<Tensor> {
    channel_map(images, stats, |v, m, s| v * s + m)
}

fn channel_map(images: &Tensor, stats: &Normalization, f: impl Fn(f64, f64, f64) -> f64) -> Result<Tensor> {
    let shape = images.shape();
    if shape.len() != 4 || shape[1] != stats.mean.len() || shape[1] != stats.std.len() {
        return Err(Error::shape("normalize", shape, &[stats.mean.len()]));
    }
    let plane = shape[2] * shape[3];
    let c = shape[1];
    let mut out = images.clone();
    for (i, v) in out.data_mut().iter_mut().enumerate() {
        let ch = (i / plane) % c;
        *v = f(*v, stats.mean[ch], stats.std[ch]);
    }
    Ok(out)
}

/// The official MNIST file names inside `dir`.
pub fn load_mnist(dir: impl AsRef<Path>, train: bool) -> Result<LabeledDataset> {
    let dir = dir.as_ref();
    let prefix = if train { "train" } else { "t10k" };
    let mut ds = load_idx(
        dir.join(format!("{prefix}-images-idx3-ubyte")),
        dir.join(format!("{prefix}-labels-idx1-ubyte")),
    )?;
    ds.split = if train { Split::Train } else { Split::Test };
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> LabeledDataset {
        let images = Tensor::new(vec![4, 1, 1, 2], vec![0.0, 1.0, 0.5, 0.5, 0.25, 0.75, 1.0, 0.0]).unwrap();
        LabeledDataset::new(images, vec![0, 1, 1, 0], 2, Split::Train).unwrap()
    }

    #[test]
    fn validation_is_the_tail() {
        let (train, val) = tiny().split_validation(0.25).unwrap();
        assert_eq!(train.len(), 3);
        assert_eq!(val.labels, vec![0]);
        assert_eq!(val.images.data(), &[1.0, 0.0]);
        assert_eq!(val.split, Split::Val);
    }

    #[test]
    fn rejects_bad_datasets() {
        let images = Tensor::full(&[2, 1, 1, 1], 0.5);
        assert!(LabeledDataset::new(images.clone(), vec![0], 2, Split::Train).is_err());
        assert!(LabeledDataset::new(images.clone(), vec![0, 2], 2, Split::Train).is_err());
        let bright = Tensor::full(&[1, 1, 1, 1], 1.5);
        assert!(LabeledDataset::new(bright, vec![0], 2, Split::Train).is_err());
    }

    #[test]
    fn stats_and_normalization_round_trip() {
        let ds = tiny();
        let stats = ds.channel_stats();
        assert!((stats.mean[0] - 0.5).abs() < 1e-15);
        let z = normalize(&ds.images, &stats).unwrap();
        assert!(z.mean().unwrap().abs() < 1e-12);
        let back = denormalize(&z, &stats).unwrap();
        for (a, b) in back.data().iter().zip(ds.images.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn batch_gathers_rows() {
        let (x, y) = tiny().batch(&[3, 0]).unwrap();
        assert_eq!(x.shape(), &[2, 1, 1, 2]);
        assert_eq!(x.data(), &[1.0, 0.0, 0.0, 1.0]);
        assert_eq!(y, vec![0, 0]);
        assert!(tiny().batch(&[9]).is_err());
    }
}
