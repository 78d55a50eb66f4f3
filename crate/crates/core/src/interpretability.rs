//! Input-gradients and the VII score.
//!
//! For each example `d = sign(x - mean_image)` and `g = sign(grad_x loss)`;
//! its score is `|<d, g>| / (|d| |g|)`, and VII is the mean over a dataset.
//! An example whose `d` or `g` is all zero scores 0 and still counts.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::LossReduction;
use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::models::{Checkpoint, GradRequest};
use crate::tensor::{sign, Tensor};

/// Examples per backward pass when computing gradients for a whole dataset.
pub const GRADIENT_CHUNK: usize = 128;

/// Cross-entropy input-gradient for one example `[c, h, w]`.
pub fn input_gradient(model: &Checkpoint, x: &Tensor, label: usize) -> Result<Tensor> {
    if x.shape() != model.spec.input_shape {
        return Err(Error::shape("input_gradient", x.shape(), &model.spec.input_shape));
    }
    let batched = x.clone().reshape(&[&[1], x.shape()].concat())?;
    let g = input_gradients(model, &batched, &[label])?;
    g.reshape(x.shape())
}

/// Per-example input-gradients for a batch `[n, c, h, w]`.
///
/// The summed loss is differentiated, so row `i` is exactly the gradient of
/// example `i`'s own loss.
pub fn input_gradients(model: &Checkpoint, x: &Tensor, labels: &[usize]) -> Result<Tensor> {
    if x.shape().first() != Some(&labels.len()) {
        return Err(Error::CountMismatch {
            images: x.shape().first().copied().unwrap_or(0),
            labels: labels.len(),
        });
    }
    let mut chunks = Vec::new();
    for start in (0..labels.len()).step_by(GRADIENT_CHUNK) {
        let count = GRADIENT_CHUNK.min(labels.len() - start);
        let xs = x.narrow_leading(start, count)?;
        let (_, grads) = model.loss_and_gradients(
            &xs,
            &labels[start..start + count],
            LossReduction::Sum,
            GradRequest::INPUT,
        )?;
        chunks.push(grads.input.ok_or(Error::MissingGradient(usize::MAX))?);
    }
    if chunks.len() == 1 {
        return Ok(chunks.pop().unwrap());
    }
    let data: Vec<f64> = chunks.into_iter().flat_map(Tensor::into_data).collect();
    Tensor::new(x.shape().to_vec(), data)
}

/// `|<d, g>| / (|d| |g|)`, or 0 when either vector is zero.
///
/// Intended for sign vectors, where the result always lies in `[0, 1]`.
pub fn sign_cosine(d: &[f64], g: &[f64]) -> Result<f64> {
    if d.len() != g.len() {
        return Err(Error::shape("sign_cosine", &[d.len()], &[g.len()]));
    }
    let dot: f64 = d.iter().zip(g).map(|(a, b)| a * b).sum();
    let dd: f64 = d.iter().map(|a| a * a).sum();
    let gg: f64 = g.iter().map(|b| b * b).sum();
    if dd == 0.0 || gg == 0.0 {
        return Ok(0.0);
    }
    // sqrt of the product: exact whenever the cosine is exactly one.
    Ok((dot.abs() / (dd * gg).sqrt()).min(1.0))
}

/// Score of one example given its centred input `x - mean_image` and gradient.
pub fn vii_example(centred: &[f64], grad: &[f64]) -> Result<f64> {
    let d: Vec<f64> = centred.iter().map(|&v| sign(v)).collect();
    let g: Vec<f64> = grad.iter().map(|&v| sign(v)).collect();
    sign_cosine(&d, &g)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ViiReport {
    pub per_example: Vec<f64>,
    pub labels: Vec<usize>,
    pub mean: f64,
    /// Per-pixel mean of the evaluated inputs.
    pub mean_image: Tensor,
    pub count: usize,
    pub loss: &'static str,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViiSummary {
    pub mean_vii: f64,
    pub count: usize,
    pub loss: String,
}

/// Per-pixel mean over the leading axis.
pub fn mean_image(images: &Tensor) -> Result<Tensor> {
    let n = *images.shape().first().ok_or(Error::EmptyTensor { op: "mean_image" })?;
    if n == 0 {
        return Err(Error::EmptyTensor { op: "mean_image" });
    }
    let per = images.len() / n;
    let mut acc = vec![0.0; per];
    for row in images.data().chunks_exact(per) {
        acc.iter_mut().zip(row).for_each(|(a, v)| *a += v);
    }
    acc.iter_mut().for_each(|a| *a /= n as f64);
    Tensor::new(images.shape()[1..].to_vec(), acc)
}

/// VII of `model` over a dataset, with the mean image taken over the same data.
pub fn vii(model: &Checkpoint, dataset: &LabeledDataset) -> Result<ViiReport> {
    let mean = mean_image(&dataset.images)?;
    vii_with_mean(model, &dataset.images, &dataset.labels, &mean)
}

pub fn vii_with_mean(
    model: &Checkpoint,
    images: &Tensor,
    labels: &[usize],
    mean_image: &Tensor,
) -> Result<ViiReport> {
    if labels.is_empty() {
        return Err(Error::EmptyTensor { op: "vii" });
    }
    if images.shape()[1..] != *mean_image.shape() {
        return Err(Error::shape("vii", &images.shape()[1..], mean_image.shape()));
    }
    let grads = input_gradients(model, images, labels)?;
    let per = mean_image.len();
    let mut per_example = Vec::with_capacity(labels.len());
    let mut centred = vec![0.0; per];
    for (x, g) in images.data().chunks_exact(per).zip(grads.data().chunks_exact(per)) {
        centred
            .iter_mut()
            .zip(x.iter().zip(mean_image.data()))
            .for_each(|(c, (a, b))| *c = a - b);
        per_example.push(vii_example(&centred, g)?);
    }
    let mean = per_example.iter().sum::<f64>() / per_example.len() as f64;
    Ok(ViiReport {
        count: per_example.len(),
        per_example,
        labels: labels.to_vec(),
        mean,
        mean_image: mean_image.clone(),
        loss: "cross_entropy",
    })
}

impl ViiReport {
    pub fn summary(&self) -> ViiSummary {
        ViiSummary {
            mean_vii: self.mean,
            count: self.count,
            loss: self.loss.to_string(),
        }
    }

    /// `index,label,vii` rows followed by a `mean,,<value>` summary row.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["index", "label", "vii"])?;
        for (i, (v, l)) in self.per_example.iter().zip(&self.labels).enumerate() {
            w.write_record([i.to_string(), l.to_string(), v.to_string()])?;
        }
        w.write_record(["mean".to_string(), String::new(), self.mean.to_string()])?;
        w.flush()?;
        Ok(())
    }
}

/// Min-max scale to `[0, 1]`; a constant gradient maps to all 0.5.
pub fn gradient_image(grad: &Tensor) -> Result<Tensor> {
    if grad.is_empty() {
        return Err(Error::EmptyTensor { op: "gradient_image" });
    }
    let lo = grad.data().iter().copied().fold(f64::INFINITY, f64::min);
    let hi = grad.data().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    if !(range > 0.0) || !range.is_finite() {
        return Ok(Tensor::full(grad.shape(), 0.5));
    }
    Ok(grad.map(|v| ((v - lo) / range).clamp(0.0, 1.0)))
}
