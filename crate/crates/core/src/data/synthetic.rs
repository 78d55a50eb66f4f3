//! Class-conditional blob images for fast end-to-end runs.
//!
//! Class `k` places a Gaussian blob at the `k`-th point of a ring around the
//! image centre. Each example scales its class template by a random
//! brightness in `[0.6, 1]`, adds `noise * N(0, 1)` per pixel and clamps to
//! `[0, 1]`. Each template correlates with itself more than with any other,
//! so with `noise = 0` template matching separates the classes.

use serde::{Deserialize, Serialize};

use super::{LabeledDataset, Split};
use crate::error::{Error, Result};
use crate::rng::{sample, NoiseDistribution, RngStream};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub count: usize,
    /// `[c, h, w]`
    pub shape: [usize; 3],
    pub noise: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            classes: 10,
            count: 2000,
            shape: [1, 28, 28],
            noise: 0.05,
        }
    }
}

fn template(spec: &SyntheticSpec, class: usize) -> Vec<f64> {
    let [c, h, w] = spec.shape;
    let (cy, cx) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
    let radius = 0.25 * h.min(w) as f64;
    let sigma = (0.12 * h.min(w) as f64).max(0.5);
    let angle = std::f64::consts::TAU * class as f64 / spec.classes as f64;
    let (by, bx) = (cy + radius * angle.sin(), cx + radius * angle.cos());
    let mut out = Vec::with_capacity(c * h * w);
    for ch in 0..c {
        // Colour images tint each class differently across channels.
        let tint = if c == 1 { 1.0 } else { 0.5 + 0.5 * ((class + ch) % c) as f64 / (c - 1) as f64 };
        for y in 0..h {
            for x in 0..w {
                let r2 = (y as f64 - by).powi(2) + (x as f64 - bx).powi(2);
                out.push(tint * (-r2 / (2.0 * sigma * sigma)).exp());
            }
        }
    }
    out
}

pub fn synthetic_dataset(spec: &SyntheticSpec, rng: &mut RngStream) -> Result<LabeledDataset> {
    if spec.classes < 2 || spec.count == 0 || spec.shape.contains(&0) {
        return Err(Error::InvalidArgument(format!("degenerate synthetic spec {spec:?}")));
    }
    if !(spec.noise >= 0.0 && spec.noise.is_finite()) {
        return Err(Error::InvalidArgument(format!("noise must be nonnegative, got {}", spec.noise)));
    }
    let templates: Vec<Vec<f64>> = (0..spec.classes).map(|k| template(spec, k)).collect();
    let per: usize = spec.shape.iter().product();
    let gaussian = NoiseDistribution::Gaussian { mean: 0.0, std: 1.0 };
    let mut data = Vec::with_capacity(spec.count * per);
    let mut labels = Vec::with_capacity(spec.count);
    for i in 0..spec.count {
        let label = i % spec.classes;
        let brightness = rng.uniform_in(0.6, 1.0);
        let noise = sample(&gaussian, &[per], rng)?;
        data.extend(
            templates[label]
                .iter()
                .zip(noise.data())
                .map(|(t, n)| (brightness * t + spec.noise * n).clamp(0.0, 1.0)),
        );
        labels.push(label);
    }
    let [c, h, w] = spec.shape;
    let images = Tensor::new(vec![spec.count, c, h, w], data)?;
    LabeledDataset::new(images, labels, spec.classes, Split::Train)
}
