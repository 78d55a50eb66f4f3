//! Deterministic random streams and the carrier noise distributions.
//!
//! Every sampler is closed-form on top of uniform draws: Box-Muller for the
//! Gaussian, inverse CDFs for Laplace, Exponential and Rayleigh. Gamma with
//! shape 1 is sampled exactly like an Exponential of the same scale.

use std::f64::consts::PI;
use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// A seeded ChaCha stream. Equal seeds (and keys) give equal sequences on
/// every platform and thread layout.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    rng: ChaCha8Rng,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Independent stream for `(seed, key...)`, e.g. `(seed, [WORKER, id])` or
    /// `(seed, [CARRIER, epoch, example])`.
    pub fn derive(seed: u64, key: &[u64]) -> Self {
        let mixed = key
            .iter()
            .fold(splitmix64(seed), |h, &k| splitmix64(h ^ splitmix64(k)));
        Self {
            seed,
            rng: ChaCha8Rng::seed_from_u64(mixed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Uniform in `(0, 1]`, safe as a logarithm argument.
    pub fn uniform_open0(&mut self) -> f64 {
        1.0 - self.uniform()
    }

    /// Uniform in `(0, 1)`.
    pub fn uniform_open(&mut self) -> f64 {
        loop {
            let u = self.uniform();
            if u > 0.0 {
                return u;
            }
        }
    }

    pub fn uniform_in(&mut self, low: f64, high: f64) -> f64 {
        low + (high - low) * self.uniform()
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        items.shuffle(&mut self.rng);
    }
}

/// The six carrier noise families.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    Gaussian,
    Uniform,
    Laplace,
    Gamma,
    Exponential,
    Rayleigh,
}

impl NoiseKind {
    pub const ALL: [NoiseKind; 6] = [
        NoiseKind::Gaussian,
        NoiseKind::Uniform,
        NoiseKind::Laplace,
        NoiseKind::Gamma,
        NoiseKind::Exponential,
        NoiseKind::Rayleigh,
    ];

    /// Standard parameterisation: N(0, 1), U[0, 1], Laplace(0, 1),
    /// Gamma(shape 1, scale 1), Exponential(scale 1), Rayleigh(scale 1).
    pub fn standard(self) -> NoiseDistribution {
        match self {
            NoiseKind::Gaussian => NoiseDistribution::Gaussian { mean: 0.0, std: 1.0 },
            NoiseKind::Uniform => NoiseDistribution::Uniform { low: 0.0, high: 1.0 },
            NoiseKind::Laplace => NoiseDistribution::Laplace { location: 0.0, scale: 1.0 },
            NoiseKind::Gamma => NoiseDistribution::Gamma { shape: 1.0, scale: 1.0 },
            NoiseKind::Exponential => NoiseDistribution::Exponential { scale: 1.0 },
            NoiseKind::Rayleigh => NoiseDistribution::Rayleigh { scale: 1.0 },
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            NoiseKind::Gaussian => "gaussian",
            NoiseKind::Uniform => "uniform",
            NoiseKind::Laplace => "laplace",
            NoiseKind::Gamma => "gamma",
            NoiseKind::Exponential => "exponential",
            NoiseKind::Rayleigh => "rayleigh",
        }
    }
}

impl fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum NoiseDistribution {
    Gaussian { mean: f64, std: f64 },
    Uniform { low: f64, high: f64 },
    Laplace { location: f64, scale: f64 },
    Gamma { shape: f64, scale: f64 },
    Exponential { scale: f64 },
    Rayleigh { scale: f64 },
}

impl NoiseDistribution {
    pub fn kind(&self) -> NoiseKind {
        match self {
            NoiseDistribution::Gaussian { .. } => NoiseKind::Gaussian,
            NoiseDistribution::Uniform { .. } => NoiseKind::Uniform,
            NoiseDistribution::Laplace { .. } => NoiseKind::Laplace,
            NoiseDistribution::Gamma { .. } => NoiseKind::Gamma,
            NoiseDistribution::Exponential { .. } => NoiseKind::Exponential,
            NoiseDistribution::Rayleigh { .. } => NoiseKind::Rayleigh,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!(
                    "{}: {name} must be positive and finite, got {v}",
                    self.kind()
                )))
            }
        };
        match *self {
            NoiseDistribution::Gaussian { mean, std } if mean.is_finite() => positive("std", std),
            NoiseDistribution::Uniform { low, high } if low.is_finite() && high.is_finite() => {
                positive("width", high - low)
            }
            NoiseDistribution::Laplace { location, scale } if location.is_finite() => {
                positive("scale", scale)
            }
            NoiseDistribution::Gamma { shape, scale } => {
                positive("shape", shape)?;
                positive("scale", scale)
            }
            NoiseDistribution::Exponential { scale } | NoiseDistribution::Rayleigh { scale } => {
                positive("scale", scale)
            }
            _ => Err(Error::InvalidArgument(format!(
                "{}: location parameter must be finite",
                self.kind()
            ))),
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            NoiseDistribution::Gaussian { mean, .. } => mean,
            NoiseDistribution::Uniform { low, high } => 0.5 * (low + high),
            NoiseDistribution::Laplace { location, .. } => location,
            NoiseDistribution::Gamma { shape, scale } => shape * scale,
            NoiseDistribution::Exponential { scale } => scale,
            NoiseDistribution::Rayleigh { scale } => scale * (PI / 2.0).sqrt(),
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            NoiseDistribution::Gaussian { std, .. } => std * std,
            NoiseDistribution::Uniform { low, high } => (high - low).powi(2) / 12.0,
            NoiseDistribution::Laplace { scale, .. } => 2.0 * scale * scale,
            NoiseDistribution::Gamma { shape, scale } => shape * scale * scale,
            NoiseDistribution::Exponential { scale } => scale * scale,
            NoiseDistribution::Rayleigh { scale } => (4.0 - PI) / 2.0 * scale * scale,
        }
    }

    /// Fill `out` with i.i.d. draws. Assumes [`validate`](Self::validate) passed.
    fn fill(&self, out: &mut [f64], rng: &mut RngStream) {
        match *self {
            NoiseDistribution::Gaussian { mean, std } => {
                for pair in out.chunks_mut(2) {
                    let r = (-2.0 * rng.uniform_open0().ln()).sqrt();
                    let theta = 2.0 * PI * rng.uniform();
                    pair[0] = mean + std * r * theta.cos();
                    if let Some(second) = pair.get_mut(1) {
                        *second = mean + std * r * theta.sin();
                    }
                }
            }
            NoiseDistribution::Uniform { low, high } => {
                out.iter_mut().for_each(|v| *v = rng.uniform_in(low, high));
            }
            NoiseDistribution::Laplace { location, scale } => {
                for v in out.iter_mut() {
                    let u = rng.uniform_open() - 0.5;
                    *v = location - scale * u.signum() * (1.0 - 2.0 * u.abs()).ln();
                }
            }
            NoiseDistribution::Exponential { scale }
            | NoiseDistribution::Gamma { shape: 1.0, scale } => {
                out.iter_mut()
                    .for_each(|v| *v = -scale * rng.uniform_open0().ln());
            }
            NoiseDistribution::Gamma { shape, scale } => {
                out.iter_mut()
                    .for_each(|v| *v = scale * gamma_unit(shape, rng));
            }
            NoiseDistribution::Rayleigh { scale } => {
                out.iter_mut()
                    .for_each(|v| *v = scale * (-2.0 * rng.uniform_open0().ln()).sqrt());
            }
        }
    }
}

fn standard_normal(rng: &mut RngStream) -> f64 {
    let r = (-2.0 * rng.uniform_open0().ln()).sqrt();
    r * (2.0 * PI * rng.uniform()).cos()
}

/// Marsaglia-Tsang sampler for Gamma(shape, 1), shape != 1.
fn gamma_unit(shape: f64, rng: &mut RngStream) -> f64 {
    if shape < 1.0 {
        let boost = rng.uniform_open0().powf(1.0 / shape);
        return gamma_unit(shape + 1.0, rng) * boost;
    }
    let d = shape - 1.0 / 3.0;
    let c = 1.0 / (9.0 * d).sqrt();
    loop {
        let z = standard_normal(rng);
        let v = (1.0 + c * z).powi(3);
        if v <= 0.0 {
            continue;
        }
        let u = rng.uniform_open0();
        if u.ln() < 0.5 * z * z + d - d * v + d * v.ln() {
            return d * v;
        }
    }
}

/// Draw a tensor of i.i.d. samples with the given shape.
pub fn sample(dist: &NoiseDistribution, shape: &[usize], rng: &mut RngStream) -> Result<Tensor> {
    dist.validate()?;
    let mut t = Tensor::zeros(shape);
    dist.fill(t.data_mut(), rng);
    Ok(t)
}
