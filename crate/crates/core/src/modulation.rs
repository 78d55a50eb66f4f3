//! Carrier construction and modulational training transforms.
//!
//! A carrier `c` of the same size `N` as the input is squared and rescaled so
//! its mean is one: the effective multiplier is `N * c^2 / C0` with
//! `C0 = sum(c^2)`, the zero-frequency DFT coefficient of `c^2`. Splitting
//! `c^2 = lambda + residual` with `lambda = C0 / N` shows the same transform as
//! `x * (1 + residual * N / C0)`, a zero-mean multiplicative perturbation.
//!
//! Noise carriers are `c = beta + (1 - beta) * noise`; `beta = 1` gives the
//! all-ones carrier and therefore the identity transform.

use crate::error::{Error, Result};
use crate::rng::{sample, NoiseDistribution, RngStream};
use crate::tensor::Tensor;

/// Carriers whose constant component falls below this are resampled.
pub const MIN_CONSTANT_COMPONENT: f64 = 1e-12;
/// Resampling attempts before giving up on a degenerate carrier.
pub const MAX_CARRIER_RESAMPLES: usize = 16;

#[derive(Clone, Debug, PartialEq)]
pub struct Carrier {
    beta: f64,
    noise: Option<Tensor>,
    carrier: Tensor,
    c0: f64,
    lambda: f64,
    residual: Tensor,
    multiplier: Tensor,
}

impl Carrier {
    /// Carrier `beta + (1 - beta) * noise` for an explicit noise tensor.
    pub fn from_noise(beta: f64, noise: Tensor) -> Result<Self> {
        check_beta(beta)?;
        let c = noise.map(|d| beta + (1.0 - beta) * d);
        let mut carrier = Self::from_values(c)?;
        carrier.beta = beta;
        carrier.noise = Some(noise);
        Ok(carrier)
    }

    /// An arbitrary nonzero carrier (general modulational training).
    pub fn from_values(carrier: Tensor) -> Result<Self> {
        if !carrier.is_finite() {
            return Err(Error::InvalidArgument("carrier must be finite".into()));
        }
        let squared = carrier.map(|c| c * c);
        let (c0, lambda) = constant_component(&squared)?;
        if c0 < MIN_CONSTANT_COMPONENT {
            return Err(Error::DegenerateCarrier(0));
        }
        let n = carrier.len() as f64;
        let residual = squared.add_scalar(-lambda);
        let multiplier = squared.map(|c2| (n * c2) / c0);
        Ok(Self {
            beta: f64::NAN,
            noise: None,
            carrier,
            c0,
            lambda,
            residual,
            multiplier,
        })
    }

    /// Ratio of the constant part; NaN for carriers built from raw values.
    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn noise(&self) -> Option<&Tensor> {
        self.noise.as_ref()
    }

    pub fn values(&self) -> &Tensor {
        &self.carrier
    }

    /// `C0 = sum(c^2)`.
    pub fn constant_component(&self) -> f64 {
        self.c0
    }

    /// `lambda = C0 / N`.
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// `c^2 - lambda`, zero-mean by construction.
    pub fn residual(&self) -> &Tensor {
        &self.residual
    }

    /// The effective input multiplier `N * c^2 / C0`.
    pub fn multiplier(&self) -> &Tensor {
        &self.multiplier
    }

    pub fn shape(&self) -> &[usize] {
        self.carrier.shape()
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if (0.0..=1.0).contains(&beta) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("beta must lie in [0, 1], got {beta}")))
    }
}

/// Sample a noise carrier for inputs of `shape`, resampling degenerate draws.
pub fn make_carrier(
    beta: f64,
    dist: &NoiseDistribution,
    shape: &[usize],
    rng: &mut RngStream,
) -> Result<Carrier> {
    check_beta(beta)?;
    for _ in 0..=MAX_CARRIER_RESAMPLES {
        let noise = sample(dist, shape, rng)?;
        match Carrier::from_noise(beta, noise) {
            Err(Error::DegenerateCarrier(_)) => continue,
            other => return other,
        }
    }
    Err(Error::DegenerateCarrier(MAX_CARRIER_RESAMPLES))
}

/// `(C0, lambda)` for a squared carrier: the zero-frequency DFT coefficient
/// `sum(c^2)` and its mean.
pub fn constant_component(squared: &Tensor) -> Result<(f64, f64)> {
    if squared.is_empty() {
        return Err(Error::EmptyTensor { op: "constant_component" });
    }
    let c0 = squared.sum();
    Ok((c0, c0 / squared.len() as f64))
}

/// `x * N * c^2 / C0`: the modulated, demodulated and rescaled input.
pub fn modulate(x: &Tensor, carrier: &Carrier) -> Result<Tensor> {
    if x.shape() != carrier.shape() {
        return Err(Error::shape("modulate", x.shape(), carrier.shape()));
    }
    x.mul(&carrier.multiplier)
}

/// Intermediate signals of one modulation round trip.
#[derive(Clone, Debug, PartialEq)]
pub struct ModulationStages {
    /// `x * c`
    pub modulated: Tensor,
    /// `x * c * c`
    pub demodulated: Tensor,
    /// `x * c^2 * N / C0`, identical to [`modulate`].
    pub rescaled: Tensor,
}

pub fn modulate_stages(x: &Tensor, carrier: &Carrier) -> Result<ModulationStages> {
    let modulated = x
        .mul(carrier.values())
        .map_err(|_| Error::shape("modulate_stages", x.shape(), carrier.shape()))?;
    let demodulated = modulated.mul(carrier.values())?;
    let rescaled = modulate(x, carrier)?;
    Ok(ModulationStages {
        modulated,
        demodulated,
        rescaled,
    })
}

/// The multiplicative-noise baseline `x * (1 + alpha * noise)` for given noise.
pub fn multiplicative_approx_with(x: &Tensor, alpha: f64, noise: &Tensor) -> Result<Tensor> {
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "alpha must be finite and nonnegative, got {alpha}"
        )));
    }
    x.zip_with(noise, "multiplicative_approx", |x, d| x * (1.0 + alpha * d))
}

/// `x * (1 + alpha * noise)` with freshly sampled noise.
pub fn multiplicative_approx(
    x: &Tensor,
    alpha: f64,
    dist: &NoiseDistribution,
    rng: &mut RngStream,
) -> Result<Tensor> {
    let noise = sample(dist, x.shape(), rng)?;
    multiplicative_approx_with(x, alpha, &noise)
}
