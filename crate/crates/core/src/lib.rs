//! Noise-modulation training laboratory.
//!
//! A small CPU tensor engine with reverse-mode autodiff, three desk-scale
//! classifiers, and the training regimes compared here:
//!
//! * standard training,
//! * noise modulation: each training input is multiplied by `N * c^2 / C0`
//!   for a carrier `c = beta + (1 - beta) * noise`, where `C0 = sum(c^2)`,
//! * PGD adversarial training,
//! * the multiplicative-noise baseline `x * (1 + alpha * noise)`.
//!
//! Input-gradient interpretability is scored with VII, the mean absolute
//! cosine between `sign(x - mean_image)` and `sign(grad_x loss)`.
//!
//! Runnable walkthroughs live in this crate's `examples/` directory; the
//! `noisemod` binary drives full experiments.

pub mod adversarial;
pub mod autodiff;
pub mod data;
mod error;
pub mod harness;
pub mod interpretability;
pub mod models;
pub mod modulation;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
pub use rng::{NoiseDistribution, NoiseKind, RngStream};
pub use tensor::Tensor;
