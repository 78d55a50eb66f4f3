//! FGSM / PGD attacks in an l-infinity ball and PGD adversarial training.
//!
//! Attacks work in `[0, 1]` pixel space (before the model's normalization).
//! Each PGD iteration takes a signed-gradient ascent step of size `alpha`,
//! projects the perturbation back onto `[-epsilon, epsilon]` and, unless
//! disabled, onto the valid image box `[0, 1]`.

use serde::{Deserialize, Serialize};

use crate::autodiff::{backward_passes, LossReduction};
use crate::error::{Error, Result};
use crate::models::{BatchObjective, Checkpoint, GradRequest};
use crate::rng::RngStream;
use crate::tensor::{sign, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackConfig {
    /// Radius of the l-infinity ball, in pixel units.
    pub epsilon: f64,
    /// Step size per iteration.
    pub alpha: f64,
    pub steps: usize,
    /// Start from `U(-epsilon, epsilon)` instead of zero.
    pub random_init: bool,
    /// Keep `x + delta` inside `[0, 1]`.
    pub box_clamp: bool,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            epsilon: 8.0 / 255.0,
            alpha: 2.0 / 255.0,
            steps: 7,
            random_init: true,
            box_clamp: true,
        }
    }
}

impl AttackConfig {
    pub fn fgsm(epsilon: f64, alpha: f64) -> Self {
        Self {
            epsilon,
            alpha,
            steps: 1,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "epsilon must be finite and nonnegative, got {}",
                self.epsilon
            )));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "alpha must be positive, got {}",
                self.alpha
            )));
        }
        if self.steps == 0 {
            return Err(Error::InvalidArgument("attack needs at least one step".into()));
        }
        Ok(())
    }
}

/// A differentiable loss of the input, as seen by an attacker.
pub trait InputObjective {
    fn loss_and_input_gradient(&mut self, x: &Tensor) -> Result<(f64, Tensor)>;
}

impl InputObjective for BatchObjective {
    fn loss_and_input_gradient(&mut self, x: &Tensor) -> Result<(f64, Tensor)> {
        let (loss, grads) = self.evaluate(x, GradRequest::INPUT)?;
        let g = grads.input.ok_or(Error::MissingGradient(usize::MAX))?;
        Ok((loss, g))
    }
}

fn project(delta: f64, x: f64, cfg: &AttackConfig) -> f64 {
    let d = delta.clamp(-cfg.epsilon, cfg.epsilon);
    if cfg.box_clamp {
        d.clamp(-x, 1.0 - x)
    } else {
        d
    }
}

/// `x + delta`, nudged by at most an ulp so that rounding never leaves the ball.
fn apply(x: f64, delta: f64, cfg: &AttackConfig) -> f64 {
    let mut adv = x + delta;
    while adv - x > cfg.epsilon {
        adv = adv.next_down();
    }
    while x - adv > cfg.epsilon {
        adv = adv.next_up();
    }
    if cfg.box_clamp && (0.0..=1.0).contains(&x) {
        adv = adv.clamp(0.0, 1.0);
    }
    adv
}

/// Projected gradient ascent on `objective` starting from `x`.
/// Returns the adversarial input `x*` with `|x* - x| <= epsilon` elementwise.
pub fn pgd(
    objective: &mut impl InputObjective,
    x: &Tensor,
    cfg: &AttackConfig,
    rng: &mut RngStream,
) -> Result<Tensor> {
    cfg.validate()?;
    let mut delta = Tensor::zeros(x.shape());
    if cfg.random_init {
        for (d, &xv) in delta.data_mut().iter_mut().zip(x.data()) {
            *d = project(rng.uniform_in(-cfg.epsilon, cfg.epsilon), xv, cfg);
        }
    }
    let mut adv = x.zip_with(&delta, "pgd", |xv, d| apply(xv, d, cfg))?;
    for _ in 0..cfg.steps {
        let (_, grad) = objective.loss_and_input_gradient(&adv)?;
        for ((d, &g), &xv) in delta.data_mut().iter_mut().zip(grad.data()).zip(x.data()) {
            *d = project(*d + cfg.alpha * sign(g), xv, cfg);
        }
        adv = x.zip_with(&delta, "pgd", |xv, d| apply(xv, d, cfg))?;
    }
    Ok(adv)
}

/// One-step attack; identical to [`pgd`] with `steps == 1`.
pub fn fgsm(
    objective: &mut impl InputObjective,
    x: &Tensor,
    cfg: &AttackConfig,
    rng: &mut RngStream,
) -> Result<Tensor> {
    if cfg.steps != 1 {
        return Err(Error::InvalidArgument(format!(
            "fgsm takes exactly one step, config has {}",
            cfg.steps
        )));
    }
    pgd(objective, x, cfg, rng)
}

/// PGD against a model's summed cross-entropy on a labelled batch.
pub fn pgd_model(
    model: &Checkpoint,
    x: &Tensor,
    labels: &[usize],
    cfg: &AttackConfig,
    rng: &mut RngStream,
) -> Result<Tensor> {
    let mut objective = BatchObjective::new(model, labels, LossReduction::Sum)?;
    pgd(&mut objective, x, cfg, rng)
}

pub fn fgsm_model(
    model: &Checkpoint,
    x: &Tensor,
    labels: &[usize],
    cfg: &AttackConfig,
    rng: &mut RngStream,
) -> Result<Tensor> {
    let mut objective = BatchObjective::new(model, labels, LossReduction::Sum)?;
    fgsm(&mut objective, x, cfg, rng)
}

/// Outcome of one optimizer step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepReport {
    /// Mean cross-entropy of the batch actually trained on.
    pub loss: f64,
    pub backward_passes: u64,
}

/// One Adam step on the mean cross-entropy of `(x, labels)`.
pub fn standard_train_step(model: &mut Checkpoint, x: &Tensor, labels: &[usize]) -> Result<StepReport> {
    let before = backward_passes();
    let (loss, grads) = model.loss_and_gradients(x, labels, LossReduction::Mean, GradRequest::PARAMS)?;
    if !loss.is_finite() {
        return Err(Error::Numerical(format!("loss is {loss}")));
    }
    model.adam_step(&grads)?;
    Ok(StepReport {
        loss,
        backward_passes: backward_passes() - before,
    })
}

/// PGD adversarial training: find `x*` with the parameters frozen, then take
/// one standard step on `(x*, labels)`.
pub fn adversarial_train_step(
    model: &mut Checkpoint,
    x: &Tensor,
    labels: &[usize],
    cfg: &AttackConfig,
    rng: &mut RngStream,
) -> Result<StepReport> {
    let before = backward_passes();
    let adv = pgd_model(model, x, labels, cfg, rng)?;
    let report = standard_train_step(model, &adv, labels)?;
    Ok(StepReport {
        loss: report.loss,
        backward_passes: backward_passes() - before,
    })
}
