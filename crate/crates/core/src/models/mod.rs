//! Desk-scale classifiers and their training state.
//!
//! * `mlp3`: flatten, two ReLU hidden layers (default width 256), linear logits.
//! * `fcnn6`: six 3x3 convolutions (padding 1, stride 2 on every second
//!   layer), ReLU between them, the last producing one map per class, then
//!   global average pooling.
//! * `lenet`: 5x5 conv (pad 2) -> ReLU -> 2x2 avg-pool -> 5x5 conv -> ReLU ->
//!   2x2 avg-pool -> 120 -> 84 -> logits.
//!
//! Every model starts with a fixed per-channel normalization, so inputs and
//! input-gradients live in `[0, 1]` pixel space.

mod adam;
mod checkpoint;

pub use adam::{AdamConfig, AdamState};
pub use checkpoint::{CHECKPOINT_MAGIC, CHECKPOINT_VERSION};

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, LossReduction, Var};
use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::tensor::{conv_out_dim, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Architecture {
    Mlp3,
    Fcnn6,
    Lenet,
}

impl Architecture {
    pub fn name(self) -> &'static str {
        match self {
            Architecture::Mlp3 => "mlp3",
            Architecture::Fcnn6 => "fcnn6",
            Architecture::Lenet => "lenet",
        }
    }

    /// Hidden widths used when a spec does not name any.
    pub fn default_widths(self) -> Vec<usize> {
        match self {
            Architecture::Mlp3 => vec![256, 256],
            Architecture::Fcnn6 => vec![16, 32, 32, 64, 64],
            Architecture::Lenet => vec![6, 16, 120, 84],
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Architecture plus the sizes needed to lay out its parameters.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub arch: Architecture,
    /// `[channels, height, width]`
    pub input_shape: [usize; 3],
    pub classes: usize,
    /// mlp3: two hidden widths; fcnn6: five hidden channel counts;
    /// lenet: two conv channel counts then two dense widths.
    pub widths: Vec<usize>,
}

const FCNN_STRIDES: [usize; 6] = [1, 2, 1, 2, 1, 2];
const LENET_KERNEL: usize = 5;

impl ModelSpec {
    pub fn new(arch: Architecture, input_shape: [usize; 3], classes: usize) -> Self {
        Self {
            arch,
            input_shape,
            classes,
            widths: arch.default_widths(),
        }
    }

    pub fn with_widths(mut self, widths: Vec<usize>) -> Self {
        self.widths = widths;
        self
    }

    pub fn input_len(&self) -> usize {
        self.input_shape.iter().product()
    }

    /// Parameter shapes in storage order, after checking that layer shapes chain.
    pub fn param_shapes(&self) -> Result<Vec<Vec<usize>>> {
        let [c, h, w] = self.input_shape;
        if c == 0 || h == 0 || w == 0 {
            return Err(Error::InvalidSpec(format!("input shape {:?}", self.input_shape)));
        }
        if self.classes < 2 {
            return Err(Error::InvalidSpec(format!(
                "need at least 2 classes, got {}",
                self.classes
            )));
        }
        if let Some(i) = self.widths.iter().position(|&v| v == 0) {
            return Err(Error::InvalidSpec(format!("width {i} is zero")));
        }
        let expect = |n: usize| {
            if self.widths.len() == n {
                Ok(())
            } else {
                Err(Error::InvalidSpec(format!(
                    "{} takes {n} widths, got {}",
                    self.arch,
                    self.widths.len()
                )))
            }
        };
        let mut shapes = Vec::new();
        match self.arch {
            Architecture::Mlp3 => {
                expect(2)?;
                let mut fan_in = self.input_len();
                for &width in self.widths.iter().chain([&self.classes]) {
                    shapes.push(vec![fan_in, width]);
                    shapes.push(vec![width]);
                    fan_in = width;
                }
            }
            Architecture::Fcnn6 => {
                expect(5)?;
                let (mut ch, mut side_h, mut side_w) = (c, h, w);
                for (&out, &stride) in self.widths.iter().chain([&self.classes]).zip(&FCNN_STRIDES) {
                    shapes.push(vec![out, ch, 3, 3]);
                    shapes.push(vec![out]);
                    side_h = conv_out_dim(side_h, 3, stride, 1).ok_or_else(|| {
                        Error::InvalidSpec(format!("fcnn6 does not fit input {:?}", self.input_shape))
                    })?;
                    side_w = conv_out_dim(side_w, 3, stride, 1).ok_or_else(|| {
                        Error::InvalidSpec(format!("fcnn6 does not fit input {:?}", self.input_shape))
                    })?;
                    ch = out;
                }
            }
            Architecture::Lenet => {
                expect(4)?;
                let (c1, c2, f1, f2) = (self.widths[0], self.widths[1], self.widths[2], self.widths[3]);
                // conv1 keeps the size (padding 2), pool halves, conv2 shrinks by 4, pool halves.
                let side = |s: usize| -> Option<usize> {
                    let s = s / 2;
                    let s = conv_out_dim(s, LENET_KERNEL, 1, 0)?;
                    (s / 2 > 0).then_some(s / 2)
                };
                let (Some(sh), Some(sw)) = (side(h), side(w)) else {
                    return Err(Error::InvalidSpec(format!(
                        "lenet does not fit input {:?}",
                        self.input_shape
                    )));
                };
                shapes.push(vec![c1, c, LENET_KERNEL, LENET_KERNEL]);
                shapes.push(vec![c1]);
                shapes.push(vec![c2, c1, LENET_KERNEL, LENET_KERNEL]);
                shapes.push(vec![c2]);
                let mut fan_in = c2 * sh * sw;
                for width in [f1, f2, self.classes] {
                    shapes.push(vec![fan_in, width]);
                    shapes.push(vec![width]);
                    fan_in = width;
                }
            }
        }
        Ok(shapes)
    }

    pub fn param_count(&self) -> Result<usize> {
        Ok(self
            .param_shapes()?
            .iter()
            .map(|s| s.iter().product::<usize>())
            .sum())
    }
}

/// Fixed per-channel input normalization `(x - mean) / std`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalization {
    pub fn identity(channels: usize) -> Self {
        Self {
            mean: vec![0.0; channels],
            std: vec![1.0; channels],
        }
    }
}

/// Gradients from one backward pass through a model, keyed by parameter index.
#[derive(Clone, Debug, Default)]
pub struct GradientBundle {
    pub params: BTreeMap<usize, Tensor>,
    pub input: Option<Tensor>,
}

/// Which gradients a model backward pass should produce.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GradRequest {
    pub params: bool,
    pub input: bool,
}

impl GradRequest {
    pub const PARAMS: Self = Self { params: true, input: false };
    pub const INPUT: Self = Self { params: false, input: true };
    pub const BOTH: Self = Self { params: true, input: true };
}

/// Model parameters with their optimizer state and bookkeeping.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub spec: ModelSpec,
    pub normalization: Normalization,
    pub params: Vec<Tensor>,
    pub adam: AdamState,
    pub epoch: usize,
    pub best_val_accuracy: f64,
}

/// A model forward pass recorded on a graph.
pub struct RecordedModel {
    pub graph: Graph,
    pub input: Var,
    pub params: Vec<Var>,
    pub logits: Var,
}

impl Checkpoint {
    /// Fresh parameters: Kaiming-uniform weights (`U(-sqrt(6/fan_in), +)`) and zero biases.
    pub fn build(spec: ModelSpec, rng: &mut RngStream) -> Result<Self> {
        let shapes = spec.param_shapes()?;
        let params: Vec<Tensor> = shapes
            .iter()
            .map(|shape| {
                if shape.len() == 1 {
                    return Tensor::zeros(shape);
                }
                let fan_in: usize = match shape.len() {
                    2 => shape[0],
                    _ => shape[1..].iter().product(),
                };
                let bound = (6.0 / fan_in as f64).sqrt();
                let mut t = Tensor::zeros(shape);
                t.data_mut()
                    .iter_mut()
                    .for_each(|v| *v = rng.uniform_in(-bound, bound));
                t
            })
            .collect();
        let adam = AdamState::new(AdamConfig::default(), &params);
        let channels = spec.input_shape[0];
        Ok(Self {
            spec,
            normalization: Normalization::identity(channels),
            params,
            adam,
            epoch: 0,
            best_val_accuracy: 0.0,
        })
    }

    pub fn with_normalization(mut self, normalization: Normalization) -> Result<Self> {
        let channels = self.spec.input_shape[0];
        if normalization.mean.len() != channels || normalization.std.len() != channels {
            return Err(Error::InvalidSpec(format!(
                "normalization for {} channels, model has {channels}",
                normalization.mean.len()
            )));
        }
        if normalization.std.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::InvalidSpec("normalization std must be positive".into()));
        }
        self.normalization = normalization;
        Ok(self)
    }

    fn check_batch(&self, x: &Tensor) -> Result<usize> {
        let expected = &self.spec.input_shape;
        match x.shape() {
            [n, rest @ ..] if rest == expected => Ok(*n),
            other => Err(Error::shape("model input", other, &[&[0], &expected[..]].concat())),
        }
    }

    /// Record the forward pass for a batch `[n, c, h, w]` on a new graph.
    /// The input leaf is left unbound.
    pub fn record(&self, batch: usize) -> RecordedModel {
        let mut g = Graph::new();
        let input = g.leaf();
        let params: Vec<Var> = self.params.iter().map(|p| g.constant(p.clone())).collect();
        let scale: Vec<f64> = self.normalization.std.iter().map(|s| 1.0 / s).collect();
        let shift: Vec<f64> = self
            .normalization
            .mean
            .iter()
            .zip(&self.normalization.std)
            .map(|(m, s)| -m / s)
            .collect();
        let mut h = g.channel_affine(input, scale, shift);
        let logits = match self.spec.arch {
            Architecture::Mlp3 => {
                h = g.reshape(h, &[batch, self.spec.input_len()]);
                let layers = params.len() / 2;
                for layer in 0..layers {
                    h = g.dense(h, params[2 * layer], params[2 * layer + 1]);
                    if layer + 1 < layers {
                        h = g.relu(h);
                    }
                }
                h
            }
            Architecture::Fcnn6 => {
                for (layer, &stride) in FCNN_STRIDES.iter().enumerate() {
                    h = g.conv2d(h, params[2 * layer], Some(params[2 * layer + 1]), stride, 1);
                    if layer + 1 < FCNN_STRIDES.len() {
                        h = g.relu(h);
                    }
                }
                g.global_avg_pool(h)
            }
            Architecture::Lenet => {
                h = g.conv2d(h, params[0], Some(params[1]), 1, LENET_KERNEL / 2);
                h = g.relu(h);
                h = g.avg_pool2(h);
                h = g.conv2d(h, params[2], Some(params[3]), 1, 0);
                h = g.relu(h);
                h = g.avg_pool2(h);
                let flat = self.params[4].shape()[0];
                h = g.reshape(h, &[batch, flat]);
                for layer in 0..3 {
                    h = g.dense(h, params[4 + 2 * layer], params[5 + 2 * layer]);
                    if layer < 2 {
                        h = g.relu(h);
                    }
                }
                h
            }
        };
        RecordedModel {
            graph: g,
            input,
            params,
            logits,
        }
    }

    /// Logits `[n, k]` for a batch `[n, c, h, w]`.
    pub fn predict_batch(&self, x: &Tensor) -> Result<Tensor> {
        let n = self.check_batch(x)?;
        let mut rec = self.record(n);
        rec.graph.bind(rec.input, x.clone())?;
        rec.graph.forward()?;
        Ok(rec.graph.value(rec.logits)?.clone())
    }

    /// Logits `[k]` for one input `[c, h, w]`.
    pub fn predict(&self, x: &Tensor) -> Result<Tensor> {
        if x.shape() != self.spec.input_shape {
            return Err(Error::shape("predict", x.shape(), &self.spec.input_shape));
        }
        let batched = x.clone().reshape(&[&[1], x.shape()].concat())?;
        let logits = self.predict_batch(&batched)?;
        logits.reshape(&[self.spec.classes])
    }

    /// Cross-entropy on a batch and the requested gradients.
    pub fn loss_and_gradients(
        &self,
        x: &Tensor,
        labels: &[usize],
        reduction: LossReduction,
        request: GradRequest,
    ) -> Result<(f64, GradientBundle)> {
        let mut objective = BatchObjective::new(self, labels, reduction)?;
        objective.evaluate(x, request)
    }

    pub fn adam_step(&mut self, grads: &GradientBundle) -> Result<()> {
        let ordered = (0..self.params.len())
            .map(|i| grads.params.get(&i).ok_or(Error::MissingGradient(i)))
            .collect::<Result<Vec<_>>>()?;
        self.adam.step(&mut self.params, &ordered)
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(Tensor::is_finite)
    }
}

/// Cross-entropy of a fixed model and label batch as a function of the input,
/// recorded once and re-evaluated for every new input.
pub struct BatchObjective {
    rec: RecordedModel,
    loss: Var,
    batch: usize,
    input_shape: Vec<usize>,
}

impl BatchObjective {
    pub fn new(model: &Checkpoint, labels: &[usize], reduction: LossReduction) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::EmptyTensor { op: "batch objective" });
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= model.spec.classes) {
            return Err(Error::LabelOutOfRange {
                label,
                classes: model.spec.classes,
            });
        }
        let batch = labels.len();
        let mut rec = model.record(batch);
        let loss = rec.graph.softmax_cross_entropy(rec.logits, labels, reduction);
        let input_shape = [&[batch], &model.spec.input_shape[..]].concat();
        Ok(Self {
            rec,
            loss,
            batch,
            input_shape,
        })
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn evaluate(&mut self, x: &Tensor, request: GradRequest) -> Result<(f64, GradientBundle)> {
        if x.shape() != self.input_shape {
            return Err(Error::shape("model input", x.shape(), &self.input_shape));
        }
        self.rec.graph.bind(self.rec.input, x.clone())?;
        let loss = self.rec.graph.forward_scalar(self.loss)?;
        let mut bundle = GradientBundle::default();
        if !(request.params || request.input) {
            return Ok((loss, bundle));
        }
        let mut wrt = Vec::new();
        if request.params {
            wrt.extend_from_slice(&self.rec.params);
        }
        if request.input {
            wrt.push(self.rec.input);
        }
        let mut grads = self.rec.graph.backward(self.loss, &wrt)?;
        if request.params {
            for (i, &p) in self.rec.params.iter().enumerate() {
                let g = grads.take(p).ok_or(Error::MissingGradient(i))?;
                bundle.params.insert(i, g);
            }
        }
        if request.input {
            bundle.input = grads.take(self.rec.input);
        }
        Ok((loss, bundle))
    }

    pub fn loss(&mut self, x: &Tensor) -> Result<f64> {
        self.evaluate(x, GradRequest { params: false, input: false })
            .map(|(l, _)| l)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mlp_parameter_count_matches_closed_form() {
        let spec = ModelSpec::new(Architecture::Mlp3, [1, 28, 28], 10);
        let expected = 784 * 256 + 256 + 256 * 256 + 256 + 256 * 10 + 10;
        assert_eq!(spec.param_count().unwrap(), expected);
    }

    #[test]
    fn conv_parameter_counts() {
        let fcnn = ModelSpec::new(Architecture::Fcnn6, [1, 28, 28], 10);
        let w = [1, 16, 32, 32, 64, 64, 10];
        let expected: usize = w.windows(2).map(|p| p[1] * p[0] * 9 + p[1]).sum();
        assert_eq!(fcnn.param_count().unwrap(), expected);

        let lenet = ModelSpec::new(Architecture::Lenet, [1, 28, 28], 10);
        let expected = 6 * 25 + 6 + 16 * 6 * 25 + 16 + 400 * 120 + 120 + 120 * 84 + 84 + 84 * 10 + 10;
        assert_eq!(lenet.param_count().unwrap(), expected);
    }

    #[test]
    fn degenerate_specs_rejected() {
        let bad = ModelSpec::new(Architecture::Mlp3, [1, 28, 28], 10).with_widths(vec![0, 256]);
        assert!(matches!(
            Checkpoint::build(bad, &mut RngStream::new(0)),
            Err(Error::InvalidSpec(_))
        ));
        let wrong_len = ModelSpec::new(Architecture::Fcnn6, [1, 28, 28], 10).with_widths(vec![4]);
        assert!(wrong_len.param_shapes().is_err());
        assert!(ModelSpec::new(Architecture::Lenet, [1, 6, 6], 10).param_shapes().is_err());
        assert!(ModelSpec::new(Architecture::Mlp3, [1, 4, 4], 1).param_shapes().is_err());
    }

    #[test]
    fn build_is_deterministic() {
        for arch in [Architecture::Mlp3, Architecture::Fcnn6, Architecture::Lenet] {
            let spec = ModelSpec::new(arch, [1, 28, 28], 10);
            let a = Checkpoint::build(spec.clone(), &mut RngStream::new(4)).unwrap();
            let b = Checkpoint::build(spec, &mut RngStream::new(4)).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn predict_shapes_and_determinism() {
        let mut rng = RngStream::new(1);
        for arch in [Architecture::Mlp3, Architecture::Fcnn6, Architecture::Lenet] {
            let spec = ModelSpec::new(arch, [1, 28, 28], 10).with_widths(match arch {
                Architecture::Mlp3 => vec![8, 8],
                Architecture::Fcnn6 => vec![4, 4, 4, 4, 4],
                Architecture::Lenet => vec![2, 3, 8, 8],
            });
            let model = Checkpoint::build(spec, &mut rng).unwrap();
            let x = Tensor::full(&[1, 28, 28], 0.3);
            let a = model.predict(&x).unwrap();
            assert_eq!(a.shape(), &[10]);
            assert!(a.is_finite());
            assert_eq!(a, model.predict(&x).unwrap());
            assert!(model.predict(&Tensor::zeros(&[1, 27, 28])).is_err());
        }
    }

    #[test]
    fn missing_gradient_is_an_error() {
        let spec = ModelSpec::new(Architecture::Mlp3, [1, 2, 2], 2).with_widths(vec![3, 3]);
        let mut model = Checkpoint::build(spec, &mut RngStream::new(0)).unwrap();
        let (_, mut grads) = model
            .loss_and_gradients(&Tensor::ones(&[1, 1, 2, 2]), &[1], LossReduction::Mean, GradRequest::PARAMS)
            .unwrap();
        grads.params.remove(&3);
        assert!(matches!(model.adam_step(&grads), Err(Error::MissingGradient(3))));
    }
}
