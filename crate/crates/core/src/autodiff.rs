//! Reverse-mode automatic differentiation.
//!
//! A [`Graph`] is recorded once (leaves plus operations, appended in
//! topological order), then evaluated with [`Graph::forward`] after every leaf
//! has been bound. [`Graph::backward`] returns gradients of a scalar node with
//! respect to any set of leaves. Model inputs are plain leaves, so an
//! input-gradient is requested exactly like a parameter gradient.
//!
//! Leaves can be rebound and the graph re-evaluated, which is how iterative
//! attacks reuse one recorded graph.

use std::cell::Cell;
use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::tensor::{conv2d_backward_batch, conv2d_batch, gemm, Tensor, Transpose};

thread_local! {
    static BACKWARD_PASSES: Cell<u64> = const { Cell::new(0) };
}

/// Number of completed backward passes on the current thread.
pub fn backward_passes() -> u64 {
    BACKWARD_PASSES.with(Cell::get)
}

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// How per-example losses are combined into the scalar loss.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossReduction {
    Mean,
    Sum,
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    MatMul(Var, Var),
    AddBias(Var, Var),
    Conv2d {
        input: Var,
        kernel: Var,
        bias: Option<Var>,
        stride: usize,
        padding: usize,
    },
    Relu(Var),
    Reshape(Var, Vec<usize>),
    AvgPool2(Var),
    GlobalAvgPool(Var),
    ChannelAffine {
        input: Var,
        scale: Vec<f64>,
        shift: Vec<f64>,
    },
    Sum(Var),
    Mean(Var),
    SoftmaxCrossEntropy {
        logits: Var,
        labels: Vec<usize>,
        reduction: LossReduction,
    },
}

impl Op {
    fn inputs(&self) -> Vec<Var> {
        match self {
            Op::Leaf => vec![],
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::MatMul(a, b) | Op::AddBias(a, b) => {
                vec![*a, *b]
            }
            Op::Conv2d {
                input, kernel, bias, ..
            } => {
                let mut v = vec![*input, *kernel];
                v.extend(bias);
                v
            }
            Op::Scale(a, _)
            | Op::Relu(a)
            | Op::Reshape(a, _)
            | Op::AvgPool2(a)
            | Op::GlobalAvgPool(a)
            | Op::Sum(a)
            | Op::Mean(a) => vec![*a],
            Op::ChannelAffine { input, .. } => vec![*input],
            Op::SoftmaxCrossEntropy { logits, .. } => vec![*logits],
        }
    }
}

/// Gradients of one backward pass, keyed by the requested leaves.
#[derive(Clone, Debug, Default)]
pub struct Gradients {
    entries: HashMap<Var, Tensor>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.entries.get(&var)
    }

    pub fn take(&mut self, var: Var) -> Option<Tensor> {
        self.entries.remove(&var)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Default)]
pub struct Graph {
    ops: Vec<Op>,
    values: Vec<Option<Tensor>>,
    /// Per-node data saved by forward for backward (softmax probabilities).
    saved: Vec<Option<Tensor>>,
    evaluated: bool,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, op: Op) -> Var {
        self.ops.push(op);
        self.values.push(None);
        self.saved.push(None);
        self.evaluated = false;
        Var(self.ops.len() - 1)
    }

    /// A leaf whose value is supplied later with [`bind`](Self::bind).
    pub fn leaf(&mut self) -> Var {
        self.push(Op::Leaf)
    }

    /// A leaf bound immediately.
    pub fn constant(&mut self, value: Tensor) -> Var {
        let v = self.leaf();
        self.values[v.0] = Some(value);
        v
    }

    pub fn bind(&mut self, leaf: Var, value: Tensor) -> Result<()> {
        match self.ops.get(leaf.0) {
            Some(Op::Leaf) => {
                self.values[leaf.0] = Some(value);
                self.evaluated = false;
                Ok(())
            }
            _ => Err(Error::InvalidArgument(format!(
                "node {} is not a leaf",
                leaf.0
            ))),
        }
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.push(Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.push(Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.push(Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        self.push(Op::Scale(a, factor))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        self.push(Op::MatMul(a, b))
    }

    /// `[n, m] + [m]`, broadcasting the bias over rows.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Var {
        self.push(Op::AddBias(x, bias))
    }

    /// `x [n, m] * w [m, k] + b [k]`.
    pub fn dense(&mut self, x: Var, weight: Var, bias: Var) -> Var {
        let y = self.matmul(x, weight);
        self.add_bias(y, bias)
    }

    pub fn conv2d(
        &mut self,
        input: Var,
        kernel: Var,
        bias: Option<Var>,
        stride: usize,
        padding: usize,
    ) -> Var {
        self.push(Op::Conv2d {
            input,
            kernel,
            bias,
            stride,
            padding,
        })
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.push(Op::Relu(a))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Var {
        self.push(Op::Reshape(a, shape.to_vec()))
    }

    /// 2x2 average pooling with stride 2 on `[n, c, h, w]`; odd edges are dropped.
    pub fn avg_pool2(&mut self, a: Var) -> Var {
        self.push(Op::AvgPool2(a))
    }

    /// `[n, c, h, w] -> [n, c]`.
    pub fn global_avg_pool(&mut self, a: Var) -> Var {
        self.push(Op::GlobalAvgPool(a))
    }

    /// Per-channel `x * scale[c] + shift[c]` on `[n, c, ...]` with constant coefficients.
    pub fn channel_affine(&mut self, input: Var, scale: Vec<f64>, shift: Vec<f64>) -> Var {
        self.push(Op::ChannelAffine {
            input,
            scale,
            shift,
        })
    }

    pub fn sum(&mut self, a: Var) -> Var {
        self.push(Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        self.push(Op::Mean(a))
    }

    /// Cross-entropy of `softmax(logits)` against integer labels. `logits` is
    /// `[n, k]` (or `[k]` for a single example) and `labels.len() == n`.
    pub fn softmax_cross_entropy(
        &mut self,
        logits: Var,
        labels: &[usize],
        reduction: LossReduction,
    ) -> Var {
        self.push(Op::SoftmaxCrossEntropy {
            logits,
            labels: labels.to_vec(),
            reduction,
        })
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    /// Forward value of a node. Fails before [`forward`](Self::forward) has run.
    pub fn value(&self, v: Var) -> Result<&Tensor> {
        if !self.evaluated {
            return Err(Error::BackwardBeforeForward);
        }
        self.values
            .get(v.0)
            .and_then(Option::as_ref)
            .ok_or(Error::UnboundLeaf(v.0))
    }

    /// Evaluate every node. All leaves must be bound.
    pub fn forward(&mut self) -> Result<()> {
        for i in 0..self.ops.len() {
            if matches!(self.ops[i], Op::Leaf) {
                if self.values[i].is_none() {
                    return Err(Error::UnboundLeaf(i));
                }
                continue;
            }
            let (value, saved) = self.eval(i)?;
            if !value.is_finite() {
                return Err(Error::Numerical(format!(
                    "non-finite value produced by node {i} ({:?})",
                    std::mem::discriminant(&self.ops[i])
                )));
            }
            self.values[i] = Some(value);
            self.saved[i] = saved;
        }
        self.evaluated = true;
        Ok(())
    }

    /// Forward pass returning the value of a scalar `loss` node.
    pub fn forward_scalar(&mut self, loss: Var) -> Result<f64> {
        self.forward()?;
        let t = self.value(loss)?;
        if t.len() != 1 {
            return Err(Error::NonScalarLoss(t.shape().to_vec()));
        }
        Ok(t.data()[0])
    }

    fn val(&self, v: Var) -> &Tensor {
        self.values[v.0]
            .as_ref()
            .expect("inputs are evaluated before their consumers")
    }

    fn eval(&self, i: usize) -> Result<(Tensor, Option<Tensor>)> {
        let out = match &self.ops[i] {
            Op::Leaf => unreachable!("leaves are bound, not evaluated"),
            Op::Add(a, b) => self.val(*a).add(self.val(*b))?,
            Op::Sub(a, b) => self.val(*a).sub(self.val(*b))?,
            Op::Mul(a, b) => self.val(*a).mul(self.val(*b))?,
            Op::Scale(a, s) => self.val(*a).scale(*s),
            Op::MatMul(a, b) => crate::tensor::matmul(self.val(*a), self.val(*b))?,
            Op::AddBias(x, b) => {
                let (x, b) = (self.val(*x), self.val(*b));
                let m = bias_width(x, b)?;
                let mut out = x.clone();
                for row in out.data_mut().chunks_exact_mut(m) {
                    row.iter_mut().zip(b.data()).for_each(|(v, bv)| *v += bv);
                }
                out
            }
            Op::Conv2d {
                input,
                kernel,
                bias,
                stride,
                padding,
            } => conv2d_batch(
                self.val(*input),
                self.val(*kernel),
                bias.map(|b| self.val(b)),
                *stride,
                *padding,
            )?,
            Op::Relu(a) => self.val(*a).map(|v| if v > 0.0 { v } else { 0.0 }),
            Op::Reshape(a, shape) => self.val(*a).clone().reshape(shape)?,
            Op::AvgPool2(a) => avg_pool2(self.val(*a))?,
            Op::GlobalAvgPool(a) => {
                let x = self.val(*a);
                let &[n, c, h, w] = x.shape() else {
                    return Err(Error::shape("global_avg_pool", x.shape(), &[0, 0, 0, 0]));
                };
                let area = (h * w) as f64;
                let data = x
                    .data()
                    .chunks_exact(h * w)
                    .map(|plane| plane.iter().sum::<f64>() / area)
                    .collect();
                Tensor::new(vec![n, c], data)?
            }
            Op::ChannelAffine {
                input,
                scale,
                shift,
            } => {
                let x = self.val(*input);
                let plane = channel_plane(x, scale.len())?;
                let mut out = x.clone();
                for (j, chunk) in out.data_mut().chunks_exact_mut(plane).enumerate() {
                    let c = j % scale.len();
                    chunk.iter_mut().for_each(|v| *v = *v * scale[c] + shift[c]);
                }
                out
            }
            Op::Sum(a) => Tensor::scalar(self.val(*a).sum()),
            Op::Mean(a) => Tensor::scalar(self.val(*a).mean()?),
            Op::SoftmaxCrossEntropy {
                logits,
                labels,
                reduction,
            } => {
                let (loss, probs) = softmax_cross_entropy(self.val(*logits), labels, *reduction)?;
                return Ok((Tensor::scalar(loss), Some(probs)));
            }
        };
        Ok((out, None))
    }

    /// Gradients of the scalar node `loss` with respect to each leaf in `wrt`.
    pub fn backward(&self, loss: Var, wrt: &[Var]) -> Result<Gradients> {
        if !self.evaluated {
            return Err(Error::BackwardBeforeForward);
        }
        let loss_value = self.value(loss)?;
        if loss_value.len() != 1 {
            return Err(Error::NonScalarLoss(loss_value.shape().to_vec()));
        }
        for &w in wrt {
            if !matches!(self.ops.get(w.0), Some(Op::Leaf)) {
                return Err(Error::InvalidArgument(format!("node {} is not a leaf", w.0)));
            }
        }

        // needs[i]: some requested leaf is upstream of node i.
        let mut needs = vec![false; loss.0 + 1];
        for &w in wrt {
            if w.0 <= loss.0 {
                needs[w.0] = true;
            }
        }
        for i in 0..=loss.0 {
            if !needs[i] {
                needs[i] = self.ops[i].inputs().iter().any(|v| needs[v.0]);
            }
        }

        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::full(loss_value.shape(), 1.0));
        for i in (0..=loss.0).rev() {
            if !needs[i] || matches!(self.ops[i], Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &needs, &mut grads)?;
        }

        BACKWARD_PASSES.with(|c| c.set(c.get() + 1));
        let mut entries = HashMap::with_capacity(wrt.len());
        for &w in wrt {
            let g = match grads.get_mut(w.0).and_then(Option::take) {
                Some(g) => g,
                None => Tensor::zeros(self.val(w).shape()),
            };
            entries.insert(w, g);
        }
        Ok(Gradients { entries })
    }

    fn propagate(
        &self,
        i: usize,
        g: &Tensor,
        needs: &[bool],
        grads: &mut [Option<Tensor>],
    ) -> Result<()> {
        let wants = |v: &Var| needs[v.0];
        match &self.ops[i] {
            Op::Leaf => {}
            Op::Add(a, b) => {
                if wants(a) {
                    accumulate(grads, *a, g.clone())?;
                }
                if wants(b) {
                    accumulate(grads, *b, g.clone())?;
                }
            }
            Op::Sub(a, b) => {
                if wants(a) {
                    accumulate(grads, *a, g.clone())?;
                }
                if wants(b) {
                    accumulate(grads, *b, g.scale(-1.0))?;
                }
            }
            Op::Mul(a, b) => {
                if wants(a) {
                    accumulate(grads, *a, g.mul(self.val(*b))?)?;
                }
                if wants(b) {
                    accumulate(grads, *b, g.mul(self.val(*a))?)?;
                }
            }
            Op::Scale(a, s) => accumulate(grads, *a, g.scale(*s))?,
            Op::MatMul(a, b) => {
                let (av, bv) = (self.val(*a), self.val(*b));
                let (m, k, n) = (av.shape()[0], av.shape()[1], bv.shape()[1]);
                if wants(a) {
                    let mut da = vec![0.0; m * k];
                    gemm(m, n, k, g.data(), Transpose::No, bv.data(), Transpose::Yes, &mut da, false);
                    accumulate(grads, *a, Tensor::new(vec![m, k], da)?)?;
                }
                if wants(b) {
                    let mut db = vec![0.0; k * n];
                    gemm(k, m, n, av.data(), Transpose::Yes, g.data(), Transpose::No, &mut db, false);
                    accumulate(grads, *b, Tensor::new(vec![k, n], db)?)?;
                }
            }
            Op::AddBias(x, b) => {
                if wants(x) {
                    accumulate(grads, *x, g.clone())?;
                }
                if wants(b) {
                    let m = self.val(*b).len();
                    let mut db = vec![0.0; m];
                    for row in g.data().chunks_exact(m) {
                        db.iter_mut().zip(row).for_each(|(acc, v)| *acc += v);
                    }
                    accumulate(grads, *b, Tensor::new(vec![m], db)?)?;
                }
            }
            Op::Conv2d {
                input,
                kernel,
                bias,
                stride,
                padding,
            } => {
                let (dx, dk, db) = conv2d_backward_batch(
                    self.val(*input),
                    self.val(*kernel),
                    g,
                    *stride,
                    *padding,
                    wants(input),
                )?;
                if let Some(dx) = dx {
                    accumulate(grads, *input, dx)?;
                }
                if wants(kernel) {
                    accumulate(grads, *kernel, dk)?;
                }
                if let Some(b) = bias.filter(|b| wants(b)) {
                    accumulate(grads, b, db)?;
                }
            }
            Op::Relu(a) => {
                // Subgradient 0 at the kink.
                let dx = self.val(*a).zip_with(g, "relu", |x, gv| if x > 0.0 { gv } else { 0.0 })?;
                accumulate(grads, *a, dx)?;
            }
            Op::Reshape(a, _) => {
                let shape = self.val(*a).shape().to_vec();
                accumulate(grads, *a, g.clone().reshape(&shape)?)?;
            }
            Op::AvgPool2(a) => {
                let x = self.val(*a);
                let &[_, _, h, w] = x.shape() else { unreachable!() };
                let (oh, ow) = (h / 2, w / 2);
                let mut dx = vec![0.0; x.len()];
                for (dplane, gplane) in dx
                    .chunks_exact_mut(h * w)
                    .zip(g.data().chunks_exact(oh * ow))
                {
                    for oi in 0..oh {
                        for oj in 0..ow {
                            let q = gplane[oi * ow + oj] * 0.25;
                            for (di, dj) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                                dplane[(2 * oi + di) * w + 2 * oj + dj] += q;
                            }
                        }
                    }
                }
                accumulate(grads, *a, Tensor::new(x.shape().to_vec(), dx)?)?;
            }
            Op::GlobalAvgPool(a) => {
                let x = self.val(*a);
                let &[_, _, h, w] = x.shape() else { unreachable!() };
                let area = (h * w) as f64;
                let mut dx = Vec::with_capacity(x.len());
                for &gv in g.data() {
                    dx.extend(std::iter::repeat_n(gv / area, h * w));
                }
                accumulate(grads, *a, Tensor::new(x.shape().to_vec(), dx)?)?;
            }
            Op::ChannelAffine { input, scale, .. } => {
                let x = self.val(*input);
                let plane = channel_plane(x, scale.len())?;
                let mut dx = g.clone();
                for (j, chunk) in dx.data_mut().chunks_exact_mut(plane).enumerate() {
                    let s = scale[j % scale.len()];
                    chunk.iter_mut().for_each(|v| *v *= s);
                }
                accumulate(grads, *input, dx)?;
            }
            Op::Sum(a) => {
                let gv = g.data()[0];
                accumulate(grads, *a, Tensor::full(self.val(*a).shape(), gv))?;
            }
            Op::Mean(a) => {
                let x = self.val(*a);
                let gv = g.data()[0] / x.len() as f64;
                accumulate(grads, *a, Tensor::full(x.shape(), gv))?;
            }
            Op::SoftmaxCrossEntropy {
                logits,
                labels,
                reduction,
            } => {
                let probs = self.saved[i]
                    .as_ref()
                    .expect("softmax probabilities saved by forward");
                let k = probs.len() / labels.len();
                let factor = match reduction {
                    LossReduction::Mean => g.data()[0] / labels.len() as f64,
                    LossReduction::Sum => g.data()[0],
                };
                let mut d = probs.clone();
                for (row, &label) in d.data_mut().chunks_exact_mut(k).zip(labels) {
                    row[label] -= 1.0;
                    row.iter_mut().for_each(|v| *v *= factor);
                }
                let shape = self.val(*logits).shape().to_vec();
                accumulate(grads, *logits, d.reshape(&shape)?)?;
            }
        }
        Ok(())
    }
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, g: Tensor) -> Result<()> {
    match &mut grads[v.0] {
        Some(existing) => {
            if existing.shape() != g.shape() {
                return Err(Error::shape("gradient accumulation", existing.shape(), g.shape()));
            }
            existing
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .for_each(|(a, b)| *a += b);
        }
        slot @ None => *slot = Some(g),
    }
    Ok(())
}

fn bias_width(x: &Tensor, b: &Tensor) -> Result<usize> {
    match (x.shape(), b.shape()) {
        (&[_, m], &[mb]) if m == mb => Ok(m),
        _ => Err(Error::shape("add_bias", x.shape(), b.shape())),
    }
}

/// Elements per channel plane for a `[n, c, ...]` tensor with `channels` channels.
fn channel_plane(x: &Tensor, channels: usize) -> Result<usize> {
    if x.rank() < 2 || x.shape()[1] != channels {
        return Err(Error::shape("channel_affine", x.shape(), &[0, channels]));
    }
    Ok(x.shape()[2..].iter().product())
}

fn avg_pool2(x: &Tensor) -> Result<Tensor> {
    let &[n, c, h, w] = x.shape() else {
        return Err(Error::shape("avg_pool2", x.shape(), &[0, 0, 0, 0]));
    };
    let (oh, ow) = (h / 2, w / 2);
    if oh == 0 || ow == 0 {
        return Err(Error::InvalidArgument(format!(
            "avg_pool2 needs at least 2x2 planes, got {h}x{w}"
        )));
    }
    let mut out = Vec::with_capacity(n * c * oh * ow);
    for plane in x.data().chunks_exact(h * w) {
        for oi in 0..oh {
            for oj in 0..ow {
                let at = |di: usize, dj: usize| plane[(2 * oi + di) * w + 2 * oj + dj];
                out.push(0.25 * (at(0, 0) + at(0, 1) + at(1, 0) + at(1, 1)));
            }
        }
    }
    Tensor::new(vec![n, c, oh, ow], out)
}

/// Per-row max-shifted log-softmax cross-entropy. Returns the reduced loss and
/// the softmax probabilities.
pub fn softmax_cross_entropy(
    logits: &Tensor,
    labels: &[usize],
    reduction: LossReduction,
) -> Result<(f64, Tensor)> {
    let (n, k) = match logits.shape() {
        &[k] => (1, k),
        &[n, k] => (n, k),
        other => return Err(Error::shape("softmax_cross_entropy", other, &[0, 0])),
    };
    if k < 2 {
        return Err(Error::InvalidArgument(format!(
            "cross-entropy needs at least 2 classes, got {k}"
        )));
    }
    if labels.len() != n {
        return Err(Error::shape("softmax_cross_entropy labels", &[labels.len()], &[n]));
    }
    let mut probs = Vec::with_capacity(n * k);
    let mut total = 0.0;
    for (row, &label) in logits.data().chunks_exact(k).zip(labels) {
        if label >= k {
            return Err(Error::LabelOutOfRange { label, classes: k });
        }
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let denom: f64 = row.iter().map(|z| (z - max).exp()).sum();
        let log_denom = denom.ln();
        total += log_denom - (row[label] - max);
        probs.extend(row.iter().map(|z| (z - max).exp() / denom));
    }
    let loss = match reduction {
        LossReduction::Mean => total / n as f64,
        LossReduction::Sum => total,
    };
    Ok((loss, Tensor::new(logits.shape().to_vec(), probs)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_and_square_examples() {
        let mut g = Graph::new();
        let x = g.leaf();
        let s = g.sum(x);
        g.bind(x, Tensor::from_vec(vec![1., 2., 3.])).unwrap();
        assert_eq!(g.forward_scalar(s).unwrap(), 6.0);
        let grads = g.backward(s, &[x]).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[1., 1., 1.]);

        let mut g = Graph::new();
        let x = g.leaf();
        let sq = g.mul(x, x);
        let s = g.sum(sq);
        g.bind(x, Tensor::from_vec(vec![1., 2.])).unwrap();
        assert_eq!(g.forward_scalar(s).unwrap(), 5.0);
        assert_eq!(g.backward(s, &[x]).unwrap().get(x).unwrap().data(), &[2., 4.]);
    }

    #[test]
    fn unbound_leaf_and_premature_backward() {
        let mut g = Graph::new();
        let x = g.leaf();
        let s = g.sum(x);
        assert!(matches!(g.backward(s, &[x]), Err(Error::BackwardBeforeForward)));
        assert!(matches!(g.forward(), Err(Error::UnboundLeaf(0))));
        g.bind(x, Tensor::from_vec(vec![1.0])).unwrap();
        assert!(g.bind(s, Tensor::scalar(0.0)).is_err());
        g.forward().unwrap();
        let sq = g.mul(x, x);
        // Recording a new node invalidates the evaluation.
        assert!(matches!(g.backward(sq, &[x]), Err(Error::BackwardBeforeForward)));
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::from_vec(vec![1., 2.]));
        let y = g.scale(x, 2.0);
        g.forward().unwrap();
        assert!(matches!(g.backward(y, &[x]), Err(Error::NonScalarLoss(_))));
    }

    #[test]
    fn cross_entropy_examples() {
        let (loss, _) =
            softmax_cross_entropy(&Tensor::zeros(&[10]), &[3], LossReduction::Mean).unwrap();
        assert!((loss - 10f64.ln()).abs() < 1e-15);
        let (loss, _) = softmax_cross_entropy(
            &Tensor::from_vec(vec![1000.0, 0.0]),
            &[0],
            LossReduction::Mean,
        )
        .unwrap();
        assert!(loss.is_finite() && loss.abs() < 1e-300);
        assert!(matches!(
            softmax_cross_entropy(&Tensor::zeros(&[3]), &[3], LossReduction::Mean),
            Err(Error::LabelOutOfRange { label: 3, classes: 3 })
        ));
        assert!(softmax_cross_entropy(&Tensor::zeros(&[1]), &[0], LossReduction::Mean).is_err());
    }

    #[test]
    fn cross_entropy_gradient_is_softmax_minus_onehot() {
        let mut g = Graph::new();
        let z = g.leaf();
        let l = g.softmax_cross_entropy(z, &[0], LossReduction::Mean);
        g.bind(z, Tensor::from_vec(vec![1., 2., 3.])).unwrap();
        g.forward().unwrap();
        let grad = g.backward(l, &[z]).unwrap().take(z).unwrap();
        let e: Vec<f64> = [1f64, 2., 3.].iter().map(|v| v.exp()).collect();
        let s: f64 = e.iter().sum();
        let expected = [e[0] / s - 1.0, e[1] / s, e[2] / s];
        for (a, b) in grad.data().iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn unrequested_paths_are_skipped_and_counted_once() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::from_vec(vec![1., 2.]));
        let b = g.constant(Tensor::from_vec(vec![3., 4.]));
        let p = g.mul(a, b);
        let s = g.sum(p);
        g.forward().unwrap();
        let before = backward_passes();
        let grads = g.backward(s, &[b]).unwrap();
        assert_eq!(backward_passes(), before + 1);
        assert_eq!(grads.len(), 1);
        assert_eq!(grads.get(b).unwrap().data(), &[1., 2.]);
        assert!(grads.get(a).is_none());
    }

    #[test]
    fn pooling_shapes() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::new(vec![1, 1, 4, 4], (0..16).map(f64::from).collect()).unwrap());
        let p = g.avg_pool2(x);
        let gp = g.global_avg_pool(x);
        g.forward().unwrap();
        assert_eq!(g.value(p).unwrap().data(), &[2.5, 4.5, 10.5, 12.5]);
        assert_eq!(g.value(gp).unwrap().data(), &[7.5]);
    }
}
