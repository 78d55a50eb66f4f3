//! Dense row-major tensors of `f64`.
//!
//! Broadcasting is limited to tensor-with-scalar; everything else requires
//! equal shapes and reports a [`Error::ShapeMismatch`] naming both sides.

mod conv;
mod linalg;

pub use conv::{conv2d, conv2d_backward_batch, conv2d_batch, conv_out_dim, ConvGeometry};
pub use linalg::{gemm, matmul, Transpose};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

/// Reductions supported by [`Tensor::reduce`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Reduction {
    Sum,
    Mean,
    Max,
    /// Index of the maximum within the reduced block; ties go to the lowest index.
    ArgMax,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::InvalidArgument(format!(
                "shape {shape:?} has a zero extent"
            )));
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::InvalidArgument(format!(
                "shape {shape:?} needs {expected} elements, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn from_vec(data: Vec<f64>) -> Self {
        let n = data.len();
        Self {
            shape: vec![n],
            data,
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            shape: Vec::new(),
            data: vec![value],
        }
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self::full(shape, 1.0)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    /// Value of a rank-0 or single-element tensor.
    pub fn item(&self) -> Result<f64> {
        match self.data.as_slice() {
            [v] => Ok(*v),
            _ => Err(Error::InvalidArgument(format!(
                "item() on tensor of shape {:?}",
                self.shape
            ))),
        }
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.data.len() || shape.iter().any(|&d| d == 0) {
            return Err(Error::shape("reshape", &self.shape, shape));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_with(
        &self,
        other: &Tensor,
        op: &'static str,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Self> {
        if self.shape != other.shape {
            return Err(Error::shape(op, &self.shape, &other.shape));
        }
        Ok(Self {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &Tensor) -> Result<Self> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Self> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    pub fn mul(&self, other: &Tensor) -> Result<Self> {
        self.zip_with(other, "mul", |a, b| a * b)
    }

    pub fn div(&self, other: &Tensor) -> Result<Self> {
        if self.shape != other.shape {
            return Err(Error::shape("div", &self.shape, &other.shape));
        }
        if let Some(index) = other.data.iter().position(|&v| v == 0.0) {
            return Err(Error::DivisionByZero { index });
        }
        self.zip_with(other, "div", |a, b| a / b)
    }

    pub fn add_scalar(&self, s: f64) -> Self {
        self.map(|v| v + s)
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|v| v * s)
    }

    pub fn div_scalar(&self, s: f64) -> Result<Self> {
        if s == 0.0 {
            return Err(Error::DivisionByZero { index: 0 });
        }
        Ok(self.map(|v| v / s))
    }

    /// Mathematical sign: -1, 0 or +1. Zero (of either sign) maps to 0.
    pub fn sign(&self) -> Self {
        self.map(sign)
    }

    pub fn abs(&self) -> Self {
        self.map(f64::abs)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mean(&self) -> Result<f64> {
        if self.data.is_empty() {
            return Err(Error::EmptyTensor { op: "mean" });
        }
        Ok(self.sum() / self.data.len() as f64)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Reduce over `axes`; an empty axis list reduces over every axis.
    /// Reduced axes are dropped from the output shape.
    pub fn reduce(&self, op: Reduction, axes: &[usize]) -> Result<Self> {
        if self.data.is_empty() {
            return Err(Error::EmptyTensor { op: "reduce" });
        }
        let rank = self.rank();
        let mut reduced = vec![axes.is_empty(); rank];
        for &axis in axes {
            if axis >= rank || reduced[axis] {
                return Err(Error::InvalidArgument(format!(
                    "reduce axis {axis} invalid for rank {rank}"
                )));
            }
            reduced[axis] = true;
        }

        let out_shape: Vec<usize> = (0..rank)
            .filter(|&a| !reduced[a])
            .map(|a| self.shape[a])
            .collect();
        let out_len: usize = out_shape.iter().product();
        let block: usize = (0..rank)
            .filter(|&a| reduced[a])
            .map(|a| self.shape[a])
            .product();

        let init = match op {
            Reduction::Sum | Reduction::Mean => 0.0,
            Reduction::Max | Reduction::ArgMax => f64::NEG_INFINITY,
        };
        let mut acc = vec![init; out_len];
        let mut arg = vec![0usize; out_len];
        let mut seen = vec![0usize; out_len];

        // Walk the input in row-major order, tracking the output slot and the
        // position inside the reduced block.
        let mut index = vec![0usize; rank];
        for &v in &self.data {
            let mut out = 0;
            for a in 0..rank {
                if !reduced[a] {
                    out = out * self.shape[a] + index[a];
                }
            }
            match op {
                Reduction::Sum | Reduction::Mean => acc[out] += v,
                Reduction::Max => acc[out] = acc[out].max(v),
                Reduction::ArgMax => {
                    if v > acc[out] || seen[out] == 0 {
                        acc[out] = v;
                        arg[out] = seen[out];
                    }
                }
            }
            seen[out] += 1;
            for a in (0..rank).rev() {
                index[a] += 1;
                if index[a] < self.shape[a] {
                    break;
                }
                index[a] = 0;
            }
        }

        let data = match op {
            Reduction::Sum | Reduction::Max => acc,
            Reduction::Mean => acc.into_iter().map(|s| s / block as f64).collect(),
            Reduction::ArgMax => arg.into_iter().map(|i| i as f64).collect(),
        };
        Ok(Self {
            shape: out_shape,
            data,
        })
    }

    /// Index of the largest element; ties resolve to the lowest index.
    pub fn argmax(&self) -> Result<usize> {
        argmax(&self.data).ok_or(Error::EmptyTensor { op: "argmax" })
    }

    /// Slice of `count` consecutive items along the leading axis.
    pub fn narrow_leading(&self, start: usize, count: usize) -> Result<Self> {
        let lead = *self.shape.first().ok_or(Error::EmptyTensor { op: "narrow" })?;
        if count == 0 || start + count > lead {
            return Err(Error::InvalidArgument(format!(
                "narrow {start}+{count} out of range for leading extent {lead}"
            )));
        }
        let item = self.data.len() / lead;
        let mut shape = self.shape.clone();
        shape[0] = count;
        Ok(Self {
            shape,
            data: self.data[start * item..(start + count) * item].to_vec(),
        })
    }

    /// Stack equally shaped tensors along a new leading axis.
    pub fn stack(items: &[Tensor]) -> Result<Self> {
        let first = items.first().ok_or(Error::EmptyTensor { op: "stack" })?;
        let mut data = Vec::with_capacity(first.len() * items.len());
        for t in items {
            if t.shape != first.shape {
                return Err(Error::shape("stack", &first.shape, &t.shape));
            }
            data.extend_from_slice(&t.data);
        }
        let mut shape = vec![items.len()];
        shape.extend_from_slice(&first.shape);
        Ok(Self { shape, data })
    }

    /// The `i`-th item along the leading axis, with that axis removed.
    pub fn index_leading(&self, i: usize) -> Result<Self> {
        let t = self.narrow_leading(i, 1)?;
        let shape = self.shape[1..].to_vec();
        Ok(Self { shape, data: t.data })
    }
}

pub fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

pub fn argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in values.iter().enumerate() {
        match best {
            Some((_, b)) if v <= b => {}
            _ => best = Some((i, v)),
        }
    }
    best.map(|(i, _)| i)
}
