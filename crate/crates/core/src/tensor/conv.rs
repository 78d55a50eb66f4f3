//! 2-D cross-correlation via im2col + GEMM.

use super::linalg::{gemm, Transpose};
use super::Tensor;
use crate::error::{Error, Result};

pub fn conv_out_dim(input: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    let padded = input + 2 * padding;
    if stride == 0 || kernel == 0 || kernel > padded {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

/// Resolved sizes for one convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub c_in: usize,
    pub h: usize,
    pub w: usize,
    pub c_out: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub padding: usize,
    pub oh: usize,
    pub ow: usize,
}

impl ConvGeometry {
    pub fn new(
        input_chw: [usize; 3],
        kernel_shape: [usize; 4],
        stride: usize,
        padding: usize,
    ) -> Result<Self> {
        let [c_in, h, w] = input_chw;
        let [c_out, kc, kh, kw] = kernel_shape;
        if kc != c_in {
            return Err(Error::shape(
                "conv2d channels",
                &input_chw,
                &kernel_shape,
            ));
        }
        let (Some(oh), Some(ow)) = (
            conv_out_dim(h, kh, stride, padding),
            conv_out_dim(w, kw, stride, padding),
        ) else {
            return Err(Error::InvalidArgument(format!(
                "conv2d: kernel {kh}x{kw} (stride {stride}) does not fit input {h}x{w} with padding {padding}"
            )));
        };
        Ok(Self {
            c_in,
            h,
            w,
            c_out,
            kh,
            kw,
            stride,
            padding,
            oh,
            ow,
        })
    }

    fn patch(&self) -> usize {
        self.c_in * self.kh * self.kw
    }

    fn positions(&self) -> usize {
        self.oh * self.ow
    }

    fn in_len(&self) -> usize {
        self.c_in * self.h * self.w
    }

    fn out_len(&self) -> usize {
        self.c_out * self.positions()
    }

    /// Unfold one `[c_in, h, w]` image into `[patch, positions]` columns.
    fn im2col(&self, image: &[f64], cols: &mut [f64]) {
        let positions = self.positions();
        let pad = self.padding as isize;
        for c in 0..self.c_in {
            for ki in 0..self.kh {
                for kj in 0..self.kw {
                    let row = (c * self.kh + ki) * self.kw + kj;
                    let dst = &mut cols[row * positions..(row + 1) * positions];
                    for oi in 0..self.oh {
                        let y = (oi * self.stride + ki) as isize - pad;
                        let line = &mut dst[oi * self.ow..(oi + 1) * self.ow];
                        if y < 0 || y >= self.h as isize {
                            line.fill(0.0);
                            continue;
                        }
                        let src = &image[(c * self.h + y as usize) * self.w..][..self.w];
                        for (oj, out) in line.iter_mut().enumerate() {
                            let x = (oj * self.stride + kj) as isize - pad;
                            *out = if x < 0 || x >= self.w as isize {
                                0.0
                            } else {
                                src[x as usize]
                            };
                        }
                    }
                }
            }
        }
    }

    /// Fold columns back onto an image, accumulating overlapping patches.
    fn col2im(&self, cols: &[f64], image: &mut [f64]) {
        let positions = self.positions();
        let pad = self.padding as isize;
        for c in 0..self.c_in {
            for ki in 0..self.kh {
                for kj in 0..self.kw {
                    let row = (c * self.kh + ki) * self.kw + kj;
                    let src = &cols[row * positions..(row + 1) * positions];
                    for oi in 0..self.oh {
                        let y = (oi * self.stride + ki) as isize - pad;
                        if y < 0 || y >= self.h as isize {
                            continue;
                        }
                        let dst = &mut image[(c * self.h + y as usize) * self.w..][..self.w];
                        for oj in 0..self.ow {
                            let x = (oj * self.stride + kj) as isize - pad;
                            if x >= 0 && x < self.w as isize {
                                dst[x as usize] += src[oi * self.ow + oj];
                            }
                        }
                    }
                }
            }
        }
    }
}

fn batch_geometry(
    input: &Tensor,
    kernels: &Tensor,
    stride: usize,
    padding: usize,
) -> Result<(usize, ConvGeometry)> {
    let (&[n, c, h, w], &[co, ci, kh, kw]) = (input.shape(), kernels.shape()) else {
        return Err(Error::shape("conv2d", input.shape(), kernels.shape()));
    };
    Ok((n, ConvGeometry::new([c, h, w], [co, ci, kh, kw], stride, padding)?))
}

/// Single-image convolution: `[c_in, h, w]` with `[c_out, c_in, kh, kw]` kernels.
pub fn conv2d(input: &Tensor, kernels: &Tensor, stride: usize, padding: usize) -> Result<Tensor> {
    let batched = input.clone().reshape(&[&[1], input.shape()].concat())?;
    let out = conv2d_batch(&batched, kernels, None, stride, padding)?;
    let shape = out.shape()[1..].to_vec();
    out.reshape(&shape)
}

/// Batched convolution over `[n, c_in, h, w]`, with optional per-channel bias.
pub fn conv2d_batch(
    input: &Tensor,
    kernels: &Tensor,
    bias: Option<&Tensor>,
    stride: usize,
    padding: usize,
) -> Result<Tensor> {
    let (n, g) = batch_geometry(input, kernels, stride, padding)?;
    if let Some(b) = bias {
        if b.shape() != [g.c_out] {
            return Err(Error::shape("conv2d bias", b.shape(), &[g.c_out]));
        }
    }
    let mut cols = vec![0.0; g.patch() * g.positions()];
    let mut out = vec![0.0; n * g.out_len()];
    for (image, dst) in input
        .data()
        .chunks_exact(g.in_len())
        .zip(out.chunks_exact_mut(g.out_len()))
    {
        g.im2col(image, &mut cols);
        gemm(
            g.c_out,
            g.patch(),
            g.positions(),
            kernels.data(),
            Transpose::No,
            &cols,
            Transpose::No,
            dst,
            false,
        );
        if let Some(b) = bias {
            for (channel, &bv) in dst.chunks_exact_mut(g.positions()).zip(b.data()) {
                channel.iter_mut().for_each(|v| *v += bv);
            }
        }
    }
    Tensor::new(vec![n, g.c_out, g.oh, g.ow], out)
}

/// Gradients of a batched convolution given the upstream gradient.
/// Returns `(d_input, d_kernels, d_bias)`; `d_input` is skipped when not wanted.
pub fn conv2d_backward_batch(
    input: &Tensor,
    kernels: &Tensor,
    grad_out: &Tensor,
    stride: usize,
    padding: usize,
    want_input: bool,
) -> Result<(Option<Tensor>, Tensor, Tensor)> {
    let (n, g) = batch_geometry(input, kernels, stride, padding)?;
    if grad_out.shape() != [n, g.c_out, g.oh, g.ow] {
        return Err(Error::shape(
            "conv2d backward",
            grad_out.shape(),
            &[n, g.c_out, g.oh, g.ow],
        ));
    }
    let mut cols = vec![0.0; g.patch() * g.positions()];
    let mut dcols = vec![0.0; g.patch() * g.positions()];
    let mut dk = vec![0.0; kernels.len()];
    let mut db = vec![0.0; g.c_out];
    let mut dx = want_input.then(|| vec![0.0; input.len()]);

    for (i, (image, dout)) in input
        .data()
        .chunks_exact(g.in_len())
        .zip(grad_out.data().chunks_exact(g.out_len()))
        .enumerate()
    {
        g.im2col(image, &mut cols);
        // dK[co, patch] += dOut[co, pos] * cols[patch, pos]^T
        gemm(
            g.c_out,
            g.positions(),
            g.patch(),
            dout,
            Transpose::No,
            &cols,
            Transpose::Yes,
            &mut dk,
            true,
        );
        for (acc, channel) in db.iter_mut().zip(dout.chunks_exact(g.positions())) {
            *acc += channel.iter().sum::<f64>();
        }
        if let Some(dx) = dx.as_mut() {
            // dcols[patch, pos] = K[co, patch]^T * dOut[co, pos]
            gemm(
                g.patch(),
                g.c_out,
                g.positions(),
                kernels.data(),
                Transpose::Yes,
                dout,
                Transpose::No,
                &mut dcols,
                false,
            );
            g.col2im(&dcols, &mut dx[i * g.in_len()..(i + 1) * g.in_len()]);
        }
    }
    let dx = dx.map(|d| Tensor::new(input.shape().to_vec(), d)).transpose()?;
    Ok((
        dx,
        Tensor::new(kernels.shape().to_vec(), dk)?,
        Tensor::new(vec![g.c_out], db)?,
    ))
}
