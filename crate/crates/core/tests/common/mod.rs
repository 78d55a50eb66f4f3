//! Independent reference implementations shared by the integration tests and
//! the acceptance runner. Nothing here calls into the engine's kernels.

#![allow(dead_code)]

use noisemod::autodiff::{Graph, LossReduction, Var};
use noisemod::{RngStream, Tensor};

pub fn random_tensor(shape: &[usize], rng: &mut RngStream, scale: f64) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.uniform_in(-scale, scale)).collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

/// Triple-loop `[m, k] x [k, n]`.
pub fn naive_matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            let mut s = 0.0;
            for p in 0..k {
                s += a[i * k + p] * b[p * n + j];
            }
            c[i * n + j] = s;
        }
    }
    c
}

/// Direct zero-padded cross-correlation of one `[c, h, w]` image with
/// `[o, c, kh, kw]` kernels.
pub fn naive_conv(
    x: &[f64],
    [c, h, w]: [usize; 3],
    k: &[f64],
    [o, kh, kw]: [usize; 3],
    stride: usize,
    pad: usize,
) -> (Vec<f64>, usize, usize) {
    let oh = (h + 2 * pad - kh) / stride + 1;
    let ow = (w + 2 * pad - kw) / stride + 1;
    let mut out = vec![0.0; o * oh * ow];
    for oc in 0..o {
        for i in 0..oh {
            for j in 0..ow {
                let mut s = 0.0;
                for ic in 0..c {
                    for u in 0..kh {
                        for v in 0..kw {
                            let r = (i * stride + u) as isize - pad as isize;
                            let q = (j * stride + v) as isize - pad as isize;
                            if r < 0 || q < 0 || r >= h as isize || q >= w as isize {
                                continue;
                            }
                            s += x[(ic * h + r as usize) * w + q as usize]
                                * k[((oc * c + ic) * kh + u) * kw + v];
                        }
                    }
                }
                out[(oc * oh + i) * ow + j] = s;
            }
        }
    }
    (out, oh, ow)
}

/// `|<d, g>| / (|d| |g|)` summed naively, 0 when either vector is zero.
pub fn brute_cosine(d: &[f64], g: &[f64]) -> f64 {
    let dot: f64 = d.iter().zip(g).map(|(a, b)| a * b).sum();
    let nd: f64 = d.iter().map(|a| a * a).sum::<f64>().sqrt();
    let ng: f64 = g.iter().map(|a| a * a).sum::<f64>().sqrt();
    if nd == 0.0 || ng == 0.0 {
        0.0
    } else {
        (dot.abs() / (nd * ng)).min(1.0)
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

/// A randomly shaped dense/conv/relu network ending in cross-entropy, with
/// every leaf bound.
pub struct RandomGraph {
    pub graph: Graph,
    pub loss: Var,
    pub leaves: Vec<(Var, Tensor)>,
    /// Inputs of every ReLU, used to detect kinks under perturbation.
    pub relu_inputs: Vec<Var>,
}

fn pick(rng: &mut RngStream, lo: usize, hi: usize) -> usize {
    lo + (rng.next_u64() % (hi - lo + 1) as u64) as usize
}

impl RandomGraph {
    pub fn sample(rng: &mut RngStream) -> Self {
        let mut g = Graph::new();
        let mut leaves = Vec::new();
        let mut relu_inputs = Vec::new();
        let mut leaf = |g: &mut Graph, shape: &[usize], scale: f64, rng: &mut RngStream| {
            let v = g.leaf();
            leaves.push((v, random_tensor(shape, rng, scale)));
            v
        };
        let n = pick(rng, 1, 3);
        let classes = pick(rng, 2, 5);
        let mut features;
        let mut h;
        if rng.uniform() < 0.7 {
            let c = pick(rng, 1, 2);
            let side = pick(rng, 4, 7);
            let x = leaf(&mut g, &[n, c, side, side], 1.0, rng);
            let convs = pick(rng, 1, 2);
            let (mut ch, mut s) = (c, side);
            h = x;
            for _ in 0..convs {
                let o = pick(rng, 1, 3);
                let k = pick(rng, 1, 3).min(s);
                let stride = pick(rng, 1, 2);
                let pad = pick(rng, 0, 1);
                let kernel = leaf(&mut g, &[o, ch, k, k], 0.8, rng);
                let bias = if rng.uniform() < 0.5 {
                    Some(leaf(&mut g, &[o], 0.3, rng))
                } else {
                    None
                };
                let z = g.conv2d(h, kernel, bias, stride, pad);
                relu_inputs.push(z);
                h = g.relu(z);
                ch = o;
                s = (s + 2 * pad - k) / stride + 1;
            }
            if s >= 2 && rng.uniform() < 0.3 {
                h = g.avg_pool2(h);
                s /= 2;
            }
            if rng.uniform() < 0.3 {
                h = g.global_avg_pool(h);
                features = ch;
            } else {
                features = ch * s * s;
                h = g.reshape(h, &[n, features]);
            }
        } else {
            features = pick(rng, 2, 8);
            h = leaf(&mut g, &[n, features], 1.0, rng);
        }
        for _ in 0..pick(rng, 0, 2) {
            let width = pick(rng, 2, 6);
            let w = leaf(&mut g, &[features, width], 0.8, rng);
            let b = leaf(&mut g, &[width], 0.3, rng);
            let z = g.dense(h, w, b);
            relu_inputs.push(z);
            h = g.relu(z);
            if rng.uniform() < 0.3 {
                let gate = leaf(&mut g, &[n, width], 1.0, rng);
                h = g.mul(h, gate);
            }
            features = width;
        }
        let w = leaf(&mut g, &[features, classes], 0.8, rng);
        let b = leaf(&mut g, &[classes], 0.3, rng);
        let logits = g.dense(h, w, b);
        let labels: Vec<usize> = (0..n).map(|_| pick(rng, 0, classes - 1)).collect();
        let reduction = if rng.uniform() < 0.5 {
            LossReduction::Mean
        } else {
            LossReduction::Sum
        };
        let loss = g.softmax_cross_entropy(logits, &labels, reduction);
        for (v, t) in &leaves {
            g.bind(*v, t.clone()).unwrap();
        }
        RandomGraph {
            graph: g,
            loss,
            leaves,
            relu_inputs,
        }
    }

    fn relu_pattern(&self) -> Vec<bool> {
        self.relu_inputs
            .iter()
            .flat_map(|&z| self.graph.value(z).unwrap().data().iter().map(|&v| v > 0.0).collect::<Vec<_>>())
            .collect()
    }

    fn loss_with(&mut self, leaf: usize, coord: usize, delta: f64) -> (f64, Vec<bool>) {
        let (v, t) = &self.leaves[leaf];
        let mut p = t.clone();
        p.data_mut()[coord] += delta;
        self.graph.bind(*v, p).unwrap();
        let f = self.graph.forward_scalar(self.loss).unwrap();
        (f, self.relu_pattern())
    }
}

/// Outcome of comparing reverse-mode gradients with finite differences.
#[derive(Debug, Default)]
pub struct GradCheck {
    pub checked: usize,
    /// Coordinates where a perturbation flips a ReLU, so the loss is not
    /// differentiable across the stencil.
    pub skipped: usize,
    pub worst: f64,
}

pub const FD_STEP: f64 = 1e-3;
/// Gradients below this magnitude are compared absolutely.
pub const GRAD_FLOOR: f64 = 1e-6;

/// Fourth-order central differences against `backward` for every coordinate
/// of every leaf. Error is `|a - fd| / max(|a|, |fd|, GRAD_FLOOR)`.
pub fn check_gradients(rg: &mut RandomGraph) -> GradCheck {
    rg.graph.forward().unwrap();
    let base = rg.relu_pattern();
    let vars: Vec<Var> = rg.leaves.iter().map(|(v, _)| *v).collect();
    let grads = rg.graph.backward(rg.loss, &vars).unwrap();
    let mut out = GradCheck::default();
    for li in 0..rg.leaves.len() {
        let analytic = grads.get(rg.leaves[li].0).unwrap().clone();
        for i in 0..analytic.len() {
            let mut f = [0.0; 4];
            let mut kink = false;
            for (slot, mult) in [(0, 2.0), (1, 1.0), (2, -1.0), (3, -2.0)] {
                let (v, pattern) = rg.loss_with(li, i, mult * FD_STEP);
                f[slot] = v;
                kink |= pattern != base;
            }
            if kink {
                out.skipped += 1;
                continue;
            }
            let fd = (-f[0] + 8.0 * f[1] - 8.0 * f[2] + f[3]) / (12.0 * FD_STEP);
            let a = analytic.data()[i];
            let err = (a - fd).abs() / a.abs().max(fd.abs()).max(GRAD_FLOOR);
            out.worst = out.worst.max(err);
            out.checked += 1;
        }
        let (v, t) = &rg.leaves[li];
        rg.graph.bind(*v, t.clone()).unwrap();
    }
    out
}
