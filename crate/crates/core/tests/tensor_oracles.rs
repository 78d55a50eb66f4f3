mod common;

use common::{naive_conv, naive_matmul, random_tensor};
use noisemod::tensor::{conv2d, conv2d_batch, matmul, Reduction};
use noisemod::{RngStream, Tensor};

fn close(a: &[f64], b: &[f64], tol: f64) {
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(b) {
        assert!((x - y).abs() <= tol * (1.0 + y.abs()), "{x} vs {y}");
    }
}

fn dim(rng: &mut RngStream, lo: u64, hi: u64) -> usize {
    (lo + rng.next_u64() % (hi - lo + 1)) as usize
}

#[test]
fn matmul_matches_triple_loop() {
    let mut rng = RngStream::new(1);
    for _ in 0..200 {
        let (m, k, n) = (dim(&mut rng, 1, 17), dim(&mut rng, 1, 17), dim(&mut rng, 1, 17));
        let a = random_tensor(&[m, k], &mut rng, 2.0);
        let b = random_tensor(&[k, n], &mut rng, 2.0);
        let c = matmul(&a, &b).unwrap();
        assert_eq!(c.shape(), [m, n]);
        close(c.data(), &naive_matmul(a.data(), b.data(), m, k, n), 1e-12);
    }
}

#[test]
fn matmul_rejects_inner_mismatch() {
    let a = Tensor::zeros(&[2, 3]);
    let b = Tensor::zeros(&[4, 2]);
    assert!(matmul(&a, &b).is_err());
}

#[test]
fn conv_matches_direct_loops() {
    let mut rng = RngStream::new(2);
    for _ in 0..200 {
        let c = dim(&mut rng, 1, 3);
        let (h, w) = (dim(&mut rng, 3, 9), dim(&mut rng, 3, 9));
        let o = dim(&mut rng, 1, 4);
        let k = dim(&mut rng, 1, 3);
        let stride = dim(&mut rng, 1, 2);
        let pad = dim(&mut rng, 0, 2);
        let x = random_tensor(&[c, h, w], &mut rng, 1.0);
        let kern = random_tensor(&[o, c, k, k], &mut rng, 1.0);
        let got = conv2d(&x, &kern, stride, pad).unwrap();
        let (want, oh, ow) = naive_conv(x.data(), [c, h, w], kern.data(), [o, k, k], stride, pad);
        assert_eq!(got.shape(), [o, oh, ow]);
        close(got.data(), &want, 1e-12);
    }
}

#[test]
fn batched_conv_adds_bias_per_channel() {
    let mut rng = RngStream::new(3);
    let x = random_tensor(&[3, 2, 5, 5], &mut rng, 1.0);
    let kern = random_tensor(&[4, 2, 3, 3], &mut rng, 1.0);
    let bias = random_tensor(&[4], &mut rng, 1.0);
    let out = conv2d_batch(&x, &kern, Some(&bias), 1, 1).unwrap();
    for n in 0..3 {
        let single = conv2d(&x.index_leading(n).unwrap(), &kern, 1, 1).unwrap();
        let got = out.index_leading(n).unwrap();
        for (i, (a, b)) in got.data().iter().zip(single.data()).enumerate() {
            assert!((a - b - bias.data()[i / 25]).abs() < 1e-12);
        }
    }
}

#[test]
fn identity_kernel_copies_input() {
    let mut rng = RngStream::new(4);
    let x = random_tensor(&[1, 6, 6], &mut rng, 1.0);
    let mut k = Tensor::zeros(&[1, 1, 3, 3]);
    k.data_mut()[4] = 1.0;
    assert_eq!(conv2d(&x, &k, 1, 1).unwrap(), x);
}

#[test]
fn reductions_over_axes() {
    let t = Tensor::new(vec![2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
    assert_eq!(t.reduce(Reduction::Sum, &[0]).unwrap().data(), &[5.0, 7.0, 9.0]);
    assert_eq!(t.reduce(Reduction::Mean, &[1]).unwrap().data(), &[2.0, 5.0]);
    assert_eq!(t.sum(), 21.0);
    assert_eq!(t.argmax().unwrap(), 5);
}
