use super::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Transpose {
    No,
    Yes,
}

/// `c = op(a) * op(b) + accumulate * c` for row-major buffers, where `op(a)` is
/// `m x k` and `op(b)` is `k x n`.
#[allow(clippy::too_many_arguments)]
pub fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    ta: Transpose,
    b: &[f64],
    tb: Transpose,
    c: &mut [f64],
    accumulate: bool,
) {
    assert_eq!(a.len(), m * k, "gemm: lhs buffer");
    assert_eq!(b.len(), k * n, "gemm: rhs buffer");
    assert_eq!(c.len(), m * n, "gemm: output buffer");
    let (rsa, csa) = match ta {
        Transpose::No => (k as isize, 1),
        Transpose::Yes => (1, m as isize),
    };
    let (rsb, csb) = match tb {
        Transpose::No => (n as isize, 1),
        Transpose::Yes => (1, k as isize),
    };
    let beta = if accumulate { 1.0 } else { 0.0 };
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        if !accumulate {
            c.fill(0.0);
        }
        return;
    }
    // SAFETY: the asserts above pin every buffer to exactly the extent the
    // strides address.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Matrix product of `[m, k]` and `[k, n]` tensors.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (&[m, k], &[k2, n]) = (a.shape(), b.shape()) else {
        return Err(Error::shape("matmul", a.shape(), b.shape()));
    };
    if k != k2 {
        return Err(Error::shape("matmul", a.shape(), b.shape()));
    }
    let mut out = vec![0.0; m * n];
    gemm(m, k, n, a.data(), Transpose::No, b.data(), Transpose::No, &mut out, false);
    Tensor::new(vec![m, n], out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_and_hand_product() {
        let eye = Tensor::new(vec![2, 2], vec![1., 0., 0., 1.]).unwrap();
        let b = Tensor::new(vec![2, 3], vec![1., 2., 3., 4., 5., 6.]).unwrap();
        assert_eq!(matmul(&eye, &b).unwrap(), b);
        let row = Tensor::new(vec![1, 2], vec![1., 2.]).unwrap();
        let col = Tensor::new(vec![2, 1], vec![3., 4.]).unwrap();
        assert_eq!(matmul(&row, &col).unwrap().data(), &[11.0]);
    }

    #[test]
    fn inner_dimension_mismatch() {
        let a = Tensor::zeros(&[2, 3]);
        assert!(matches!(matmul(&a, &a), Err(Error::ShapeMismatch { .. })));
        assert!(matmul(&Tensor::zeros(&[3]), &a).is_err());
    }

    #[test]
    fn transposed_operands() {
        // a^T b with a = [[1,2],[3,4],[5,6]] (3x2), b = [[1],[1],[1]] (3x1)
        let a = [1., 2., 3., 4., 5., 6.];
        let b = [1., 1., 1.];
        let mut c = [0.0; 2];
        gemm(2, 3, 1, &a, Transpose::Yes, &b, Transpose::No, &mut c, false);
        assert_eq!(c, [9., 12.]);
        // a b^T with b given as [1, 2] row: (3x1)(1x2)
        let col = [1., 2., 3.];
        let row = [10., 20.];
        let mut outer = [0.0; 6];
        gemm(3, 1, 2, &col, Transpose::No, &row, Transpose::Yes, &mut outer, false);
        assert_eq!(outer, [10., 20., 20., 40., 30., 60.]);
        gemm(3, 1, 2, &col, Transpose::No, &row, Transpose::Yes, &mut outer, true);
        assert_eq!(outer, [20., 40., 40., 80., 60., 120.]);
    }
}
