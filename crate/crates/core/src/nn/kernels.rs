//! Matrix kernels with `f64` accumulators.
//!
//! Each output element is summed over the reduction index in increasing order,
//! so results do not depend on vector width or thread count. Vectorization
//! happens across independent output columns only.

use crate::nn::tensor::Scalar;

/// `acc[m×n] += a[m×k] · b[k×n]`. Zero entries of `a` are skipped.
pub(crate) fn gemm_nn_acc<T: Scalar>(
    a: &[T],
    b: &[T],
    m: usize,
    k: usize,
    n: usize,
    acc: &mut [f64],
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(acc.len(), m * n);
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let acc_row = &mut acc[i * n..(i + 1) * n];
        for (kk, &av) in a_row.iter().enumerate() {
            if av == T::ZERO {
                continue;
            }
            let av = av.to_f64();
            let b_row = &b[kk * n..(kk + 1) * n];
            for (o, &bv) in acc_row.iter_mut().zip(b_row) {
                *o += av * bv.to_f64();
            }
        }
    }
}

/// `acc[m×n] += aᵀ · b` where `a` is `k×m` and `b` is `k×n`.
pub(crate) fn gemm_tn_acc<T: Scalar>(
    a: &[T],
    b: &[T],
    k: usize,
    m: usize,
    n: usize,
    acc: &mut [f64],
) {
    debug_assert_eq!(a.len(), k * m);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(acc.len(), m * n);
    for kk in 0..k {
        let a_row = &a[kk * m..(kk + 1) * m];
        let b_row = &b[kk * n..(kk + 1) * n];
        for (i, &av) in a_row.iter().enumerate() {
            if av == T::ZERO {
                continue;
            }
            let av = av.to_f64();
            let acc_row = &mut acc[i * n..(i + 1) * n];
            for (o, &bv) in acc_row.iter_mut().zip(b_row) {
                *o += av * bv.to_f64();
            }
        }
    }
}

pub(crate) fn transpose<T: Scalar>(src: &[T], rows: usize, cols: usize) -> Vec<T> {
    debug_assert_eq!(src.len(), rows * cols);
    let mut out = vec![T::ZERO; src.len()];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = src[r * cols + c];
        }
    }
    out
}

pub(crate) fn narrow<T: Scalar>(acc: &[f64]) -> Vec<T> {
    acc.iter().map(|&v| T::from_f64(v)).collect()
}
