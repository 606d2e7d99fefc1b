//! Stride-2, 3×3, padding-1 plane kernels.
//!
//! A "small" n×n plane and a "big" 2n×2n plane are linked by
//! `big(2s + k − 1) ↔ small(s)` per axis, k ∈ {0, 1, 2}. A strided
//! convolution maps big to small ([`acc_down`]); a transposed convolution
//! with output padding 1 maps small to big ([`acc_up`]). The backward passes
//! of each are the other kernel plus [`correlate`] for the weights.
//!
//! The only out-of-range tap is k = 0 at s = 0 (index −1); `2s + 1` never
//! exceeds `2n − 1`.

use crate::scalar::Scalar;

/// `small[s] += Σ_k w[k] · big[2s + k − 1]`.
pub fn acc_down<T: Scalar>(big: &[T], small: &mut [T], n: usize, w: &[T]) {
    let bn = 2 * n;
    debug_assert_eq!(big.len(), bn * bn);
    debug_assert_eq!(small.len(), n * n);
    for sy in 0..n {
        let out = &mut small[sy * n..(sy + 1) * n];
        for ky in 0..3 {
            if sy == 0 && ky == 0 {
                continue;
            }
            let row = &big[(2 * sy + ky - 1) * bn..(2 * sy + ky) * bn];
            let (w0, w1, w2) = (w[3 * ky], w[3 * ky + 1], w[3 * ky + 2]);
            out[0] += w1 * row[0] + w2 * row[1];
            for sx in 1..n {
                let b = 2 * sx - 1;
                out[sx] += w0 * row[b] + w1 * row[b + 1] + w2 * row[b + 2];
            }
        }
    }
}

/// `big[2s + k − 1] += w[k] · small[s]`.
pub fn acc_up<T: Scalar>(small: &[T], big: &mut [T], n: usize, w: &[T]) {
    let bn = 2 * n;
    debug_assert_eq!(big.len(), bn * bn);
    debug_assert_eq!(small.len(), n * n);
    for sy in 0..n {
        let inp = &small[sy * n..(sy + 1) * n];
        for ky in 0..3 {
            if sy == 0 && ky == 0 {
                continue;
            }
            let row = &mut big[(2 * sy + ky - 1) * bn..(2 * sy + ky) * bn];
            let (w0, w1, w2) = (w[3 * ky], w[3 * ky + 1], w[3 * ky + 2]);
            row[0] += w1 * inp[0];
            row[1] += w2 * inp[0];
            for sx in 1..n {
                let v = inp[sx];
                let b = 2 * sx - 1;
                row[b] += w0 * v;
                row[b + 1] += w1 * v;
                row[b + 2] += w2 * v;
            }
        }
    }
}

/// `g[k] += Σ_s small[s] · big[2s + k − 1]`.
pub fn correlate<T: Scalar>(small: &[T], big: &[T], n: usize, g: &mut [T]) {
    let bn = 2 * n;
    for sy in 0..n {
        let s_row = &small[sy * n..(sy + 1) * n];
        for ky in 0..3 {
            if sy == 0 && ky == 0 {
                continue;
            }
            let row = &big[(2 * sy + ky - 1) * bn..(2 * sy + ky) * bn];
            let (mut g0, mut g1, mut g2) = (T::zero(), s_row[0] * row[0], s_row[0] * row[1]);
            for sx in 1..n {
                let v = s_row[sx];
                let b = 2 * sx - 1;
                g0 += v * row[b];
                g1 += v * row[b + 1];
                g2 += v * row[b + 2];
            }
            g[3 * ky] += g0;
            g[3 * ky + 1] += g1;
            g[3 * ky + 2] += g2;
        }
    }
}
