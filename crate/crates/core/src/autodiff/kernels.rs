//! Plain-slice numeric kernels shared by forward and backward rules.

use super::Scalar;

/// `a[p×q] · b[q×r]`
pub(crate) fn mm<S: Scalar>(a: &[S], b: &[S], p: usize, q: usize, r: usize) -> Vec<S> {
    let mut out = vec![S::zero(); p * r];
    for i in 0..p {
        let orow = &mut out[i * r..(i + 1) * r];
        for k in 0..q {
            let aik = a[i * q + k];
            if aik == S::zero() {
                continue;
            }
            for (o, &bv) in orow.iter_mut().zip(&b[k * r..(k + 1) * r]) {
                *o += aik * bv;
            }
        }
    }
    out
}

/// `a[p×q] · b[r×q]ᵀ`
pub(crate) fn mm_bt<S: Scalar>(a: &[S], b: &[S], p: usize, q: usize, r: usize) -> Vec<S> {
    let mut out = Vec::with_capacity(p * r);
    for i in 0..p {
        let arow = &a[i * q..(i + 1) * q];
        for j in 0..r {
            out.push(dot(arow, &b[j * q..(j + 1) * q]));
        }
    }
    out
}

/// `a[p×q]ᵀ · b[p×r]`, giving `[q×r]`.
pub(crate) fn mm_at<S: Scalar>(a: &[S], b: &[S], p: usize, q: usize, r: usize) -> Vec<S> {
    let mut out = vec![S::zero(); q * r];
    for k in 0..p {
        let brow = &b[k * r..(k + 1) * r];
        for i in 0..q {
            let aki = a[k * q + i];
            if aki == S::zero() {
                continue;
            }
            for (o, &bv) in out[i * r..(i + 1) * r].iter_mut().zip(brow) {
                *o += aki * bv;
            }
        }
    }
    out
}

#[inline]
pub(crate) fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    a.iter().zip(b).fold(S::zero(), |acc, (&x, &y)| acc + x * y)
}

pub(crate) fn transpose<S: Scalar>(a: &[S], rows: usize, cols: usize) -> Vec<S> {
    let mut out = vec![S::zero(); a.len()];
    for i in 0..rows {
        for j in 0..cols {
            out[j * rows + i] = a[i * cols + j];
        }
    }
    out
}

#[inline]
pub(crate) fn sigmoid<S: Scalar>(x: S) -> S {
    // Branch keeps exp() from overflowing for large |x|.
    if x >= S::zero() {
        S::one() / (S::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (S::one() + e)
    }
}

/// Max-subtracted softmax of `src` written into `dst`.
pub(crate) fn softmax_into<S: Scalar>(src: &[S], dst: &mut [S]) {
    let max = src.iter().copied().fold(src[0], |m, v| if v > m { v } else { m });
    let mut total = S::zero();
    for (d, &v) in dst.iter_mut().zip(src) {
        *d = (v - max).exp();
        total += *d;
    }
    for d in dst.iter_mut() {
        *d = *d / total;
    }
}
