//! Plain forward kernels shared by the taped graph and the recurrent step path.

use crate::error::{shape_err, Result};
use crate::numerics::scalar::Scalar;
use crate::numerics::tensor::Tensor;

fn dims2<T: Scalar>(t: &Tensor<T>, op: &'static str) -> Result<(usize, usize)> {
    match t.shape() {
        [m, n] => Ok((*m, *n)),
        [n] => Ok((1, *n)),
        s => Err(shape_err(op, format!("expected rank 1 or 2, got {s:?}"))),
    }
}

/// `a[m×k] · b[k×n]`.
pub fn matmul<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (m, k) = dims2(a, "matmul")?;
    let (k2, n) = dims2(b, "matmul")?;
    if k != k2 {
        return Err(shape_err(
            "matmul",
            format!("{:?} x {:?}", a.shape(), b.shape()),
        ));
    }
    let mut out = vec![T::zero(); m * n];
    let (ad, bd) = (a.data(), b.data());
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = ad[i * k + p];
            if av == T::zero() {
                continue;
            }
            let brow = &bd[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    Tensor::new(vec![m, n], out)
}

/// `x[m×k] · w[n×k]ᵀ`, the layout used for every weight matrix (`out × in`).
pub fn linear<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>) -> Result<Tensor<T>> {
    let (m, k) = dims2(x, "linear")?;
    let (n, k2) = dims2(w, "linear")?;
    if k != k2 {
        return Err(shape_err(
            "linear",
            format!("x {:?} with weight {:?}", x.shape(), w.shape()),
        ));
    }
    let mut out = vec![T::zero(); m * n];
    for i in 0..m {
        let xr = x.row(i);
        for j in 0..n {
            out[i * n + j] = dot(xr, w.row(j));
        }
    }
    Tensor::new(vec![m, n], out)
}

/// `a[k×m]ᵀ · b[k×n]`.
pub fn matmul_tn<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (k, m) = dims2(a, "matmul_tn")?;
    let (k2, n) = dims2(b, "matmul_tn")?;
    if k != k2 {
        return Err(shape_err(
            "matmul_tn",
            format!("{:?}ᵀ x {:?}", a.shape(), b.shape()),
        ));
    }
    let mut out = vec![T::zero(); m * n];
    for p in 0..k {
        let arow = a.row(p);
        let brow = b.row(p);
        for (i, &av) in arow.iter().enumerate() {
            if av == T::zero() {
                continue;
            }
            for (o, &bv) in out[i * n..(i + 1) * n].iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    Tensor::new(vec![m, n], out)
}

/// `w[n×k] · x[k]` for a single frame.
pub fn matvec<T: Scalar>(w: &Tensor<T>, x: &[T]) -> Vec<T> {
    let n = w.rows();
    debug_assert_eq!(w.cols(), x.len());
    (0..n).map(|j| dot(w.row(j), x)).collect()
}

#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut acc = T::zero();
    for (&x, &y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

#[inline]
pub fn sigmoid_scalar<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

pub fn sigmoid<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(sigmoid_scalar)
}

pub fn tanh<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(T::tanh)
}

#[inline]
pub fn squared_relu_scalar<T: Scalar>(x: T) -> T {
    let r = x.max(T::zero());
    r * r
}

pub fn squared_relu<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(squared_relu_scalar)
}

/// Stable `log Σ exp(x_i)`. Sentinel entries contribute nothing; an all-sentinel input
/// yields the sentinel.
pub fn logsumexp_slice<T: Scalar>(x: &[T]) -> T {
    let m = x.iter().copied().fold(T::neg_infinity(), T::max);
    if m.is_sentinel() || m == T::neg_infinity() {
        return T::neg_sentinel();
    }
    let s: T = x.iter().map(|&v| (v - m).exp()).sum();
    m + s.ln()
}

pub fn logsumexp<T: Scalar>(x: &Tensor<T>) -> T {
    logsumexp_slice(x.data())
}

#[inline]
pub fn logaddexp<T: Scalar>(a: T, b: T) -> T {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if hi.is_sentinel() {
        return T::neg_sentinel();
    }
    hi + (lo - hi).exp().ln_1p()
}

/// Row-wise `x − logsumexp(x)`; a rank-1 input is a single row.
pub fn log_softmax<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let mut out = x.clone();
    let c = x.cols();
    for row in out.data_mut().chunks_mut(c.max(1)) {
        let lse = logsumexp_slice(row);
        for v in row.iter_mut() {
            *v -= lse;
        }
    }
    out
}

/// Per-row normalization statistics `(mean, 1/sqrt(var + eps))`.
pub fn row_stats<T: Scalar>(row: &[T], eps: T) -> (T, T) {
    let n = T::from_usize(row.len()).unwrap();
    let mean = row.iter().copied().sum::<T>() / n;
    let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
    (mean, T::one() / (var + eps).sqrt())
}

pub fn layer_norm_row<T: Scalar>(row: &[T], gain: &[T], bias: &[T], eps: T) -> Vec<T> {
    let (mean, rstd) = row_stats(row, eps);
    row.iter()
        .zip(gain.iter().zip(bias))
        .map(|(&v, (&g, &b))| (v - mean) * rstd * g + b)
        .collect()
}

/// Elementwise `mu ⊙ x_t + (1 − mu) ⊙ x_prev`.
pub fn token_shift<T: Scalar>(x_t: &[T], x_prev: &[T], mu: &[T]) -> Result<Vec<T>> {
    if x_t.len() != x_prev.len() || x_t.len() != mu.len() {
        return Err(shape_err(
            "token_shift",
            format!("{} / {} / {}", x_t.len(), x_prev.len(), mu.len()),
        ));
    }
    Ok(x_t
        .iter()
        .zip(x_prev.iter().zip(mu))
        .map(|(&x, (&p, &m))| m * x + (T::one() - m) * p)
        .collect())
}
