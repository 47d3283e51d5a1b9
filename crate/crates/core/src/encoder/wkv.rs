//! The wkv operator: a per-channel exponentially decaying weighted average of
//! values, with an extra bonus weight on the current frame.
//!
//! Two evaluations are provided. [`wkv_parallel`] evaluates the weighted sums for
//! every frame directly (quadratic in `T`); [`wkv_step`] advances a constant-size
//! recurrent state one frame at a time. Both shift exponents by their running
//! maximum so that `|k|, |u|` up to 100 stay finite in f32.

use crate::error::{shape_err, Error, Result};
use crate::numerics::{CustomOp, Graph, Scalar, Tensor, Var};

fn check_inputs<T: Scalar>(k: &Tensor<T>, v: &Tensor<T>, w: &Tensor<T>, u: &Tensor<T>) -> Result<(usize, usize)> {
    if k.rank() != 2 || k.shape() != v.shape() {
        return Err(shape_err("wkv", format!("k {:?} / v {:?}", k.shape(), v.shape())));
    }
    let (t, d) = (k.shape()[0], k.shape()[1]);
    if t == 0 {
        return Err(shape_err("wkv", "empty sequence"));
    }
    if w.len() != d || u.len() != d {
        return Err(shape_err("wkv", format!("w {:?} / u {:?} for width {d}", w.shape(), u.shape())));
    }
    if w.data().iter().any(|&x| !(x > T::zero())) {
        return Err(Error::Invalid("wkv decay must be strictly positive".into()));
    }
    Ok((t, d))
}

/// Exponent of frame `i`'s weight in the average for frame `t` (both 0-based, `i ≤ t`).
#[inline]
fn exponent<T: Scalar>(t: usize, i: usize, k: T, w: T, u: T) -> T {
    if i == t {
        u + k
    } else {
        -T::from_usize(t - 1 - i).unwrap() * w + k
    }
}

/// Direct evaluation over whole sequences `k, v: [T×d]` with decay `w > 0` and
/// bonus `u`, both `[d]`.
pub fn wkv_parallel<T: Scalar>(k: &Tensor<T>, v: &Tensor<T>, w: &Tensor<T>, u: &Tensor<T>) -> Result<Tensor<T>> {
    let (len, d) = check_inputs(k, v, w, u)?;
    let (w, u) = (w.data(), u.data());
    let mut out = vec![T::zero(); len * d];
    let mut max = vec![T::zero(); d];
    let mut num = vec![T::zero(); d];
    let mut den = vec![T::zero(); d];
    for t in 0..len {
        for c in 0..d {
            max[c] = T::neg_infinity();
        }
        for i in 0..=t {
            let kr = k.row(i);
            for c in 0..d {
                max[c] = max[c].max(exponent(t, i, kr[c], w[c], u[c]));
            }
        }
        num.fill(T::zero());
        den.fill(T::zero());
        for i in 0..=t {
            let (kr, vr) = (k.row(i), v.row(i));
            for c in 0..d {
                let e = (exponent(t, i, kr[c], w[c], u[c]) - max[c]).exp();
                num[c] += e * vr[c];
                den[c] += e;
            }
        }
        for c in 0..d {
            out[t * d + c] = num[c] / den[c];
        }
    }
    Tensor::new(vec![len, d], out)
}

struct WkvOp;

impl<T: Scalar> CustomOp<T> for WkvOp {
    fn name(&self) -> &'static str {
        "wkv"
    }

    fn backward(&self, inputs: &[&Tensor<T>], output: &Tensor<T>, grad: &Tensor<T>) -> Vec<Option<Tensor<T>>> {
        let (k, v, w, u) = (inputs[0], inputs[1], inputs[2].data(), inputs[3].data());
        let (len, d) = (k.shape()[0], k.shape()[1]);
        let mut gk = Tensor::zeros(k.shape());
        let mut gv = Tensor::zeros(v.shape());
        let mut gw = vec![T::zero(); d];
        let mut gu = vec![T::zero(); d];
        let mut max = vec![T::zero(); d];
        let mut den = vec![T::zero(); d];
        for t in 0..len {
            let (y, gy) = (output.row(t), grad.row(t));
            max.fill(T::neg_infinity());
            for i in 0..=t {
                let kr = k.row(i);
                for c in 0..d {
                    max[c] = max[c].max(exponent(t, i, kr[c], w[c], u[c]));
                }
            }
            den.fill(T::zero());
            for i in 0..=t {
                let kr = k.row(i);
                for c in 0..d {
                    den[c] += (exponent(t, i, kr[c], w[c], u[c]) - max[c]).exp();
                }
            }
            for i in 0..=t {
                let (kr, vr) = (k.row(i), v.row(i));
                let lag = if i < t { T::from_usize(t - 1 - i).unwrap() } else { T::zero() };
                for c in 0..d {
                    let p = (exponent(t, i, kr[c], w[c], u[c]) - max[c]).exp() / den[c];
                    gv.row_mut(i)[c] += gy[c] * p;
                    let ge = gy[c] * p * (vr[c] - y[c]);
                    gk.row_mut(i)[c] += ge;
                    if i == t {
                        gu[c] += ge;
                    } else {
                        gw[c] -= ge * lag;
                    }
                }
            }
        }
        vec![
            Some(gk),
            Some(gv),
            Some(Tensor::new(inputs[2].shape().to_vec(), gw).expect("shape")),
            Some(Tensor::new(inputs[3].shape().to_vec(), gu).expect("shape")),
        ]
    }
}

/// Taped [`wkv_parallel`]; `w` is the (positive) decay node.
pub fn wkv_graph<T: Scalar>(g: &Graph<T>, k: Var, v: Var, w: Var, u: Var) -> Result<Var> {
    let out = wkv_parallel(&g.value(k), &g.value(v), &g.value(w), &g.value(u))?;
    g.custom(Box::new(WkvOp), &[k, v, w, u], out)
}

/// Max-shifted recurrent accumulators for one layer: the unshifted numerator and
/// denominator are `a = a_s·e^p`, `b = b_s·e^p`.
#[derive(Debug, Clone, PartialEq)]
pub struct WkvState<T> {
    pub a: Vec<T>,
    pub b: Vec<T>,
    pub p: Vec<T>,
}

impl<T: Scalar> WkvState<T> {
    pub fn fresh(d: usize) -> Self {
        Self {
            a: vec![T::zero(); d],
            b: vec![T::zero(); d],
            p: vec![T::neg_sentinel(); d],
        }
    }
}

/// One recurrent step: returns `wkv_t` and advances `state` in place.
pub fn wkv_step<T: Scalar>(state: &mut WkvState<T>, k: &[T], v: &[T], w: &[T], u: &[T]) -> Vec<T> {
    let d = k.len();
    let mut out = Vec::with_capacity(d);
    for c in 0..d {
        let (a, b, p) = (state.a[c], state.b[c], state.p[c]);
        let cur = u[c] + k[c];
        let r = p.max(cur);
        let (ep, ec) = ((p - r).exp(), (cur - r).exp());
        out.push((ep * a + ec * v[c]) / (ep * b + ec));

        let decayed = p - w[c];
        let q = decayed.max(k[c]);
        let (ed, ek) = ((decayed - q).exp(), (k[c] - q).exp());
        state.a[c] = ed * a + ek * v[c];
        state.b[c] = ed * b + ek;
        state.p[c] = q;
    }
    out
}
