//! Continuous integrate-and-fire alignment: a scalar weight per frame,
//! accumulated left to right, firing a label boundary at each unit crossing.

use crate::error::{Error, Result};
use crate::numerics::kernels::{dot, sigmoid_scalar};
use crate::numerics::{Graph, Scalar, Tensor, Var};
use crate::optim::Adam;
use crate::params::{Bound, ParamId, ParamStore};
use crate::rng::RunRng;

/// Firing threshold.
pub const BETA: f64 = 1.0;
/// Slack on the threshold comparison so that exact multiples fire despite rounding.
pub const FIRE_TOLERANCE: f64 = 1e-6;

/// `α_t = σ(w · h_t + b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CifParams {
    pub weight_proj: ParamId,
    pub bias: ParamId,
}

impl CifParams {
    pub fn register<T: Scalar>(store: &mut ParamStore<T>, d_io: usize, rng: &mut RunRng) -> Self {
        Self {
            weight_proj: store.add_uniform("cif.weight_proj", &[1, d_io], d_io, rng),
            bias: store.add("cif.bias", Tensor::zeros(&[1])),
        }
    }

    pub fn ids(&self) -> [ParamId; 2] {
        [self.weight_proj, self.bias]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CifAlignment<T> {
    /// 1-based frame index of each label, non-decreasing.
    pub boundaries: Vec<usize>,
    /// `|Σα − U|` on the unscaled weights.
    pub quantity_loss: T,
}

pub fn cif_weights<T: Scalar>(store: &ParamStore<T>, p: &CifParams, h: &Tensor<T>) -> Vec<T> {
    let w = store.get(p.weight_proj).data();
    let b = store.get(p.bias).data()[0];
    (0..h.rows()).map(|t| sigmoid_scalar(dot(w, h.row(t)) + b)).collect()
}

/// `[T×1]` weights on the tape.
pub fn cif_weights_graph<T: Scalar>(g: &Graph<T>, b: &Bound, p: &CifParams, h: Var) -> Result<Var> {
    g.sigmoid(g.add_row(g.linear(h, b[p.weight_proj])?, b[p.bias])?)
}

/// `|Σα − U|` as a scalar node.
pub fn quantity_loss_graph<T: Scalar>(g: &Graph<T>, b: &Bound, p: &CifParams, h: Var, u: usize) -> Result<Var> {
    let alpha = cif_weights_graph(g, b, p, h)?;
    g.abs(g.add_const(g.sum(alpha)?, -T::from_usize(u).expect("count"))?)
}

/// Scales `alpha` to sum to `u`, then accumulates and fires. Always yields
/// exactly `u` boundaries; any remainder after the last fire is dropped.
pub fn fire<T: Scalar>(alpha: &[T], u: usize) -> Result<Vec<usize>> {
    if u == 0 {
        return Ok(Vec::new());
    }
    if alpha.is_empty() {
        return Err(Error::TooShort(format!("{u} labels but no frames to align")));
    }
    let total: T = alpha.iter().copied().sum();
    if !(total > T::zero()) {
        return Err(Error::Invalid("CIF weights must be positive".into()));
    }
    let scale = T::from_usize(u).expect("count") / total;
    let beta = T::from_f64c(BETA);
    let tol = T::from_f64c(FIRE_TOLERANCE);
    let mut acc = T::zero();
    let mut out = Vec::with_capacity(u);
    for (t, &a) in alpha.iter().enumerate() {
        acc += a * scale;
        while out.len() < u && acc >= beta - tol {
            out.push(t + 1);
            acc -= beta;
        }
    }
    // Rounding can leave the final crossing just short of the threshold.
    out.resize(u, alpha.len());
    Ok(out)
}

pub fn cif_align<T: Scalar>(store: &ParamStore<T>, p: &CifParams, h: &Tensor<T>, u: usize) -> Result<CifAlignment<T>> {
    let alpha = cif_weights(store, p, h);
    let boundaries = fire(&alpha, u)?;
    let total: T = alpha.iter().copied().sum();
    Ok(CifAlignment {
        boundaries,
        quantity_loss: (total - T::from_usize(u).expect("count")).abs(),
    })
}

/// One optimizer step on the CIF head alone, minimizing the batch-mean quantity
/// loss. Encoder outputs are taken as fixed inputs. Returns the loss before the
/// update.
pub fn cif_pretrain_step<T: Scalar>(
    store: &mut ParamStore<T>,
    p: &CifParams,
    adam: &mut Adam<T>,
    batch: &[(Tensor<T>, usize)],
) -> Result<T> {
    if batch.is_empty() {
        return Err(Error::Invalid("empty CIF batch".into()));
    }
    let g = Graph::new();
    let b = store.bind(&g)?;
    let mut terms = Vec::with_capacity(batch.len());
    for (h, u) in batch {
        let hv = g.constant(h.clone())?;
        terms.push(quantity_loss_graph(&g, &b, p, hv, *u)?);
    }
    let stacked = g.concat_rows(&terms)?;
    let mean = g.scale(g.sum(stacked)?, T::one() / T::from_usize(batch.len()).expect("count"))?;
    let loss = g.scalar_value(mean);
    let grads = g.backward(mean)?;
    let mut update: Vec<Option<Tensor<T>>> = vec![None; store.len()];
    for id in p.ids() {
        update[id.index()] = Some(grads.wrt(b[id], store.get(id).shape()));
    }
    adam.step(store, &update)?;
    Ok(loss)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_labels_no_boundaries() {
        let mut store = ParamStore::<f64>::new();
        let p = CifParams::register(&mut store, 3, &mut crate::rng::run_rng(1));
        let h = Tensor::zeros(&[4, 3]);
        let a = cif_align(&store, &p, &h, 0).unwrap();
        assert!(a.boundaries.is_empty());
        assert!((a.quantity_loss - 2.0).abs() < 1e-12);
    }

    #[test]
    fn uniform_weights_fire_evenly() {
        assert_eq!(fire(&[0.3f64; 8], 2).unwrap(), vec![4, 8]);
        assert_eq!(fire(&[0.9f64; 8], 2).unwrap(), vec![4, 8]);
    }

    #[test]
    fn more_labels_than_frames_fire_repeatedly() {
        assert_eq!(fire(&[0.5f64, 0.5], 4).unwrap(), vec![1, 1, 2, 2]);
    }

    #[test]
    fn labels_without_frames() {
        assert!(matches!(fire::<f64>(&[], 2), Err(Error::TooShort(_))));
    }
}
