//! Transducer negative log-likelihood over the alignment lattice.
//!
//! The forward variables are built as scalar tape nodes, so gradients come from
//! the reverse sweep of [`Graph::backward`]. The same routine serves the full
//! lattice and a pruned band of `u`-intervals.

use crate::error::{shape_err, Error, Result};
use crate::numerics::kernels::logsumexp_slice;
use crate::numerics::{Graph, Scalar, Tensor, Var};
use crate::params::{Bound, ParamStore};
use crate::transducer::{joint_log_probs, predict_states, predict_states_graph, TransducerParams};

/// Largest `T + U` that [`rnnt_loss_bruteforce`] will enumerate.
pub const BRUTE_FORCE_BUDGET: usize = 14;

#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentLattice<T> {
    /// `[(T+1)×(U+1)]`, 1-based in `t`: row 0 is unused, `log_alpha(1,0) = 0`.
    /// Cells that were never evaluated hold the sentinel.
    pub log_alpha: Tensor<T>,
    /// Joint-network evaluations performed.
    pub evaluated_cells: usize,
}

#[derive(Debug, Clone)]
pub struct LossOutput<T> {
    /// Scalar node holding the nll.
    pub nll: Var,
    pub lattice: AlignmentLattice<T>,
}

/// Loss over the cells `ranges[t] = (lo, hi)` (inclusive, 0-based `t`).
pub fn lattice_loss_graph<T: Scalar>(
    g: &Graph<T>,
    b: &Bound,
    tp: &TransducerParams,
    h: Var,
    y: &[usize],
    ranges: &[(usize, usize)],
) -> Result<LossOutput<T>> {
    tp.vocab.check(y)?;
    let shape = g.shape(h);
    if shape.len() != 2 {
        return Err(shape_err("transducer loss", format!("encoder output {shape:?}")));
    }
    let (t_len, u_len) = (shape[0], y.len());
    if t_len == 0 {
        return Err(Error::TooShort("transducer loss needs at least one frame".into()));
    }
    if ranges.len() != t_len {
        return Err(shape_err("transducer loss", format!("{} ranges for {t_len} frames", ranges.len())));
    }
    if let Some((t, _)) = ranges.iter().enumerate().find(|(_, &(lo, hi))| lo > hi || hi > u_len) {
        return Err(Error::Invalid(format!("bad u-range {:?} at frame {}", ranges[t], t + 1)));
    }

    let mut base = Vec::with_capacity(t_len);
    let mut pairs = Vec::new();
    for (t, &(lo, hi)) in ranges.iter().enumerate() {
        base.push(pairs.len());
        pairs.extend((lo..=hi).map(|u| (t, u)));
    }
    let cells = pairs.len();

    let jp = &tp.joint;
    let preds = predict_states_graph(g, b, &tp.predictor, y)?;
    let enc_proj = g.add_row(g.linear(h, b[jp.w_enc])?, b[jp.b])?;
    let pred_proj = g.linear(preds, b[jp.w_pred])?;
    let hidden = g.tanh(g.pair_sum(enc_proj, pred_proj, pairs.clone())?)?;
    let lp = g.log_softmax(g.linear(hidden, b[jp.w_out])?)?;

    // Gather every log-prob the recursion needs into one short vector.
    let width = tp.vocab.num_outputs();
    let mut flat = Vec::with_capacity(2 * cells);
    let mut slots = Vec::with_capacity(cells);
    for (n, &(_, u)) in pairs.iter().enumerate() {
        let blank = flat.len();
        flat.push(n * width);
        let emit = (u < u_len).then(|| {
            flat.push(n * width + y[u]);
            flat.len() - 1
        });
        slots.push((blank, emit));
    }
    let sel = g.pick(lp, flat)?;

    let cell = |t: usize, u: usize| -> Option<usize> {
        let (lo, hi) = ranges[t];
        (lo..=hi).contains(&u).then(|| base[t] + u - lo)
    };
    let mut alpha: Vec<Option<Var>> = vec![None; cells];
    let mut log_alpha = Tensor::full(&[t_len + 1, u_len + 1], T::neg_sentinel());
    for t in 0..t_len {
        let (lo, hi) = ranges[t];
        for u in lo..=hi {
            let n = base[t] + u - lo;
            let value = if t == 0 && u == 0 {
                Some(g.constant(Tensor::scalar(T::zero()))?)
            } else {
                let from_blank = match t.checked_sub(1).and_then(|tp| cell(tp, u)) {
                    Some(m) => match alpha[m] {
                        Some(a) => Some(g.add(a, g.element(sel, slots[m].0)?)?),
                        None => None,
                    },
                    None => None,
                };
                let from_emit = match u.checked_sub(1).and_then(|up| cell(t, up)) {
                    Some(m) => match (alpha[m], slots[m].1) {
                        (Some(a), Some(e)) => Some(g.add(a, g.element(sel, e)?)?),
                        _ => None,
                    },
                    None => None,
                };
                match (from_blank, from_emit) {
                    (Some(a), Some(c)) => Some(g.logaddexp(a, c)?),
                    (a, c) => a.or(c),
                }
            };
            if let Some(v) = value {
                log_alpha.data_mut()[(t + 1) * (u_len + 1) + u] = g.scalar_value(v);
            }
            alpha[n] = value;
        }
    }

    let last = cell(t_len - 1, u_len).ok_or(Error::Unreachable)?;
    let a = alpha[last].ok_or(Error::Unreachable)?;
    let total = g.add(a, g.element(sel, slots[last].0)?)?;
    let nll = g.scale(total, -T::one())?;
    Ok(LossOutput {
        nll,
        lattice: AlignmentLattice {
            log_alpha,
            evaluated_cells: cells,
        },
    })
}

/// Full-lattice loss: every frame covers `u ∈ [0, U]`.
pub fn rnnt_loss_graph<T: Scalar>(
    g: &Graph<T>,
    b: &Bound,
    tp: &TransducerParams,
    h: Var,
    y: &[usize],
) -> Result<LossOutput<T>> {
    let t_len = g.shape(h).first().copied().unwrap_or(0);
    let ranges = vec![(0, y.len()); t_len];
    lattice_loss_graph(g, b, tp, h, y, &ranges)
}

/// Evaluates the full-lattice nll for a fixed encoder output.
pub fn rnnt_loss<T: Scalar>(
    store: &ParamStore<T>,
    tp: &TransducerParams,
    h: &Tensor<T>,
    y: &[usize],
) -> Result<(T, AlignmentLattice<T>)> {
    let g = Graph::new();
    let b = store.bind(&g)?;
    let hv = g.constant(h.clone())?;
    let out = rnnt_loss_graph(&g, &b, tp, hv, y)?;
    Ok((g.scalar_value(out.nll), out.lattice))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BruteForce<T> {
    pub nll: T,
    pub paths: usize,
}

/// Sums over every alignment explicitly: all orderings of `T` blanks and `U`
/// labels that finish with a blank at the last frame.
pub fn rnnt_loss_bruteforce<T: Scalar>(
    store: &ParamStore<T>,
    tp: &TransducerParams,
    h: &Tensor<T>,
    y: &[usize],
) -> Result<BruteForce<T>> {
    tp.vocab.check(y)?;
    let (t_len, u_len) = (h.rows(), y.len());
    if t_len + u_len > BRUTE_FORCE_BUDGET {
        return Err(Error::BudgetExceeded(t_len + u_len));
    }
    if t_len == 0 {
        return Err(Error::TooShort("transducer loss needs at least one frame".into()));
    }
    let preds = predict_states(store, &tp.predictor, y)?;
    let mut lp = Vec::with_capacity(t_len);
    for t in 0..t_len {
        let row = (0..=u_len)
            .map(|u| joint_log_probs(store, &tp.joint, h.row(t), preds.row(u)))
            .collect::<Result<Vec<_>>>()?;
        lp.push(row);
    }

    let mut scores = Vec::new();
    let mut stack = vec![(0usize, 0usize, T::zero())];
    while let Some((t, u, acc)) = stack.pop() {
        let here = &lp[t][u];
        if t == t_len - 1 && u == u_len {
            scores.push(acc + here[0]);
            continue;
        }
        if u < u_len {
            stack.push((t, u + 1, acc + here[y[u]]));
        }
        if t + 1 < t_len {
            stack.push((t + 1, u, acc + here[0]));
        }
    }
    Ok(BruteForce {
        nll: -logsumexp_slice(&scores),
        paths: scores.len(),
    })
}
