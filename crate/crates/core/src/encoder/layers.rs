use crate::encoder::state::{LayerState, StreamState};
use crate::encoder::wkv::{wkv_graph, wkv_step};
use crate::encoder::{ChannelMixParams, Dropout, EncoderParams, Mode, RwkvLayerParams, TimeMixParams, LAYER_NORM_EPS};
use crate::error::{shape_err, Result};
use crate::numerics::kernels::{self, matvec, sigmoid_scalar, squared_relu_scalar, token_shift};
use crate::numerics::{Graph, Scalar, Tensor, Var};
use crate::params::{Bound, ParamStore};

fn eps<T: Scalar>() -> T {
    T::from_f64c(LAYER_NORM_EPS)
}

// ---- parallel (taped) evaluation --------------------------------------------

/// `o_t = W_o · (σ(r_t) ⊙ wkv_t)` over a whole sequence `x: [T×d_io]`.
pub fn time_mixing_graph<T: Scalar>(g: &Graph<T>, b: &Bound, p: &TimeMixParams, x: Var) -> Result<Var> {
    let prev = g.shift_rows(x)?;
    let xr = g.mix(x, prev, b[p.mu_r])?;
    let xk = g.mix(x, prev, b[p.mu_k])?;
    let xv = g.mix(x, prev, b[p.mu_v])?;
    let r = g.linear(xr, b[p.w_r])?;
    let k = g.linear(xk, b[p.w_k])?;
    let v = g.linear(xv, b[p.w_v])?;
    let decay = g.exp(b[p.w_raw])?;
    let wkv = wkv_graph(g, k, v, decay, b[p.u])?;
    let gate = g.sigmoid(r)?;
    let gated = g.mul(gate, wkv)?;
    g.linear(gated, b[p.w_o])
}

/// `o′_t = σ(r′_t) ⊙ (W′_v · max(k′_t, 0)²)` over a whole sequence.
pub fn channel_mixing_graph<T: Scalar>(g: &Graph<T>, b: &Bound, p: &ChannelMixParams, x: Var) -> Result<Var> {
    let prev = g.shift_rows(x)?;
    let xr = g.mix(x, prev, b[p.mu_r])?;
    let xk = g.mix(x, prev, b[p.mu_k])?;
    let r = g.linear(xr, b[p.w_r])?;
    let k = g.linear(xk, b[p.w_k])?;
    let hidden = g.squared_relu(k)?;
    let val = g.linear(hidden, b[p.w_v])?;
    let gate = g.sigmoid(r)?;
    g.mul(gate, val)
}

fn maybe_dropout<T: Scalar>(g: &Graph<T>, x: Var, dropout: Option<&mut Dropout<'_>>) -> Result<Var> {
    match dropout {
        Some(d) if d.rate > 0.0 => {
            let mask = d.mask(&g.shape(x));
            g.mul_const(x, mask)
        }
        _ => Ok(x),
    }
}

/// `x′ = x + Dropout(TimeMixing(LN(x)))`, `x″ = x′ + Dropout(ChannelMixing(LN(x′)))`.
pub fn rwkv_block_graph<T: Scalar>(
    g: &Graph<T>,
    b: &Bound,
    layer: &RwkvLayerParams,
    x: Var,
    mut dropout: Option<&mut Dropout<'_>>,
) -> Result<Var> {
    let n1 = g.layer_norm(x, b[layer.ln_time_gain], b[layer.ln_time_bias], eps())?;
    let t = time_mixing_graph(g, b, &layer.time_mix, n1)?;
    let t = maybe_dropout(g, t, dropout.as_deref_mut())?;
    let x1 = g.add(x, t)?;
    let n2 = g.layer_norm(x1, b[layer.ln_chan_gain], b[layer.ln_chan_bias], eps())?;
    let c = channel_mixing_graph(g, b, &layer.channel_mix, n2)?;
    let c = maybe_dropout(g, c, dropout)?;
    g.add(x1, c)
}

pub fn encode_graph<T: Scalar>(
    g: &Graph<T>,
    b: &Bound,
    params: &EncoderParams,
    x: Var,
    mut dropout: Option<&mut Dropout<'_>>,
) -> Result<Var> {
    let shape = g.shape(x);
    if shape.len() != 2 || shape[1] != params.config.d_io {
        return Err(shape_err("encode", format!("input {shape:?}, d_io {}", params.config.d_io)));
    }
    params
        .layers
        .iter()
        .try_fold(x, |h, layer| rwkv_block_graph(g, b, layer, h, dropout.as_deref_mut()))
}

// ---- recurrent evaluation ----------------------------------------------------

fn mat<T: Scalar>(store: &ParamStore<T>, id: crate::params::ParamId) -> &Tensor<T> {
    store.get(id)
}

/// One frame of time mixing; `x_t` is the normalized block input.
pub fn time_mixing_step<T: Scalar>(store: &ParamStore<T>, p: &TimeMixParams, x_t: &[T], state: &mut LayerState<T>) -> Result<Vec<T>> {
    let prev = &state.x_prev_time;
    let xr = token_shift(x_t, prev, mat(store, p.mu_r).data())?;
    let xk = token_shift(x_t, prev, mat(store, p.mu_k).data())?;
    let xv = token_shift(x_t, prev, mat(store, p.mu_v).data())?;
    let r = matvec(mat(store, p.w_r), &xr);
    let k = matvec(mat(store, p.w_k), &xk);
    let v = matvec(mat(store, p.w_v), &xv);
    let decay: Vec<T> = mat(store, p.w_raw).data().iter().map(|x| x.exp()).collect();
    let wkv = wkv_step(&mut state.wkv, &k, &v, &decay, mat(store, p.u).data());
    let gated: Vec<T> = r.iter().zip(&wkv).map(|(&r, &y)| sigmoid_scalar(r) * y).collect();
    state.x_prev_time.copy_from_slice(x_t);
    Ok(matvec(mat(store, p.w_o), &gated))
}

/// One frame of channel mixing; `prev` is the previous normalized input.
pub fn channel_mixing_step<T: Scalar>(store: &ParamStore<T>, p: &ChannelMixParams, x_t: &[T], prev: &mut [T]) -> Result<Vec<T>> {
    let xr = token_shift(x_t, prev, mat(store, p.mu_r).data())?;
    let xk = token_shift(x_t, prev, mat(store, p.mu_k).data())?;
    let r = matvec(mat(store, p.w_r), &xr);
    let hidden: Vec<T> = matvec(mat(store, p.w_k), &xk)
        .into_iter()
        .map(squared_relu_scalar)
        .collect();
    let val = matvec(mat(store, p.w_v), &hidden);
    prev.copy_from_slice(x_t);
    Ok(r.iter().zip(&val).map(|(&r, &v)| sigmoid_scalar(r) * v).collect())
}

pub fn rwkv_block_step<T: Scalar>(store: &ParamStore<T>, layer: &RwkvLayerParams, x_t: &[T], state: &mut LayerState<T>) -> Result<Vec<T>> {
    let n1 = kernels::layer_norm_row(
        x_t,
        store.get(layer.ln_time_gain).data(),
        store.get(layer.ln_time_bias).data(),
        eps(),
    );
    let t = time_mixing_step(store, &layer.time_mix, &n1, state)?;
    let x1: Vec<T> = x_t.iter().zip(&t).map(|(&a, &b)| a + b).collect();
    let n2 = kernels::layer_norm_row(
        &x1,
        store.get(layer.ln_chan_gain).data(),
        store.get(layer.ln_chan_bias).data(),
        eps(),
    );
    let c = channel_mixing_step(store, &layer.channel_mix, &n2, &mut state.x_prev_chan)?;
    Ok(x1.iter().zip(&c).map(|(&a, &b)| a + b).collect())
}

/// Advances the whole stack by one frame.
pub fn encode_step<T: Scalar>(store: &ParamStore<T>, params: &EncoderParams, x_t: &[T], state: &mut StreamState<T>) -> Result<Vec<T>> {
    if x_t.len() != params.config.d_io {
        return Err(shape_err("encode_step", format!("frame width {} vs d_io {}", x_t.len(), params.config.d_io)));
    }
    let mut h = x_t.to_vec();
    for (layer, st) in params.layers.iter().zip(state.layers.iter_mut()) {
        h = rwkv_block_step(store, layer, &h, st)?;
    }
    Ok(h)
}

// ---- mode dispatch over plain tensors ----------------------------------------

fn run_graph<T: Scalar>(store: &ParamStore<T>, x: &Tensor<T>, f: impl FnOnce(&Graph<T>, &Bound, Var) -> Result<Var>) -> Result<Tensor<T>> {
    let g = Graph::new();
    let b = store.bind(&g)?;
    let xv = g.constant(x.clone())?;
    let out = f(&g, &b, xv)?;
    let v = g.value(out).clone();
    Ok(v)
}

fn run_rows<T: Scalar>(x: &Tensor<T>, mut f: impl FnMut(&[T]) -> Result<Vec<T>>) -> Result<Tensor<T>> {
    if x.rank() != 2 {
        return Err(shape_err("recurrent", format!("{:?}", x.shape())));
    }
    let rows = (0..x.rows()).map(|t| f(x.row(t))).collect::<Result<Vec<_>>>()?;
    if rows.is_empty() {
        return Ok(Tensor::zeros(&[0, x.cols()]));
    }
    Tensor::from_rows(&rows)
}

pub fn time_mixing<T: Scalar>(store: &ParamStore<T>, p: &TimeMixParams, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
    match mode {
        Mode::Parallel => run_graph(store, x, |g, b, xv| time_mixing_graph(g, b, p, xv)),
        Mode::Recurrent => {
            let d_att = store.get(p.w_r).rows();
            let mut st = LayerState::fresh(x.cols(), d_att);
            run_rows(x, |row| time_mixing_step(store, p, row, &mut st))
        }
    }
}

pub fn channel_mixing<T: Scalar>(store: &ParamStore<T>, p: &ChannelMixParams, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
    match mode {
        Mode::Parallel => run_graph(store, x, |g, b, xv| channel_mixing_graph(g, b, p, xv)),
        Mode::Recurrent => {
            let mut prev = vec![T::zero(); x.cols()];
            run_rows(x, |row| channel_mixing_step(store, p, row, &mut prev))
        }
    }
}

/// One block with dropout inactive.
pub fn rwkv_block<T: Scalar>(store: &ParamStore<T>, layer: &RwkvLayerParams, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
    match mode {
        Mode::Parallel => run_graph(store, x, |g, b, xv| rwkv_block_graph(g, b, layer, xv, None)),
        Mode::Recurrent => {
            let d_att = store.get(layer.time_mix.w_r).rows();
            let mut st = LayerState::fresh(x.cols(), d_att);
            run_rows(x, |row| rwkv_block_step(store, layer, row, &mut st))
        }
    }
}

/// Full encoder over `features: [T×d_io]` with dropout inactive.
pub fn encode<T: Scalar>(store: &ParamStore<T>, params: &EncoderParams, features: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
    match mode {
        Mode::Parallel => run_graph(store, features, |g, b, xv| encode_graph(g, b, params, xv, None)),
        Mode::Recurrent => {
            let mut st = StreamState::fresh(&params.config);
            run_rows(features, |row| encode_step(store, params, row, &mut st))
        }
    }
}
