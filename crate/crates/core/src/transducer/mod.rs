//! Transducer model parts: label prediction network, joint network, and the
//! alignment-lattice loss.

pub mod loss;

use crate::error::{Error, Result};
use crate::numerics::kernels::{self, matvec, sigmoid_scalar};
use crate::numerics::{Graph, Scalar, Tensor, Var};
use crate::params::{Bound, ParamId, ParamStore};
use crate::rng::RunRng;

pub use loss::{
    lattice_loss_graph, rnnt_loss, rnnt_loss_bruteforce, rnnt_loss_graph, AlignmentLattice, BruteForce,
    LossOutput, BRUTE_FORCE_BUDGET,
};

/// Output alphabet: labels `1..=size`, blank at index 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Vocab {
    pub size: usize,
}

impl Vocab {
    pub const BLANK: usize = 0;

    pub fn new(size: usize) -> Result<Self> {
        if size == 0 {
            return Err(Error::Invalid("vocabulary needs at least one label".into()));
        }
        Ok(Self { size })
    }

    /// Labels plus blank.
    pub fn num_outputs(self) -> usize {
        self.size + 1
    }

    pub fn check(self, labels: &[usize]) -> Result<()> {
        match labels.iter().find(|&&l| l == Self::BLANK || l > self.size) {
            Some(&label) => Err(Error::LabelOutOfRange {
                label,
                vocab: self.size,
            }),
            None => Ok(()),
        }
    }
}

/// Embedding plus one gated recurrent layer:
/// `z = σ(W_z e + U_z h + b_z)`, `c = tanh(W_c e + U_c h + b_c)`, `h ← h + z ⊙ (c − h)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictorParams {
    pub d_pred: usize,
    pub embedding: ParamId,
    pub w_z: ParamId,
    pub u_z: ParamId,
    pub b_z: ParamId,
    pub w_c: ParamId,
    pub u_c: ParamId,
    pub b_c: ParamId,
}

impl PredictorParams {
    pub fn register<T: Scalar>(store: &mut ParamStore<T>, vocab: Vocab, d_pred: usize, rng: &mut RunRng) -> Self {
        let n = vocab.num_outputs();
        let d = d_pred;
        Self {
            d_pred,
            embedding: store.add_uniform("predictor.embedding", &[n, d], 1, rng),
            w_z: store.add_uniform("predictor.w_z", &[d, d], d, rng),
            u_z: store.add_uniform("predictor.u_z", &[d, d], d, rng),
            b_z: store.add("predictor.b_z", Tensor::zeros(&[d])),
            w_c: store.add_uniform("predictor.w_c", &[d, d], d, rng),
            u_c: store.add_uniform("predictor.u_c", &[d, d], d, rng),
            b_c: store.add("predictor.b_c", Tensor::zeros(&[d])),
        }
    }
}

/// Recurrent state of the prediction network; `h` is also the output `g_u`.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictorState<T> {
    pub h: Vec<T>,
}

impl<T: Scalar> PredictorState<T> {
    /// `h_{-1} = 0`, before the start symbol has been fed.
    pub fn zero(d_pred: usize) -> Self {
        Self {
            h: vec![T::zero(); d_pred],
        }
    }
}

/// Feeds one symbol (blank as the start symbol, or a label) and returns the new output.
pub fn predictor_step<T: Scalar>(
    store: &ParamStore<T>,
    p: &PredictorParams,
    symbol: usize,
    state: &mut PredictorState<T>,
) -> Result<Vec<T>> {
    let emb = store.get(p.embedding);
    if symbol >= emb.rows() {
        return Err(Error::LabelOutOfRange {
            label: symbol,
            vocab: emb.rows() - 1,
        });
    }
    let e = emb.row(symbol);
    let zx = matvec(store.get(p.w_z), e);
    let cx = matvec(store.get(p.w_c), e);
    let zh = matvec(store.get(p.u_z), &state.h);
    let ch = matvec(store.get(p.u_c), &state.h);
    let (bz, bc) = (store.get(p.b_z).data(), store.get(p.b_c).data());
    for i in 0..p.d_pred {
        let z = sigmoid_scalar(zx[i] + bz[i] + zh[i]);
        let c = (cx[i] + bc[i] + ch[i]).tanh();
        let h = state.h[i];
        state.h[i] = h + z * (c - h);
    }
    Ok(state.h.clone())
}

/// `[g_0; g_1; …; g_U]` where `g_u` has seen the start symbol and `y_1..y_u`.
pub fn predict_states<T: Scalar>(store: &ParamStore<T>, p: &PredictorParams, y: &[usize]) -> Result<Tensor<T>> {
    let mut state = PredictorState::zero(p.d_pred);
    let mut rows = Vec::with_capacity(y.len() + 1);
    rows.push(predictor_step(store, p, Vocab::BLANK, &mut state)?);
    for &label in y {
        if label == Vocab::BLANK {
            return Err(Error::LabelOutOfRange { label, vocab: store.get(p.embedding).rows() - 1 });
        }
        rows.push(predictor_step(store, p, label, &mut state)?);
    }
    Tensor::from_rows(&rows)
}

pub fn predict_states_graph<T: Scalar>(g: &Graph<T>, b: &Bound, p: &PredictorParams, y: &[usize]) -> Result<Var> {
    let mut symbols = Vec::with_capacity(y.len() + 1);
    symbols.push(Vocab::BLANK);
    symbols.extend_from_slice(y);
    let e = g.gather_rows(b[p.embedding], symbols)?;
    let ez = g.add_row(g.linear(e, b[p.w_z])?, b[p.b_z])?;
    let ec = g.add_row(g.linear(e, b[p.w_c])?, b[p.b_c])?;
    let mut h: Option<Var> = None;
    let mut outs = Vec::with_capacity(y.len() + 1);
    for u in 0..=y.len() {
        let mut zr = g.row(ez, u)?;
        let mut cr = g.row(ec, u)?;
        if let Some(h) = h {
            zr = g.add(zr, g.linear(h, b[p.u_z])?)?;
            cr = g.add(cr, g.linear(h, b[p.u_c])?)?;
        }
        let z = g.sigmoid(zr)?;
        let c = g.tanh(cr)?;
        let next = match h {
            Some(h) => g.add(h, g.mul(z, g.sub(c, h)?)?)?,
            None => g.mul(z, c)?,
        };
        outs.push(next);
        h = Some(next);
    }
    g.concat_rows(&outs)
}

/// `log softmax(W_out · tanh(W_enc h_t + W_pred g_u + b))`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointParams {
    pub d_joint: usize,
    pub w_enc: ParamId,
    pub w_pred: ParamId,
    pub b: ParamId,
    pub w_out: ParamId,
}

impl JointParams {
    pub fn register<T: Scalar>(
        store: &mut ParamStore<T>,
        vocab: Vocab,
        d_io: usize,
        d_pred: usize,
        d_joint: usize,
        rng: &mut RunRng,
    ) -> Self {
        Self {
            d_joint,
            w_enc: store.add_uniform("joint.w_enc", &[d_joint, d_io], d_io, rng),
            w_pred: store.add_uniform("joint.w_pred", &[d_joint, d_pred], d_pred, rng),
            b: store.add("joint.b", Tensor::zeros(&[d_joint])),
            w_out: store.add_uniform("joint.w_out", &[vocab.num_outputs(), d_joint], d_joint, rng),
        }
    }

    /// `W_enc h_t + b`, reusable across every `u` at frame `t`.
    pub fn project_enc<T: Scalar>(&self, store: &ParamStore<T>, h_t: &[T]) -> Vec<T> {
        let mut out = matvec(store.get(self.w_enc), h_t);
        for (o, &b) in out.iter_mut().zip(store.get(self.b).data()) {
            *o += b;
        }
        out
    }

    pub fn project_pred<T: Scalar>(&self, store: &ParamStore<T>, g_u: &[T]) -> Vec<T> {
        matvec(store.get(self.w_pred), g_u)
    }

    pub fn from_projections<T: Scalar>(&self, store: &ParamStore<T>, enc: &[T], pred: &[T]) -> Vec<T> {
        let hidden: Vec<T> = enc.iter().zip(pred).map(|(&a, &b)| (a + b).tanh()).collect();
        let logits = matvec(store.get(self.w_out), &hidden);
        let n = logits.len();
        kernels::log_softmax(&Tensor::new(vec![1, n], logits).expect("row")).into_data()
    }
}

pub fn joint_log_probs<T: Scalar>(store: &ParamStore<T>, p: &JointParams, h_t: &[T], g_u: &[T]) -> Result<Vec<T>> {
    let (we, wp) = (store.get(p.w_enc), store.get(p.w_pred));
    if h_t.len() != we.cols() || g_u.len() != wp.cols() {
        return Err(crate::error::shape_err(
            "joint_log_probs",
            format!("h_t {} / g_u {} against {:?} / {:?}", h_t.len(), g_u.len(), we.shape(), wp.shape()),
        ));
    }
    Ok(p.from_projections(store, &p.project_enc(store, h_t), &p.project_pred(store, g_u)))
}

/// Prediction network, joint network and vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct TransducerParams {
    pub vocab: Vocab,
    pub predictor: PredictorParams,
    pub joint: JointParams,
}

impl TransducerParams {
    pub fn register<T: Scalar>(
        store: &mut ParamStore<T>,
        vocab: Vocab,
        d_io: usize,
        d_pred: usize,
        d_joint: usize,
        rng: &mut RunRng,
    ) -> Self {
        let predictor = PredictorParams::register(store, vocab, d_pred, rng);
        let joint = JointParams::register(store, vocab, d_io, d_pred, d_joint, rng);
        Self {
            vocab,
            predictor,
            joint,
        }
    }
}
