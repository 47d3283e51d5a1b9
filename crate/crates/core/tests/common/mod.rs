//! Test-side reference transducer built from raw parameter values by name, plus
//! small fixtures shared by the integration tests.
#![allow(dead_code)]

use rand::Rng;
use rwkv_asr::params::ParamStore;
use rwkv_asr::rng::{run_rng, RunRng};
use rwkv_asr::transducer::{TransducerParams, Vocab};
use rwkv_asr::Tensor;

pub fn random_tensor(rng: &mut RunRng, shape: &[usize], scale: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-scale..scale)).collect()).unwrap()
}

/// A transducer with every weight drawn from `U(-scale, scale)`.
pub fn random_transducer(seed: u64, vocab: usize, d_io: usize, d_pred: usize, d_joint: usize, scale: f64) -> (ParamStore<f64>, TransducerParams) {
    let mut rng = run_rng(seed);
    let mut store = ParamStore::new();
    let tp = TransducerParams::register(&mut store, Vocab::new(vocab).unwrap(), d_io, d_pred, d_joint, &mut rng);
    for p in store.iter_mut() {
        let shape = p.value.shape().to_vec();
        p.value = random_tensor(&mut rng, &shape, scale);
    }
    (store, tp)
}

fn matrix(store: &ParamStore<f64>, name: &str) -> Vec<Vec<f64>> {
    let t = store.get(store.find(name).unwrap_or_else(|| panic!("missing {name}")));
    if t.rank() == 1 {
        return vec![t.data().to_vec()];
    }
    (0..t.rows()).map(|i| t.row(i).to_vec()).collect()
}

fn mv(w: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    w.iter().map(|r| r.iter().zip(x).map(|(a, b)| a * b).sum()).collect()
}

/// Plain-arithmetic transducer: GRU-style predictor and a tanh joint with softmax output.
pub struct Reference {
    emb: Vec<Vec<f64>>,
    wz: Vec<Vec<f64>>,
    uz: Vec<Vec<f64>>,
    bz: Vec<f64>,
    wc: Vec<Vec<f64>>,
    uc: Vec<Vec<f64>>,
    bc: Vec<f64>,
    we: Vec<Vec<f64>>,
    wp: Vec<Vec<f64>>,
    bj: Vec<f64>,
    wo: Vec<Vec<f64>>,
}

impl Reference {
    pub fn from_store(store: &ParamStore<f64>) -> Self {
        let m = |n: &str| matrix(store, n);
        Self {
            emb: m("predictor.embedding"),
            wz: m("predictor.w_z"),
            uz: m("predictor.u_z"),
            bz: m("predictor.b_z").remove(0),
            wc: m("predictor.w_c"),
            uc: m("predictor.u_c"),
            bc: m("predictor.b_c").remove(0),
            we: m("joint.w_enc"),
            wp: m("joint.w_pred"),
            bj: m("joint.b").remove(0),
            wo: m("joint.w_out"),
        }
    }

    /// Predictor outputs after the start symbol and after each label.
    pub fn predictions(&self, y: &[usize]) -> Vec<Vec<f64>> {
        let d = self.bz.len();
        let mut h = vec![0.0; d];
        let mut out = Vec::new();
        for &s in std::iter::once(&0).chain(y) {
            let e = &self.emb[s];
            let (zx, zh, cx, ch) = (mv(&self.wz, e), mv(&self.uz, &h), mv(&self.wc, e), mv(&self.uc, &h));
            for i in 0..d {
                let z = 1.0 / (1.0 + (-(zx[i] + zh[i] + self.bz[i])).exp());
                let c = (cx[i] + ch[i] + self.bc[i]).tanh();
                h[i] = (1.0 - z) * h[i] + z * c;
            }
            out.push(h.clone());
        }
        out
    }

    /// Output distribution (probabilities, not logs) over blank and labels.
    pub fn probs(&self, h_t: &[f64], g_u: &[f64]) -> Vec<f64> {
        let (a, b) = (mv(&self.we, h_t), mv(&self.wp, g_u));
        let hidden: Vec<f64> = (0..a.len()).map(|i| (a[i] + b[i] + self.bj[i]).tanh()).collect();
        let logits = mv(&self.wo, &hidden);
        let m = logits.iter().cloned().fold(f64::MIN, f64::max);
        let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
        let z: f64 = e.iter().sum();
        e.into_iter().map(|x| x / z).collect()
    }

    /// `P(y | h)` summed over alignments whose visited cells all satisfy
    /// `allowed(t, u)` (0-based frame, labels emitted so far), and the number of
    /// such alignments.
    pub fn likelihood(&self, h: &Tensor<f64>, y: &[usize], allowed: impl Fn(usize, usize) -> bool) -> (f64, usize) {
        let preds = self.predictions(y);
        let (t_len, u_len) = (h.rows(), y.len());
        let probs: Vec<Vec<Vec<f64>>> = (0..t_len)
            .map(|t| (0..=u_len).map(|u| self.probs(h.row(t), &preds[u])).collect())
            .collect();
        let mut total = 0.0;
        let mut paths = 0;
        let mut stack = vec![(0usize, 0usize, 1.0f64)];
        while let Some((t, u, p)) = stack.pop() {
            if !allowed(t, u) {
                continue;
            }
            let here = &probs[t][u];
            if u < u_len {
                stack.push((t, u + 1, p * here[y[u]]));
            }
            if t + 1 < t_len {
                stack.push((t + 1, u, p * here[0]));
            } else if u == u_len {
                total += p * here[0];
                paths += 1;
            }
        }
        (total, paths)
    }
}

pub fn binomial(n: usize, k: usize) -> usize {
    (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

/// Labels in `1..=vocab` of the given length.
pub fn random_labels(rng: &mut RunRng, vocab: usize, len: usize) -> Vec<usize> {
    (0..len).map(|_| rng.random_range(1..=vocab)).collect()
}

/// Redraws every parameter from `U(-scale, scale)`; clamped ones land inside their box.
pub fn scramble(store: &mut ParamStore<f64>, rng: &mut RunRng, scale: f64) {
    for p in store.iter_mut() {
        let shape = p.value.shape().to_vec();
        let mut v = random_tensor(rng, &shape, scale);
        if let Some((lo, hi)) = p.clamp {
            v = v.map(|x| lo + (hi - lo) * (0.05 + 0.9 * (x / scale + 1.0) / 2.0));
        }
        p.value = v;
    }
}
