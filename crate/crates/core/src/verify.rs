//! Self-checks run by `rwkv-asr verify`: mode equivalence, gradients against
//! finite differences, and loss oracles.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::bat::{bat_loss, bat_loss_graph, build_band, cif_align, fire, quantity_loss_graph, PruneBand};
use crate::encoder::{encode, wkv_parallel, wkv_step, EncoderConfig, EncoderParams, Mode, WkvState};
use crate::error::{Error, Result};
use crate::frontend::{conv_subsample, StreamingSubsampler, SubsampleParams};
use crate::numerics::gradcheck::check_gradients;
use crate::numerics::{Scalar, Tensor};
use crate::params::{Bound, ParamStore};
use crate::rng::{run_rng, RunRng};
use crate::runtime::{
    compute_latency, decode_features, report_left_context, EncoderKind, LeftContext, Model, ModelConfig,
};
use crate::transducer::{
    predict_states, predict_states_graph, rnnt_loss, rnnt_loss_bruteforce, rnnt_loss_graph, TransducerParams, Vocab,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Equivalence,
    Gradients,
    Oracle,
    All,
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "equivalence" => Ok(Self::Equivalence),
            "gradients" => Ok(Self::Gradients),
            "oracle" => Ok(Self::Oracle),
            "all" => Ok(Self::All),
            _ => Err(Error::Invalid(format!("unknown suite {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mark = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{mark} {}: {}", self.name, self.detail)
    }
}

fn check(name: &'static str, passed: bool, detail: String) -> Check {
    Check { name, passed, detail }
}

pub fn run_suite(suite: Suite, seed: u64) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    if matches!(suite, Suite::Equivalence | Suite::All) {
        out.extend(equivalence(seed)?);
    }
    if matches!(suite, Suite::Gradients | Suite::All) {
        out.extend(gradients(seed)?);
    }
    if matches!(suite, Suite::Oracle | Suite::All) {
        out.extend(oracle(seed)?);
    }
    Ok(out)
}

fn random_tensor<T: Scalar>(rng: &mut RunRng, shape: &[usize], scale: f64) -> Tensor<T> {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| T::from_f64c(rng.random_range(-scale..scale))).collect())
        .expect("shape")
}

fn encoder_gap<T: Scalar>(seed: u64, frames: usize) -> Result<f64> {
    let mut rng = run_rng(seed);
    let mut store = ParamStore::<T>::new();
    let params = EncoderParams::register(&mut store, EncoderConfig::DESK, &mut rng);
    let x = random_tensor::<T>(&mut rng, &[frames, EncoderConfig::DESK.d_io], 1.0);
    let a = encode(&store, &params, &x, Mode::Parallel)?;
    let b = encode(&store, &params, &x, Mode::Recurrent)?;
    Ok(a.max_abs_diff(&b).to_f64().unwrap_or(f64::INFINITY))
}

/// Small model with random (non-default) parameter values everywhere.
pub fn tiny_model(seed: u64, feat_dim: usize) -> Result<Model<f64>> {
    let mut c = ModelConfig::default();
    c.encoder = EncoderConfig {
        d_io: 6,
        d_att: 5,
        d_linear: 7,
        num_blocks: 2,
        dropout_rate: 0.0,
    };
    c.vocab = 3;
    c.d_pred = 4;
    c.d_joint = 5;
    c.conv_channels = 2;
    c.feat_dim = feat_dim;
    let mut rng = run_rng(seed);
    let mut m = Model::new(c, &mut rng)?;
    for p in m.store.iter_mut() {
        let shape = p.value.shape().to_vec();
        let mut v = random_tensor::<f64>(&mut rng, &shape, 0.8);
        if let Some((lo, hi)) = p.clamp {
            v = v.map(|x| lo + (hi - lo) * (x / 0.8 + 1.0) / 2.0);
        }
        p.value = v;
    }
    Ok(m)
}

fn equivalence(seed: u64) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let gap64 = (0..3).map(|s| encoder_gap::<f64>(seed + s, 200)).collect::<Result<Vec<_>>>()?;
    let gap32 = (0..3).map(|s| encoder_gap::<f32>(seed + s, 200)).collect::<Result<Vec<_>>>()?;
    let (m64, m32) = (gap64.iter().cloned().fold(0.0, f64::max), gap32.iter().cloned().fold(0.0, f64::max));
    out.push(check("encoder parallel = recurrent (f64)", m64 < 1e-10, format!("max |Δ| {m64:.2e}")));
    out.push(check("encoder parallel = recurrent (f32)", m32 < 1e-5, format!("max |Δ| {m32:.2e}")));

    let mut rng = run_rng(seed);
    let (t, d) = (64, 16);
    let k = random_tensor::<f64>(&mut rng, &[t, d], 3.0);
    let v = random_tensor::<f64>(&mut rng, &[t, d], 1.0);
    let w = random_tensor::<f64>(&mut rng, &[d], 1.0).map(|x| x.abs() + 0.05);
    let u = random_tensor::<f64>(&mut rng, &[d], 1.0);
    let par = wkv_parallel(&k, &v, &w, &u)?;
    let mut st = WkvState::fresh(d);
    let mut gap: f64 = 0.0;
    for i in 0..t {
        let y = wkv_step(&mut st, k.row(i), v.row(i), w.data(), u.data());
        gap = y.iter().zip(par.row(i)).map(|(a, b)| (a - b).abs()).fold(gap, f64::max);
    }
    out.push(check("wkv recurrence = direct sum", gap < 1e-12, format!("max |Δ| {gap:.2e}")));

    let mut store = ParamStore::<f64>::new();
    let tp = TransducerParams::register(&mut store, Vocab::new(7)?, 4, 6, 5, &mut rng);
    let y = [3, 1, 7, 7, 2];
    let steps = predict_states(&store, &tp.predictor, &y)?;
    let g = crate::Graph::new();
    let b = store.bind(&g)?;
    let batch = predict_states_graph(&g, &b, &tp.predictor, &y)?;
    let gap = g.value(batch).max_abs_diff(&steps);
    out.push(check("predictor step = batch", gap < 1e-12, format!("max |Δ| {gap:.2e}")));

    let mut store = ParamStore::<f32>::new();
    let sp = SubsampleParams::register(&mut store, 80, 4, 16, &mut rng);
    let feats = random_tensor::<f32>(&mut rng, &[57, 80], 2.0);
    let whole = conv_subsample(&store, &sp, &feats)?;
    let mut sub = StreamingSubsampler::new(&sp);
    let mut rows = Vec::new();
    for i in 0..feats.rows() {
        rows.extend(sub.push(&store, &sp, feats.row(i))?);
    }
    let same = Tensor::from_rows(&rows)? == whole;
    out.push(check("subsampling streaming = whole", same, format!("{} frames", whole.rows())));

    let model = Model::<f64>::new(
        ModelConfig {
            vocab: 6,
            ..ModelConfig::default()
        },
        &mut rng,
    )?;
    let mut mismatches = 0;
    let mut tokens = 0;
    for _ in 0..10 {
        let n = rng.random_range(7..60);
        let feats = random_tensor::<f64>(&mut rng, &[n, 80], 2.0);
        let a = decode_features(&model, &feats, Mode::Parallel)?;
        let b = decode_features(&model, &feats, Mode::Recurrent)?;
        tokens += a.len();
        mismatches += usize::from(a != b);
    }
    out.push(check(
        "offline decode = streaming decode",
        mismatches == 0,
        format!("{mismatches}/10 utterances differ, {tokens} tokens"),
    ));
    Ok(out)
}

fn gradients(seed: u64) -> Result<Vec<Check>> {
    let model = tiny_model(seed, 9)?;
    let mut rng = run_rng(seed + 1);
    let feats = random_tensor::<f64>(&mut rng, &[19, 9], 1.5);
    let y = [2, 1, 3];
    let n = model.store.len();
    let mut inputs: Vec<Tensor<f64>> = model.store.iter().map(|p| p.value.clone()).collect();
    inputs.push(feats);

    let full = check_gradients(&inputs, 1e-6, |_, _| None, |g, vars| {
        let b = Bound::from_vars(vars[..n].to_vec());
        let h = model.encode_graph(g, &b, vars[n], None)?;
        Ok(rnnt_loss_graph(g, &b, &model.transducer, h, &y)?.nll)
    })?;

    let h_len = model.encode(&inputs[n], Mode::Parallel)?.rows();
    let band = build_band(&[1, 2, 3], h_len, y.len(), 2)?;
    let banded = check_gradients(&inputs, 1e-6, |_, _| None, |g, vars| {
        let b = Bound::from_vars(vars[..n].to_vec());
        let h = model.encode_graph(g, &b, vars[n], None)?;
        let nll = bat_loss_graph(g, &b, &model.transducer, h, &y, &band)?.nll;
        let q = quantity_loss_graph(g, &b, &model.cif, h, y.len())?;
        g.add(nll, q)
    })?;
    Ok(vec![
        check(
            "full-loss gradients (subsampling, 2-block encoder, transducer)",
            full.max_rel_err < 1e-4,
            format!("{} entries, max rel err {:.2e}", full.checked, full.max_rel_err),
        ),
        check(
            "banded-loss + CIF gradients",
            banded.max_rel_err < 1e-4,
            format!("{} entries, max rel err {:.2e}", banded.checked, banded.max_rel_err),
        ),
    ])
}

fn binomial(n: usize, k: usize) -> usize {
    (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

fn oracle(seed: u64) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let mut rng = run_rng(seed);
    let mut worst: f64 = 0.0;
    let mut count_ok = true;
    for _ in 0..5 {
        let mut store = ParamStore::<f64>::new();
        let tp = TransducerParams::register(&mut store, Vocab::new(4)?, 3, 4, 5, &mut rng);
        for t in 1..=5 {
            for u in 0..=3 {
                let h = random_tensor::<f64>(&mut rng, &[t, 3], 2.0);
                let y: Vec<usize> = (0..u).map(|_| rng.random_range(1..=4)).collect();
                let (nll, _) = rnnt_loss(&store, &tp, &h, &y)?;
                let bf = rnnt_loss_bruteforce(&store, &tp, &h, &y)?;
                worst = worst.max((nll - bf.nll).abs());
                count_ok &= bf.paths == binomial(t + u - 1, u);
            }
        }
    }
    out.push(check(
        "transducer loss = path enumeration",
        worst < 1e-10 && count_ok,
        format!("max |Δ| {worst:.2e}, path counts {}", if count_ok { "match" } else { "differ" }),
    ));

    let mut store = ParamStore::<f64>::new();
    let tp = TransducerParams::register(&mut store, Vocab::new(5)?, 4, 4, 6, &mut rng);
    let cif = crate::bat::CifParams::register(&mut store, 4, &mut rng);
    let (mut bound_ok, mut eq_gap, mut cells_ok) = (true, 0.0f64, true);
    for _ in 0..30 {
        let t = rng.random_range(1..=8);
        let u = rng.random_range(0..=(4 * t).min(6));
        let h = random_tensor::<f64>(&mut rng, &[t, 4], 2.0);
        let y: Vec<usize> = (0..u).map(|_| rng.random_range(1..=5)).collect();
        let (full, _) = rnnt_loss(&store, &tp, &h, &y)?;
        let align = cif_align(&store, &cif, &h, u)?;
        let r = 5;
        let band = build_band(&align.boundaries, t, u, r)?;
        let (pruned, lat) = bat_loss(&store, &tp, &h, &y, &band)?;
        bound_ok &= pruned >= full - 1e-12;
        cells_ok &= lat.evaluated_cells <= t * r;
        let (covered, _) = bat_loss(&store, &tp, &h, &y, &PruneBand::full(t, u))?;
        eq_gap = eq_gap.max((covered - full).abs());
    }
    out.push(check(
        "banded loss bounds",
        bound_ok && cells_ok && eq_gap < 1e-12,
        format!("pruned ≥ full: {bound_ok}, cells ≤ T·R: {cells_ok}, full band |Δ| {eq_gap:.2e}"),
    ));

    out.push(check(
        "CIF firing example",
        fire(&[0.3f64; 8], 2)? == vec![4, 8],
        "uniform weights, T=8, U=2 → frames 4, 8".into(),
    ));

    let chunk = |n| EncoderKind::Chunked { left_context: LeftContext::Frames(n) };
    let cells = [
        compute_latency(chunk(16), 16, 4, 10)? == 640,
        compute_latency(chunk(8), 8, 4, 10)? == 320,
        compute_latency(EncoderKind::Rwkv, 0, 4, 10)? == 0,
        report_left_context(EncoderKind::Rwkv) == LeftContext::Frames(1),
        report_left_context(chunk(16)) == LeftContext::Frames(16),
        report_left_context(chunk(8)) == LeftContext::Frames(8),
        report_left_context(chunk(24)) == LeftContext::Frames(24),
    ];
    out.push(check(
        "latency and left-context cells",
        cells.iter().all(|&c| c),
        "640 / 320 / 0 ms; left context 1 / 16 / 8 / 24".into(),
    ));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_names() {
        assert_eq!("all".parse::<Suite>().unwrap(), Suite::All);
        assert!("bogus".parse::<Suite>().is_err());
    }

    #[test]
    fn oracle_suite_passes() {
        for c in run_suite(Suite::Oracle, 3).unwrap() {
            assert!(c.passed, "{c}");
        }
    }
}
