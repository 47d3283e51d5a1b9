//! Fixtures shared by the benchmarks.

use rwkv_asr::bat::{build_band, cif_align, PruneBand, DEFAULT_BAND_WIDTH};
use rwkv_asr::encoder::Mode;
use rwkv_asr::rng::run_rng;
use rwkv_asr::runtime::{synth_dataset, DecodeSession};
use rwkv_asr::{Model, ModelConfig, Result, Tensor};

/// Untrained model with the default desk configuration.
pub fn desk_model() -> Result<Model<f32>> {
    Model::new(ModelConfig::default(), &mut run_rng(0))
}

/// Deterministic feature frame `i`.
pub fn frame(i: usize, dim: usize) -> Vec<f32> {
    (0..dim).map(|j| ((i * 31 + j * 7) as f32 * 0.013).sin()).collect()
}

pub fn frames(n: usize, dim: usize) -> Tensor<f32> {
    Tensor::from_rows(&(0..n).map(|i| frame(i, dim)).collect::<Vec<_>>()).expect("rows")
}

/// A session that has already consumed `n` frames.
pub fn warm_session(model: &Model<f32>, n: usize) -> Result<DecodeSession<'_, f32>> {
    let mut s = DecodeSession::new(model)?;
    let dim = model.config.feat_dim;
    for i in 0..n {
        s.feed_frame(&frame(i, dim))?;
    }
    Ok(s)
}

/// Encoder output, labels and CIF band for one synthetic utterance.
pub struct LossCase {
    pub h: Tensor<f32>,
    pub labels: Vec<usize>,
    pub band: PruneBand,
}

pub fn loss_case(model: &Model<f32>, label_len: usize) -> Result<LossCase> {
    let data = synth_dataset(1, 1, model.config.vocab, label_len..=label_len)?;
    let u = &data.utterances[0];
    let h = model.encode(&u.features.frames, Mode::Parallel)?;
    let align = cif_align(&model.store, &model.cif, &h, label_len)?;
    let band = build_band(&align.boundaries, h.rows(), label_len, DEFAULT_BAND_WIDTH)?;
    Ok(LossCase { h, labels: u.labels.clone(), band })
}
