//! Greedy transducer decoding, over a whole encoder output or frame by frame.

use crate::encoder::{encode_step, Mode, StreamState};
use crate::error::{Error, Result};
use crate::frontend::StreamingSubsampler;
use crate::numerics::{Scalar, Tensor};
use crate::runtime::model::Model;
use crate::transducer::{predictor_step, PredictorState, Vocab};

/// Most labels emitted on one encoder frame before moving on.
pub const MAX_EMISSIONS_PER_FRAME: usize = 10;

/// First index of the largest value.
pub fn argmax<T: Scalar>(x: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in x.iter().enumerate().skip(1) {
        if v > x[best] {
            best = i;
        }
    }
    best
}

/// Predictor state plus its cached joint projection.
#[derive(Debug, Clone, PartialEq)]
pub struct GreedyDecoder<T> {
    pub predictor: PredictorState<T>,
    pred_proj: Vec<T>,
    pub cap: usize,
}

impl<T: Scalar> GreedyDecoder<T> {
    /// Primed with the start symbol.
    pub fn new(model: &Model<T>) -> Result<Self> {
        let mut predictor = PredictorState::zero(model.config.d_pred);
        predictor_step(&model.store, &model.transducer.predictor, Vocab::BLANK, &mut predictor)?;
        Ok(Self::resume(model, predictor))
    }

    pub fn resume(model: &Model<T>, predictor: PredictorState<T>) -> Self {
        let pred_proj = model.transducer.joint.project_pred(&model.store, &predictor.h);
        Self {
            predictor,
            pred_proj,
            cap: MAX_EMISSIONS_PER_FRAME,
        }
    }

    /// Consumes one encoder frame and returns the labels emitted on it.
    pub fn frame(&mut self, model: &Model<T>, h_t: &[T]) -> Result<Vec<usize>> {
        let joint = &model.transducer.joint;
        let enc = joint.project_enc(&model.store, h_t);
        let mut out = Vec::new();
        while out.len() < self.cap {
            let lp = joint.from_projections(&model.store, &enc, &self.pred_proj);
            let k = argmax(&lp);
            if k == Vocab::BLANK {
                break;
            }
            out.push(k);
            predictor_step(&model.store, &model.transducer.predictor, k, &mut self.predictor)?;
            self.pred_proj = joint.project_pred(&model.store, &self.predictor.h);
        }
        Ok(out)
    }
}

/// Greedy decoding of a complete encoder output `h: [T × d_io]`.
pub fn greedy_decode_offline<T: Scalar>(model: &Model<T>, h: &Tensor<T>) -> Result<Vec<usize>> {
    let mut dec = GreedyDecoder::new(model)?;
    let mut out = Vec::new();
    for t in 0..h.rows() {
        out.extend(dec.frame(model, h.row(t))?);
    }
    Ok(out)
}

/// Whole-utterance decoding of raw features; `Recurrent` runs a [`DecodeSession`].
pub fn decode_features<T: Scalar>(model: &Model<T>, features: &Tensor<T>, mode: Mode) -> Result<Vec<usize>> {
    match mode {
        Mode::Parallel => greedy_decode_offline(model, &model.encode(features, Mode::Parallel)?),
        Mode::Recurrent => {
            let mut s = DecodeSession::new(model)?;
            let mut out = s.feed(features)?;
            out.extend(s.finish());
            Ok(out)
        }
    }
}

/// Incremental decoder over raw feature frames. Its state has a fixed size:
/// tokens are handed back as they are produced and not retained.
#[derive(Debug, Clone)]
pub struct DecodeSession<'m, T> {
    model: &'m Model<T>,
    subsampler: StreamingSubsampler<T>,
    encoder: StreamState<T>,
    decoder: GreedyDecoder<T>,
    frames_consumed: u64,
    tokens_emitted: u64,
    closed: bool,
}

impl<'m, T: Scalar> DecodeSession<'m, T> {
    pub fn new(model: &'m Model<T>) -> Result<Self> {
        Ok(Self {
            model,
            subsampler: StreamingSubsampler::new(&model.subsample),
            encoder: StreamState::fresh(&model.config.encoder),
            decoder: GreedyDecoder::new(model)?,
            frames_consumed: 0,
            tokens_emitted: 0,
            closed: false,
        })
    }

    /// Raw feature frames seen so far.
    pub fn frames_consumed(&self) -> u64 {
        self.frames_consumed
    }

    pub fn tokens_emitted(&self) -> u64 {
        self.tokens_emitted
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    /// Feeds one raw feature frame. Returned tokens are final.
    pub fn feed_frame(&mut self, frame: &[T]) -> Result<Vec<usize>> {
        if self.closed {
            return Err(Error::SessionClosed);
        }
        let m = self.model;
        let out = match self.subsampler.push(&m.store, &m.subsample, frame)? {
            Some(x) => {
                let h = encode_step(&m.store, &m.encoder, &x, &mut self.encoder)?;
                self.decoder.frame(m, &h)?
            }
            None => Vec::new(),
        };
        self.frames_consumed += 1;
        self.tokens_emitted += out.len() as u64;
        Ok(out)
    }

    /// Feeds the rows of `frames: [n × feat_dim]`.
    pub fn feed(&mut self, frames: &Tensor<T>) -> Result<Vec<usize>> {
        if self.closed {
            return Err(Error::SessionClosed);
        }
        let mut out = Vec::new();
        for t in 0..frames.rows() {
            out.extend(self.feed_frame(frames.row(t))?);
        }
        Ok(out)
    }

    /// Ends the stream. The decoder needs no lookahead, so nothing is pending.
    pub fn finish(&mut self) -> Vec<usize> {
        self.closed = true;
        Vec::new()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(Self::byte_size(self.model));
        out.extend_from_slice(&self.frames_consumed.to_le_bytes());
        out.extend_from_slice(&self.tokens_emitted.to_le_bytes());
        out.push(self.closed as u8);
        self.subsampler.write_bytes(&mut out);
        self.encoder.write_bytes(&mut out);
        for &x in &self.decoder.predictor.h {
            x.write_le(&mut out);
        }
        out
    }

    /// Serialized size, fixed by the model configuration.
    pub fn byte_size(model: &Model<T>) -> usize {
        17 + StreamingSubsampler::<T>::byte_size(&model.subsample)
            + StreamState::<T>::byte_size(&model.config.encoder)
            + model.config.d_pred * T::DTYPE.size()
    }

    pub fn state_bytes(&self) -> usize {
        self.to_bytes().len()
    }

    pub fn from_bytes(model: &'m Model<T>, bytes: &[u8]) -> Result<Self> {
        if bytes.len() != Self::byte_size(model) {
            return Err(Error::Invalid(format!(
                "session state needs {} bytes, got {}",
                Self::byte_size(model),
                bytes.len()
            )));
        }
        let u64_at = |i: usize| u64::from_le_bytes(bytes[i..i + 8].try_into().expect("8 bytes"));
        let closed = match bytes[16] {
            0 => false,
            1 => true,
            b => return Err(Error::Invalid(format!("bad session flag {b}"))),
        };
        let sub_len = StreamingSubsampler::<T>::byte_size(&model.subsample);
        let enc_len = StreamState::<T>::byte_size(&model.config.encoder);
        let (sub, rest) = bytes[17..].split_at(sub_len);
        let (enc, pred) = rest.split_at(enc_len);
        let h = pred.chunks_exact(T::DTYPE.size()).map(T::read_le).collect();
        Ok(Self {
            model,
            subsampler: StreamingSubsampler::read_bytes(&model.subsample, sub)?,
            encoder: StreamState::from_bytes(&model.config.encoder, enc)?,
            decoder: GreedyDecoder::resume(model, PredictorState { h }),
            frames_consumed: u64_at(0),
            tokens_emitted: u64_at(8),
            closed,
        })
    }
}
