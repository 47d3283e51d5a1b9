use crate::encoder::wkv::WkvState;
use crate::encoder::EncoderConfig;
use crate::error::{Error, Result};
use crate::numerics::Scalar;

/// Per-layer recurrent state: the two token-shift caches and the wkv accumulators.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerState<T> {
    /// Normalized input that entered time mixing on the previous frame.
    pub x_prev_time: Vec<T>,
    /// Normalized input that entered channel mixing on the previous frame.
    pub x_prev_chan: Vec<T>,
    pub wkv: WkvState<T>,
}

impl<T: Scalar> LayerState<T> {
    pub fn fresh(d_io: usize, d_att: usize) -> Self {
        Self {
            x_prev_time: vec![T::zero(); d_io],
            x_prev_chan: vec![T::zero(); d_io],
            wkv: WkvState::fresh(d_att),
        }
    }
}

/// Everything the encoder carries between frames. Its size is fixed by the
/// configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamState<T> {
    pub layers: Vec<LayerState<T>>,
}

impl<T: Scalar> StreamState<T> {
    pub fn fresh(config: &EncoderConfig) -> Self {
        Self {
            layers: (0..config.num_blocks)
                .map(|_| LayerState::fresh(config.d_io, config.d_att))
                .collect(),
        }
    }

    pub fn byte_size(config: &EncoderConfig) -> usize {
        config.num_blocks * (2 * config.d_io + 3 * config.d_att) * T::DTYPE.size()
    }

    pub fn write_bytes(&self, out: &mut Vec<u8>) {
        for l in &self.layers {
            for v in [&l.x_prev_time, &l.x_prev_chan, &l.wkv.a, &l.wkv.b, &l.wkv.p] {
                for &x in v.iter() {
                    x.write_le(out);
                }
            }
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_bytes(&mut out);
        out
    }

    pub fn from_bytes(config: &EncoderConfig, bytes: &[u8]) -> Result<Self> {
        if bytes.len() != Self::byte_size(config) {
            return Err(Error::Invalid(format!(
                "stream state needs {} bytes, got {}",
                Self::byte_size(config),
                bytes.len()
            )));
        }
        let sz = T::DTYPE.size();
        let mut vals = bytes.chunks_exact(sz).map(T::read_le);
        let mut take = |n: usize| -> Vec<T> { vals.by_ref().take(n).collect() };
        let layers = (0..config.num_blocks)
            .map(|_| {
                let x_prev_time = take(config.d_io);
                let x_prev_chan = take(config.d_io);
                let a = take(config.d_att);
                let b = take(config.d_att);
                let p = take(config.d_att);
                LayerState {
                    x_prev_time,
                    x_prev_chan,
                    wkv: WkvState { a, b, p },
                }
            })
            .collect();
        Ok(Self { layers })
    }
}
