//! RWKV acoustic encoder: stacked blocks of time mixing and channel mixing with
//! pre-layer-norm residual sub-layers.
//!
//! The same parameters are evaluated two ways. [`Mode::Parallel`] runs taped
//! whole-sequence operations (used for training); [`Mode::Recurrent`] consumes
//! one frame at a time against a [`StreamState`] whose size does not depend on
//! how many frames have been seen. Both produce the same outputs.

mod layers;
mod state;
pub mod wkv;

use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::Scalar;
use crate::params::{ParamId, ParamStore};
use crate::rng::RunRng;

pub use layers::{
    channel_mixing, channel_mixing_graph, channel_mixing_step, encode, encode_graph, encode_step,
    rwkv_block, rwkv_block_graph, rwkv_block_step, time_mixing, time_mixing_graph, time_mixing_step,
};
pub use state::{LayerState, StreamState};
pub use wkv::{wkv_graph, wkv_parallel, wkv_step, WkvState};

pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Parallel,
    Recurrent,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncoderConfig {
    pub d_io: usize,
    pub d_att: usize,
    pub d_linear: usize,
    pub num_blocks: usize,
    pub dropout_rate: f64,
}

impl EncoderConfig {
    /// RWKV (S): 18 blocks of width 512 with a 2048-wide channel mix.
    pub const SMALL: Self = Self {
        d_io: 512,
        d_att: 512,
        d_linear: 2048,
        num_blocks: 18,
        dropout_rate: 0.1,
    };

    /// RWKV (L): 18 blocks of width 640 with a 2560-wide channel mix.
    pub const LARGE: Self = Self {
        d_io: 640,
        d_att: 640,
        d_linear: 2560,
        num_blocks: 18,
        dropout_rate: 0.1,
    };

    /// Default desk-scale configuration.
    pub const DESK: Self = Self {
        d_io: 64,
        d_att: 64,
        d_linear: 256,
        num_blocks: 4,
        dropout_rate: 0.1,
    };

    pub fn validate(&self) -> Result<()> {
        if self.d_io == 0 || self.d_att == 0 || self.d_linear == 0 {
            return Err(Error::Config("encoder widths must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!(
                "dropout rate {} outside [0, 1)",
                self.dropout_rate
            )));
        }
        Ok(())
    }

    /// Trainable scalars in the encoder stack.
    pub fn num_params(&self) -> usize {
        let (io, att, lin) = (self.d_io, self.d_att, self.d_linear);
        let time = 4 * att * io + 3 * io + 2 * att;
        let chan = io * io + 2 * lin * io + 2 * io;
        self.num_blocks * (time + chan + 4 * io)
    }
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self::DESK
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeMixParams {
    pub w_r: ParamId,
    pub w_k: ParamId,
    pub w_v: ParamId,
    pub w_o: ParamId,
    pub mu_r: ParamId,
    pub mu_k: ParamId,
    pub mu_v: ParamId,
    /// Decay pre-parameter; the decay is `exp(w_raw) > 0`.
    pub w_raw: ParamId,
    pub u: ParamId,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelMixParams {
    /// `d_io × d_io`, so the receptance gate matches the output width.
    pub w_r: ParamId,
    pub w_k: ParamId,
    pub w_v: ParamId,
    pub mu_r: ParamId,
    pub mu_k: ParamId,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RwkvLayerParams {
    pub ln_time_gain: ParamId,
    pub ln_time_bias: ParamId,
    pub time_mix: TimeMixParams,
    pub ln_chan_gain: ParamId,
    pub ln_chan_bias: ParamId,
    pub channel_mix: ChannelMixParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub config: EncoderConfig,
    pub layers: Vec<RwkvLayerParams>,
}

fn mix_factor<T: Scalar>(store: &mut ParamStore<T>, name: String, d: usize) -> ParamId {
    store.add_clamped(name, crate::Tensor::full(&[d], T::from_f64c(0.5)), 0.0, 1.0)
}

impl EncoderParams {
    pub fn register<T: Scalar>(store: &mut ParamStore<T>, config: EncoderConfig, rng: &mut RunRng) -> Self {
        let (io, att, lin) = (config.d_io, config.d_att, config.d_linear);
        let layers = (0..config.num_blocks)
            .map(|l| {
                let p = |s: &str| format!("encoder.{l}.{s}");
                let ln_time_gain = store.add(p("ln_time.gain"), crate::Tensor::full(&[io], T::one()));
                let ln_time_bias = store.add(p("ln_time.bias"), crate::Tensor::zeros(&[io]));
                let time_mix = TimeMixParams {
                    w_r: store.add_uniform(p("time.w_r"), &[att, io], io, rng),
                    w_k: store.add_uniform(p("time.w_k"), &[att, io], io, rng),
                    w_v: store.add_uniform(p("time.w_v"), &[att, io], io, rng),
                    w_o: store.add_uniform(p("time.w_o"), &[io, att], att, rng),
                    mu_r: mix_factor(store, p("time.mu_r"), io),
                    mu_k: mix_factor(store, p("time.mu_k"), io),
                    mu_v: mix_factor(store, p("time.mu_v"), io),
                    w_raw: store.add(p("time.w_raw"), crate::Tensor::zeros(&[att])),
                    u: store.add(p("time.u"), crate::Tensor::zeros(&[att])),
                };
                let ln_chan_gain = store.add(p("ln_chan.gain"), crate::Tensor::full(&[io], T::one()));
                let ln_chan_bias = store.add(p("ln_chan.bias"), crate::Tensor::zeros(&[io]));
                let channel_mix = ChannelMixParams {
                    w_r: store.add_uniform(p("chan.w_r"), &[io, io], io, rng),
                    w_k: store.add_uniform(p("chan.w_k"), &[lin, io], io, rng),
                    w_v: store.add_uniform(p("chan.w_v"), &[io, lin], lin, rng),
                    mu_r: mix_factor(store, p("chan.mu_r"), io),
                    mu_k: mix_factor(store, p("chan.mu_k"), io),
                };
                RwkvLayerParams {
                    ln_time_gain,
                    ln_time_bias,
                    time_mix,
                    ln_chan_gain,
                    ln_chan_bias,
                    channel_mix,
                }
            })
            .collect();
        Self { config, layers }
    }
}

/// Inverted dropout drawing its masks from the run-level generator.
pub struct Dropout<'r> {
    pub rate: f64,
    pub rng: &'r mut RunRng,
}

impl Dropout<'_> {
    pub fn mask<T: Scalar>(&mut self, shape: &[usize]) -> crate::Tensor<T> {
        let n: usize = shape.iter().product();
        let keep = 1.0 - self.rate;
        let scale = T::from_f64c(1.0 / keep);
        let data = (0..n)
            .map(|_| if self.rng.random::<f64>() < keep { scale } else { T::zero() })
            .collect();
        crate::Tensor::new(shape.to_vec(), data).expect("shape matches")
    }
}
