//! The assembled recognizer: subsampling front, RWKV encoder, transducer heads
//! and the CIF weight head, all in one parameter store.

use crate::bat::CifParams;
use crate::encoder::{encode, encode_graph, Dropout, EncoderParams, Mode};
use crate::error::Result;
use crate::frontend::{conv_subsample, conv_subsample_graph, SubsampleParams};
use crate::numerics::{Graph, Scalar, Tensor, Var};
use crate::params::{Bound, ParamStore};
use crate::rng::RunRng;
use crate::runtime::config::ModelConfig;
use crate::transducer::{TransducerParams, Vocab};

#[derive(Debug, Clone, PartialEq)]
pub struct Model<T> {
    pub config: ModelConfig,
    pub store: ParamStore<T>,
    pub subsample: SubsampleParams,
    pub encoder: EncoderParams,
    pub transducer: TransducerParams,
    pub cif: CifParams,
}

impl<T: Scalar> Model<T> {
    /// Initializes every parameter from `rng`, in a fixed registration order.
    pub fn new(config: ModelConfig, rng: &mut RunRng) -> Result<Self> {
        config.validate()?;
        let mut store = ParamStore::new();
        let d_io = config.encoder.d_io;
        let subsample = SubsampleParams::register(&mut store, config.feat_dim, config.conv_channels, d_io, rng);
        let encoder = EncoderParams::register(&mut store, config.encoder, rng);
        let transducer =
            TransducerParams::register(&mut store, Vocab::new(config.vocab)?, d_io, config.d_pred, config.d_joint, rng);
        let cif = CifParams::register(&mut store, d_io, rng);
        Ok(Self {
            config,
            store,
            subsample,
            encoder,
            transducer,
            cif,
        })
    }

    pub fn vocab(&self) -> Vocab {
        self.transducer.vocab
    }

    /// Raw features `[T_raw × feat_dim]` to encoder output `[T × d_io]`.
    pub fn encode(&self, features: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let x = conv_subsample(&self.store, &self.subsample, features)?;
        encode(&self.store, &self.encoder, &x, mode)
    }

    pub fn encode_graph(&self, g: &Graph<T>, b: &Bound, features: Var, dropout: Option<&mut Dropout<'_>>) -> Result<Var> {
        let x = conv_subsample_graph(g, b, &self.subsample, features)?;
        encode_graph(g, b, &self.encoder, x, dropout)
    }

    /// Same architecture and values in another precision.
    pub fn cast<U: Scalar>(&self) -> Model<U> {
        Model {
            config: self.config,
            store: self.store.cast(),
            subsample: self.subsample,
            encoder: self.encoder.clone(),
            transducer: self.transducer.clone(),
            cif: self.cif.clone(),
        }
    }
}
