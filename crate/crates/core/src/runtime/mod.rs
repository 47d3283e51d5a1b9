//! Decoding, metrics, model files and training around the core model.

pub mod checkpoint;
pub mod config;
pub mod decode;
pub mod metrics;
pub mod model;
pub mod synth;
pub mod train;

pub use checkpoint::{checkpoint_bytes, checkpoint_from_bytes, load_checkpoint, save_checkpoint};
pub use config::{LossKind, ModelConfig, RunConfig, TrainConfig};
pub use decode::{decode_features, greedy_decode_offline, DecodeSession, GreedyDecoder, MAX_EMISSIONS_PER_FRAME};
pub use metrics::{
    compute_latency, edit_distance, report_left_context, token_accuracy, EncoderKind, LeftContext, StreamingMetrics,
};
pub use model::Model;
pub use synth::{synth_dataset, synth_with, Dataset, SynthConfig, Utterance};
pub use train::{evaluate_accuracy, evaluate_nll, train, train_synthetic, EpochMetrics, TrainReport};
