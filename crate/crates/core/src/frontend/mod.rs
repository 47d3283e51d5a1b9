//! Audio and feature input: WAV decoding, log-mel features, FEAT files, and the
//! convolutional subsampling that feeds the encoder.

pub mod feat;
pub mod mel;
pub mod subsample;
pub mod wav;

use crate::error::{shape_err, Result};
use crate::numerics::Tensor;

pub use feat::{read_feature_file, write_feature_file};
pub use mel::{log_mel_filterbank, NUM_MEL_BINS};
pub use subsample::{conv_subsample, conv_subsample_graph, subsampled_len, StreamingSubsampler, SubsampleParams};
pub use wav::{read_wav, write_wav, AudioBuffer};

/// Raw (pre-subsampling) feature frames, stored in f32 as on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    pub frames: Tensor<f32>,
    pub frame_shift_ms: usize,
    pub frame_length_ms: usize,
}

impl FeatureSequence {
    pub fn new(frames: Tensor<f32>) -> Result<Self> {
        if frames.rank() != 2 {
            return Err(shape_err("features", format!("{:?}", frames.shape())));
        }
        if !frames.all_finite() {
            return Err(crate::Error::NonFinite { op: "features" });
        }
        Ok(Self {
            frames,
            frame_shift_ms: mel::FRAME_SHIFT_MS,
            frame_length_ms: mel::FRAME_LENGTH_MS,
        })
    }

    pub fn num_frames(&self) -> usize {
        self.frames.rows()
    }

    pub fn dim(&self) -> usize {
        self.frames.cols()
    }
}

/// Reads `.wav` audio (converted to log-mel features) or a FEAT file, by extension.
pub fn load_input(path: &std::path::Path) -> Result<FeatureSequence> {
    match path.extension().and_then(|e| e.to_str()) {
        Some(e) if e.eq_ignore_ascii_case("wav") => log_mel_filterbank(&read_wav(path)?),
        _ => read_feature_file(path),
    }
}
