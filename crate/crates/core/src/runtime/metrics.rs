//! Streaming cost measures: latency from future context, left context from
//! cached history, and decoder state size. Plus token accuracy.

use std::fmt;

use crate::error::{Error, Result};

/// How much history an encoder keeps for each output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LeftContext {
    Frames(usize),
    AllHistory,
}

impl fmt::Display for LeftContext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Frames(n) => write!(f, "{n}"),
            Self::AllHistory => f.write_str("all history"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EncoderKind {
    /// Linear-attention recurrence: one frame of state.
    Rwkv,
    /// LSTM-style recurrent encoder.
    Recurrent,
    /// Causal self-attention over a left window.
    Causal { left_context: LeftContext },
    /// Chunked self-attention: waits for the rest of its chunk.
    Chunked { left_context: LeftContext },
}

/// Milliseconds of future input needed before an output frame.
/// Chunked encoders wait `chunk × subsampling × frame_ms`; the others wait 0.
pub fn compute_latency(kind: EncoderKind, chunk_size_frames: usize, subsample_factor: usize, frame_ms: usize) -> Result<usize> {
    match kind {
        EncoderKind::Chunked { .. } => {
            if chunk_size_frames == 0 || subsample_factor == 0 || frame_ms == 0 {
                return Err(Error::Invalid(format!(
                    "chunked latency needs positive factors, got {chunk_size_frames} × {subsample_factor} × {frame_ms}"
                )));
            }
            Ok(chunk_size_frames * subsample_factor * frame_ms)
        }
        EncoderKind::Rwkv | EncoderKind::Recurrent | EncoderKind::Causal { .. } => Ok(0),
    }
}

pub fn report_left_context(kind: EncoderKind) -> LeftContext {
    match kind {
        EncoderKind::Rwkv | EncoderKind::Recurrent => LeftContext::Frames(1),
        EncoderKind::Causal { left_context } | EncoderKind::Chunked { left_context } => left_context,
    }
}

/// Bytes an attention encoder caches for `left_frames` frames of keys and values.
pub fn attention_cache_bytes(num_layers: usize, d_model: usize, left_frames: usize, bytes_per_value: usize) -> usize {
    num_layers * 2 * left_frames * d_model * bytes_per_value
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamingMetrics {
    pub latency_ms: usize,
    pub left_context_frames: LeftContext,
    pub state_bytes: usize,
}

pub fn edit_distance(a: &[usize], b: &[usize]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// `1 − Σ edit distance / Σ reference length`, floored at 0.
pub fn token_accuracy<'a>(pairs: impl IntoIterator<Item = (&'a [usize], &'a [usize])>) -> f64 {
    let (mut errors, mut total) = (0usize, 0usize);
    for (hyp, reference) in pairs {
        errors += edit_distance(hyp, reference);
        total += reference.len();
    }
    if total == 0 {
        return if errors == 0 { 1.0 } else { 0.0 };
    }
    (1.0 - errors as f64 / total as f64).max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn latency_cells() {
        let chunk = EncoderKind::Chunked { left_context: LeftContext::Frames(16) };
        assert_eq!(compute_latency(chunk, 16, 4, 10).unwrap(), 640);
        assert_eq!(compute_latency(chunk, 8, 4, 10).unwrap(), 320);
        assert_eq!(compute_latency(EncoderKind::Rwkv, 0, 4, 10).unwrap(), 0);
        assert!(compute_latency(chunk, 0, 4, 10).is_err());
    }

    #[test]
    fn left_context_cells() {
        assert_eq!(report_left_context(EncoderKind::Rwkv), LeftContext::Frames(1));
        let c = EncoderKind::Chunked { left_context: LeftContext::Frames(16) };
        assert_eq!(report_left_context(c), LeftContext::Frames(16));
        let causal = EncoderKind::Causal { left_context: LeftContext::AllHistory };
        assert_eq!(report_left_context(causal).to_string(), "all history");
    }

    #[test]
    fn edit_distances() {
        assert_eq!(edit_distance(&[], &[1, 2]), 2);
        assert_eq!(edit_distance(&[1, 2, 3], &[1, 3]), 1);
        assert_eq!(edit_distance(&[1, 2, 3], &[3, 2, 1]), 2);
        assert!((token_accuracy([(&[1, 2][..], &[1, 2, 3][..])]) - 2.0 / 3.0).abs() < 1e-15);
    }
}
