//! Synthetic recognition task: each label is a fixed random feature vector,
//! held for a few frames under Gaussian noise.

use std::ops::RangeInclusive;

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{Error, Result};
use crate::frontend::FeatureSequence;
use crate::numerics::Tensor;
use crate::rng::{stream_rng, DATA_STREAM};

pub const MAX_SYNTH_VOCAB: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub vocab: usize,
    pub feat_dim: usize,
    pub label_len: RangeInclusive<usize>,
    pub frames_per_label: RangeInclusive<usize>,
    pub noise_std: f64,
    /// Noise-only frames appended after the last label.
    pub trailing_frames: usize,
}

impl SynthConfig {
    pub fn new(vocab: usize, label_len: RangeInclusive<usize>) -> Self {
        Self {
            vocab,
            feat_dim: crate::frontend::NUM_MEL_BINS,
            label_len,
            frames_per_label: 4..=8,
            noise_std: 0.1,
            trailing_frames: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub features: FeatureSequence,
    pub labels: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// Row `v − 1` is the prototype of label `v`.
    pub prototypes: Tensor<f32>,
    pub utterances: Vec<Utterance>,
}

impl Dataset {
    /// Splits off the last `fraction` of utterances.
    pub fn split(&self, fraction: f64) -> (&[Utterance], &[Utterance]) {
        let n = self.utterances.len();
        let held = ((n as f64) * fraction).round() as usize;
        self.utterances.split_at(n - held.min(n))
    }
}

pub fn synth_dataset(seed: u64, num_utts: usize, vocab: usize, label_len: RangeInclusive<usize>) -> Result<Dataset> {
    synth_with(seed, num_utts, &SynthConfig::new(vocab, label_len))
}

/// Labels never repeat back to back (when `vocab > 1`), so every label change
/// is visible in the features.
pub fn synth_with(seed: u64, num_utts: usize, c: &SynthConfig) -> Result<Dataset> {
    if c.vocab == 0 || c.vocab > MAX_SYNTH_VOCAB {
        return Err(Error::Invalid(format!("synthetic vocabulary must be 1..={MAX_SYNTH_VOCAB}, got {}", c.vocab)));
    }
    if c.label_len.is_empty() || c.frames_per_label.is_empty() || *c.frames_per_label.start() == 0 {
        return Err(Error::Invalid("empty label or frame range".into()));
    }
    let noise = Normal::new(0.0, c.noise_std).map_err(|e| Error::Invalid(e.to_string()))?;
    let mut rng = stream_rng(seed, DATA_STREAM);
    let d = c.feat_dim;
    let protos: Vec<f32> = (0..c.vocab * d).map(|_| StandardNormal.sample(&mut rng)).collect();
    let prototypes = Tensor::new(vec![c.vocab, d], protos)?;

    let mut utterances = Vec::with_capacity(num_utts);
    for _ in 0..num_utts {
        let n = rng.random_range(c.label_len.clone());
        let mut labels: Vec<usize> = Vec::with_capacity(n);
        for _ in 0..n {
            let label = match labels.last() {
                Some(&prev) if c.vocab > 1 => {
                    let l = rng.random_range(1..c.vocab);
                    if l >= prev {
                        l + 1
                    } else {
                        l
                    }
                }
                _ => rng.random_range(1..=c.vocab),
            };
            labels.push(label);
        }
        let mut frames = Vec::new();
        for &l in &labels {
            for _ in 0..rng.random_range(c.frames_per_label.clone()) {
                frames.extend(prototypes.row(l - 1).iter().map(|&p| p + noise.sample(&mut rng) as f32));
            }
        }
        for _ in 0..c.trailing_frames * d {
            frames.push(noise.sample(&mut rng) as f32);
        }
        let t = frames.len() / d;
        utterances.push(Utterance {
            features: FeatureSequence::new(Tensor::new(vec![t, d], frames)?)?,
            labels,
        });
    }
    Ok(Dataset { prototypes, utterances })
}
