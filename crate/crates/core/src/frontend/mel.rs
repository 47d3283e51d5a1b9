//! Log-mel filterbank features: 25 ms periodic-Hann frames every 10 ms, 80 mel
//! bins over 0 Hz to Nyquist, natural-log energies floored at `ln(1e-10)`.

use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::frontend::wav::AudioBuffer;
use crate::frontend::FeatureSequence;
use crate::numerics::Tensor;

pub const NUM_MEL_BINS: usize = 80;
pub const FRAME_LENGTH_MS: usize = 25;
pub const FRAME_SHIFT_MS: usize = 10;
pub const ENERGY_FLOOR: f64 = 1e-10;

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular filters `[num_bins × (n_fft/2 + 1)]`.
pub fn mel_filters(num_bins: usize, n_fft: usize, sample_rate: u32) -> Vec<Vec<f64>> {
    let nyquist = sample_rate as f64 / 2.0;
    let (lo, hi) = (hz_to_mel(0.0), hz_to_mel(nyquist));
    let edges: Vec<f64> = (0..num_bins + 2)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (num_bins + 1) as f64))
        .collect();
    let n_freq = n_fft / 2 + 1;
    (0..num_bins)
        .map(|m| {
            let (left, center, right) = (edges[m], edges[m + 1], edges[m + 2]);
            (0..n_freq)
                .map(|k| {
                    let f = k as f64 * sample_rate as f64 / n_fft as f64;
                    if f <= left || f >= right {
                        0.0
                    } else if f <= center {
                        (f - left) / (center - left)
                    } else {
                        (right - f) / (right - center)
                    }
                })
                .collect()
        })
        .collect()
}

/// Frame count for `n` samples: `1 + (n − window) / shift`.
pub fn num_frames(num_samples: usize, window: usize, shift: usize) -> usize {
    if num_samples < window {
        0
    } else {
        1 + (num_samples - window) / shift
    }
}

pub fn log_mel_filterbank(audio: &AudioBuffer) -> Result<FeatureSequence> {
    let sr = audio.sample_rate as usize;
    let window = sr * FRAME_LENGTH_MS / 1000;
    let shift = sr * FRAME_SHIFT_MS / 1000;
    let frames = num_frames(audio.samples.len(), window, shift);
    if frames == 0 {
        return Err(Error::TooShort(format!(
            "{} samples is shorter than one {window}-sample window",
            audio.samples.len()
        )));
    }
    let n_fft = window.next_power_of_two();
    let hann: Vec<f64> = (0..window)
        .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / window as f64).cos())
        .collect();
    let filters = mel_filters(NUM_MEL_BINS, n_fft, audio.sample_rate);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n_fft);
    let mut buf = vec![Complex::new(0.0, 0.0); n_fft];
    let mut out = Vec::with_capacity(frames * NUM_MEL_BINS);
    for f in 0..frames {
        let start = f * shift;
        for (i, c) in buf.iter_mut().enumerate() {
            *c = if i < window {
                Complex::new(audio.samples[start + i] as f64 * hann[i], 0.0)
            } else {
                Complex::new(0.0, 0.0)
            };
        }
        fft.process(&mut buf);
        let power: Vec<f64> = buf[..n_fft / 2 + 1].iter().map(|c| c.norm_sqr()).collect();
        for filt in &filters {
            let e: f64 = filt.iter().zip(&power).map(|(w, p)| w * p).sum();
            out.push(e.max(ENERGY_FLOOR).ln() as f32);
        }
    }
    FeatureSequence::new(Tensor::new(vec![frames, NUM_MEL_BINS], out)?)
}
