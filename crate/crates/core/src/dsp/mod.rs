//! Audio containers, chunking, STFT analysis/synthesis, MFCC features and the
//! parameterised transform suite used for robustness evaluation.

mod mfcc;
mod resample;
mod stft;
mod transform;
pub mod wav;

pub use mfcc::{Mfcc, MfccConfig};
pub use resample::resample;
pub use stft::{hann_window, Spectrogram, Stft, StftConfig};
pub use transform::{apply_transform, convolve_truncated, TransformSpec};

use crate::error::{Error, Result};

/// Committed sample rate of the protocol.
pub const SAMPLE_RATE: u32 = 16_000;

/// Log floor shared by log-magnitude and mel-log computations.
pub const LOG_EPS: f64 = 1e-8;

/// Mono waveform. Samples are stored as `f32` so that an enrolled buffer
/// round-trips bit-exactly through a float WAV file.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
}

impl AudioBuffer {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Self {
        Self { samples, sample_rate }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Hard-limit every sample to `[-1, 1]`.
    pub fn clamp_in_place(&mut self) {
        for s in &mut self.samples {
            *s = s.clamp(-1.0, 1.0);
        }
    }
}

/// A fixed-length window of a buffer, borrowed from it.
#[derive(Debug, Clone, Copy)]
pub struct Chunk<'a> {
    pub index: usize,
    pub start: usize,
    pub samples: &'a [f32],
}

/// Number of samples in a window of `seconds` at `sample_rate`.
pub fn seconds_to_samples(seconds: f64, sample_rate: u32) -> usize {
    (seconds * sample_rate as f64).round() as usize
}

/// Split `audio` into windows of `len_secs` at stride `stride_secs`.
///
/// Window `k` starts at `round(k * stride * sr)`; a trailing partial window is
/// dropped, so audio shorter than one window yields an empty list.
pub fn chunk_audio(audio: &AudioBuffer, len_secs: f64, stride_secs: f64) -> Result<Vec<Chunk<'_>>> {
    if !(len_secs > 0.0) || !(stride_secs > 0.0) || stride_secs > len_secs {
        return Err(Error::InvalidArgument(format!(
            "chunking requires L > 0 and 0 < S <= L (got L={len_secs}, S={stride_secs})"
        )));
    }
    let sr = audio.sample_rate as f64;
    let win = seconds_to_samples(len_secs, audio.sample_rate);
    let mut chunks = Vec::new();
    for k in 0usize.. {
        let start = (k as f64 * stride_secs * sr).round() as usize;
        let Some(samples) = audio.samples.get(start..start + win) else {
            break;
        };
        chunks.push(Chunk { index: k, start, samples });
    }
    Ok(chunks)
}

/// Time-domain SNR in dB of `test` against `reference`:
/// `10 log10(sum x^2 / sum (x - y)^2)`. Identical inputs give `+inf`.
pub fn measure_snr(reference: &[f32], test: &[f32]) -> Result<f64> {
    if reference.len() != test.len() {
        return Err(Error::LengthMismatch { expected: reference.len(), got: test.len() });
    }
    let (mut signal, mut noise) = (0.0f64, 0.0f64);
    for (&x, &y) in reference.iter().zip(test) {
        let (x, y) = (x as f64, y as f64);
        signal += x * x;
        noise += (x - y) * (x - y);
    }
    if noise == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (signal / noise).log10())
}

pub(crate) fn to_f64(samples: &[f32]) -> Vec<f64> {
    samples.iter().map(|&s| s as f64).collect()
}

pub(crate) fn to_f32(samples: &[f64]) -> Vec<f32> {
    samples.iter().map(|&s| s as f32).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(n: usize) -> AudioBuffer {
        AudioBuffer::new((0..n).map(|i| (i % 1000) as f32 / 1000.0).collect(), SAMPLE_RATE)
    }

    #[test]
    fn ten_seconds_gives_five_chunks() {
        let audio = ramp(160_000);
        let chunks = chunk_audio(&audio, 2.0, 2.0).unwrap();
        assert_eq!(chunks.len(), 5);
        assert!(chunks.iter().all(|c| c.samples.len() == 32_000));
        assert_eq!(seconds_to_samples(2.0, SAMPLE_RATE), 32_000);
    }

    #[test]
    fn partial_tail_is_dropped() {
        let audio = ramp(7 * 16_000);
        let chunks = chunk_audio(&audio, 2.0, 2.0).unwrap();
        assert_eq!(chunks.len(), 3);
        assert_eq!(chunks[2].start, 64_000);
    }

    #[test]
    fn short_audio_is_empty_not_error() {
        let audio = ramp(31_999);
        assert!(chunk_audio(&audio, 2.0, 2.0).unwrap().is_empty());
    }

    #[test]
    fn overlapping_stride() {
        let audio = ramp(64_000);
        let chunks = chunk_audio(&audio, 2.0, 1.0).unwrap();
        assert_eq!(chunks.iter().map(|c| c.start).collect::<Vec<_>>(), vec![0, 16_000, 32_000]);
    }

    #[test]
    fn invalid_stride_rejected() {
        let audio = ramp(64_000);
        assert!(chunk_audio(&audio, 2.0, 3.0).is_err());
        assert!(chunk_audio(&audio, 0.0, 0.0).is_err());
        assert!(chunk_audio(&audio, 2.0, -1.0).is_err());
    }

    #[test]
    fn concatenated_chunks_equal_prefix() {
        let audio = ramp(5 * 32_000 + 1234);
        let chunks = chunk_audio(&audio, 2.0, 2.0).unwrap();
        let joined: Vec<f32> = chunks.iter().flat_map(|c| c.samples.iter().copied()).collect();
        assert_eq!(&joined[..], &audio.samples[..5 * 32_000]);
    }

    #[test]
    fn snr_definition() {
        let x: Vec<f32> = (0..1000).map(|i| if i % 2 == 0 { 10.0 } else { -10.0 }).collect();
        assert_eq!(measure_snr(&x, &x).unwrap(), f64::INFINITY);
        // Pn = Px / 100, exactly representable
        let y: Vec<f32> = x.iter().map(|&v| v + 1.0).collect();
        assert!((measure_snr(&x, &y).unwrap() - 20.0).abs() < 1e-6);
        assert!(measure_snr(&x, &y[..999]).is_err());
    }
}
