use serde::{Deserialize, Serialize};

use super::stft::{Stft, StftConfig};
use super::LOG_EPS;
use crate::error::Result;

/// MFCC front end configuration. Filters are HTK-mel triangles between
/// `fmin_hz` and `fmax_hz`; the DCT is the orthonormal type II.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MfccConfig {
    pub n_mfcc: usize,
    pub n_mels: usize,
    pub fmin_hz: f64,
    pub fmax_hz: f64,
    pub sample_rate: u32,
}

impl Default for MfccConfig {
    fn default() -> Self {
        Self { n_mfcc: 13, n_mels: 40, fmin_hz: 0.0, fmax_hz: 8000.0, sample_rate: 16_000 }
    }
}

pub(crate) fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub(crate) fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Frame-wise MFCC extractor sharing the STFT framing.
#[derive(Debug, Clone)]
pub struct Mfcc {
    config: MfccConfig,
    stft: Stft,
    /// `n_mels` rows of per-bin weights, stored sparsely as (first bin, weights).
    filters: Vec<(usize, Vec<f64>)>,
    /// `n_mfcc x n_mels` orthonormal DCT-II rows.
    dct: Vec<Vec<f64>>,
}

impl Mfcc {
    pub fn new(config: MfccConfig, stft_config: StftConfig) -> Result<Self> {
        let stft = Stft::new(stft_config)?;
        let bins = stft_config.bins();
        let bin_hz = config.sample_rate as f64 / stft_config.n_fft as f64;
        let (lo, hi) = (hz_to_mel(config.fmin_hz), hz_to_mel(config.fmax_hz));
        let edges: Vec<f64> = (0..config.n_mels + 2)
            .map(|m| mel_to_hz(lo + (hi - lo) * m as f64 / (config.n_mels + 1) as f64))
            .collect();
        let filters = (0..config.n_mels)
            .map(|m| {
                let (left, centre, right) = (edges[m], edges[m + 1], edges[m + 2]);
                let weights: Vec<(usize, f64)> = (0..bins)
                    .filter_map(|k| {
                        let f = k as f64 * bin_hz;
                        let w = if f > left && f <= centre {
                            (f - left) / (centre - left)
                        } else if f > centre && f < right {
                            (right - f) / (right - centre)
                        } else {
                            0.0
                        };
                        (w > 0.0).then_some((k, w))
                    })
                    .collect();
                let first = weights.first().map_or(0, |&(k, _)| k);
                (first, weights.into_iter().map(|(_, w)| w).collect())
            })
            .collect();
        let n = config.n_mels as f64;
        let dct = (0..config.n_mfcc)
            .map(|k| {
                let scale = if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
                (0..config.n_mels)
                    .map(|m| scale * (std::f64::consts::PI * k as f64 * (m as f64 + 0.5) / n).cos())
                    .collect()
            })
            .collect();
        Ok(Self { config, stft, filters, dct })
    }

    pub fn config(&self) -> &MfccConfig {
        &self.config
    }

    pub fn stft_config(&self) -> &StftConfig {
        self.stft.config()
    }

    /// MFCC matrix, one row of `n_mfcc` coefficients per STFT frame,
    /// flattened row-major.
    pub fn frames(&self, samples: &[f64]) -> Result<Vec<f64>> {
        let spec = self.stft.forward(samples)?;
        let mut out = Vec::with_capacity(spec.frames() * self.config.n_mfcc);
        let mut power = vec![0.0; spec.bins()];
        let mut mel = vec![0.0; self.config.n_mels];
        for f in 0..spec.frames() {
            for (p, c) in power.iter_mut().zip(spec.frame(f)) {
                *p = c.norm_sqr();
            }
            for (e, (first, w)) in mel.iter_mut().zip(&self.filters) {
                let energy: f64 = w.iter().zip(&power[*first..]).map(|(a, b)| a * b).sum();
                *e = (energy + LOG_EPS).ln();
            }
            out.extend(self.dct.iter().map(|row| row.iter().zip(&mel).map(|(a, b)| a * b).sum::<f64>()));
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mfcc() -> Mfcc {
        Mfcc::new(MfccConfig::default(), StftConfig::default()).unwrap()
    }

    fn tone(n: usize) -> Vec<f64> {
        (0..n).map(|i| 0.3 * (i as f64 * 0.07).sin() + 0.1 * (i as f64 * 0.31).cos()).collect()
    }

    #[test]
    fn mel_scale_round_trips() {
        for hz in [0.0, 300.0, 1000.0, 3400.0, 8000.0] {
            assert!((mel_to_hz(hz_to_mel(hz)) - hz).abs() < 1e-9);
        }
        assert!((hz_to_mel(700.0) - 2595.0 * 2f64.log10()).abs() < 1e-12);
    }

    #[test]
    fn shape_and_determinism() {
        let m = mfcc();
        let x = tone(32_000);
        let a = m.frames(&x).unwrap();
        let b = m.frames(&x).unwrap();
        assert_eq!(a.len(), 122 * 13);
        assert_eq!(a, b);
    }

    #[test]
    fn silence_gives_identical_frames() {
        let m = mfcc();
        let a = m.frames(&vec![0.0; 32_000]).unwrap();
        // log floor vector under the DCT: only c0 is non-zero
        let c0 = (40f64).sqrt() * LOG_EPS.ln();
        for row in a.chunks(13) {
            assert_eq!(row, &a[..13]);
            assert!((row[0] - c0).abs() < 1e-9);
            assert!(row[1..].iter().all(|v| v.abs() < 1e-9));
        }
    }

    #[test]
    fn polarity_invariant() {
        let m = mfcc();
        let x = tone(32_000);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert_eq!(m.frames(&x).unwrap(), m.frames(&neg).unwrap());
    }

    #[test]
    fn filters_cover_band() {
        let m = mfcc();
        assert_eq!(m.filters.len(), 40);
        assert!(m.filters.iter().all(|(_, w)| !w.is_empty()));
    }
}
