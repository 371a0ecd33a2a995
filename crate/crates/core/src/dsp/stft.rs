use std::fmt;
use std::sync::Arc;

use realfft::num_complex::Complex64;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Frame layout of the analysis. No centre padding: frame `i` covers
/// samples `[i * hop, i * hop + win)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StftConfig {
    pub n_fft: usize,
    pub hop: usize,
    pub win: usize,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self { n_fft: 1024, hop: 256, win: 1024 }
    }
}

impl StftConfig {
    pub fn bins(&self) -> usize {
        self.n_fft / 2 + 1
    }

    /// `1 + floor((len - win) / hop)`, or zero when `len < win`.
    pub fn frame_count(&self, len: usize) -> usize {
        if len < self.win {
            0
        } else {
            1 + (len - self.win) / self.hop
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_fft == 0 || self.hop == 0 || self.win == 0 || self.win > self.n_fft || self.n_fft % 2 != 0 {
            return Err(Error::InvalidArgument(format!("invalid STFT config {self:?}")));
        }
        Ok(())
    }
}

/// Periodic Hann window.
pub fn hann_window(len: usize) -> Vec<f64> {
    (0..len)
        .map(|n| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * n as f64 / len as f64).cos())
        .collect()
}

/// Frames x bins complex matrix, row-major by frame.
#[derive(Clone, PartialEq)]
pub struct Spectrogram {
    frames: usize,
    bins: usize,
    data: Vec<Complex64>,
}

impl fmt::Debug for Spectrogram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Spectrogram").field("frames", &self.frames).field("bins", &self.bins).finish()
    }
}

impl Spectrogram {
    pub fn zeros(frames: usize, bins: usize) -> Self {
        Self { frames, bins, data: vec![Complex64::new(0.0, 0.0); frames * bins] }
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn get(&self, frame: usize, bin: usize) -> Complex64 {
        self.data[frame * self.bins + bin]
    }

    pub fn set(&mut self, frame: usize, bin: usize, value: Complex64) {
        self.data[frame * self.bins + bin] = value;
    }

    pub fn frame(&self, frame: usize) -> &[Complex64] {
        &self.data[frame * self.bins..(frame + 1) * self.bins]
    }

    pub fn frame_mut(&mut self, frame: usize) -> &mut [Complex64] {
        &mut self.data[frame * self.bins..(frame + 1) * self.bins]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Complex64> {
        self.data.iter()
    }
}

/// Below this overlap-add window energy the synthesis gain is capped, so the
/// partially covered edge samples cannot amplify inconsistent frames.
const SYNTHESIS_NORM_FLOOR: f64 = 0.1;

/// Reusable STFT analysis/synthesis engine. FFT plans are shared, so one
/// instance can serve many threads.
#[derive(Clone)]
pub struct Stft {
    config: StftConfig,
    window: Arc<Vec<f64>>,
    forward: Arc<dyn RealToComplex<f64>>,
    inverse: Arc<dyn ComplexToReal<f64>>,
}

impl fmt::Debug for Stft {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Stft").field("config", &self.config).finish()
    }
}

impl Stft {
    pub fn new(config: StftConfig) -> Result<Self> {
        config.validate()?;
        let mut planner = RealFftPlanner::<f64>::new();
        Ok(Self {
            config,
            window: Arc::new(hann_window(config.win)),
            forward: planner.plan_fft_forward(config.n_fft),
            inverse: planner.plan_fft_inverse(config.n_fft),
        })
    }

    pub fn config(&self) -> &StftConfig {
        &self.config
    }

    pub fn window(&self) -> &[f64] {
        &self.window
    }

    /// Analyse `samples`. Errors when shorter than one window.
    pub fn forward(&self, samples: &[f64]) -> Result<Spectrogram> {
        let StftConfig { n_fft, hop, win } = self.config;
        if samples.len() < win {
            return Err(Error::AudioTooShort { needed: win, got: samples.len() });
        }
        let frames = self.config.frame_count(samples.len());
        let bins = self.config.bins();
        let mut spec = Spectrogram::zeros(frames, bins);
        let mut buf = vec![0.0; n_fft];
        let mut scratch = self.forward.make_scratch_vec();
        for f in 0..frames {
            let start = f * hop;
            for (i, (b, &w)) in buf.iter_mut().zip(self.window.iter()).enumerate() {
                *b = samples[start + i] * w;
            }
            buf[win..].fill(0.0);
            self.forward
                .process_with_scratch(&mut buf, spec.frame_mut(f), &mut scratch)
                .expect("buffer sizes match plan");
        }
        Ok(spec)
    }

    /// Weighted overlap-add synthesis, trimmed or zero-padded to `len`.
    ///
    /// Samples covered by the full window overlap are reconstructed exactly
    /// from a consistent spectrogram.
    pub fn inverse(&self, spec: &Spectrogram, len: usize) -> Vec<f64> {
        let StftConfig { n_fft, hop, win } = self.config;
        let total = if spec.frames() == 0 { 0 } else { (spec.frames() - 1) * hop + win };
        let mut out = vec![0.0; total.max(len)];
        let mut norm = vec![0.0; total.max(len)];
        let mut freq = vec![Complex64::new(0.0, 0.0); self.config.bins()];
        let mut buf = vec![0.0; n_fft];
        let mut scratch = self.inverse.make_scratch_vec();
        let scale = 1.0 / n_fft as f64;
        for f in 0..spec.frames() {
            freq.copy_from_slice(spec.frame(f));
            // c2r requires purely real DC and Nyquist bins
            freq[0].im = 0.0;
            let last = freq.len() - 1;
            freq[last].im = 0.0;
            self.inverse
                .process_with_scratch(&mut freq, &mut buf, &mut scratch)
                .expect("buffer sizes match plan");
            let start = f * hop;
            for i in 0..win {
                let w = self.window[i];
                out[start + i] += buf[i] * scale * w;
                norm[start + i] += w * w;
            }
        }
        for (o, &n) in out.iter_mut().zip(&norm) {
            *o /= n.max(SYNTHESIS_NORM_FLOOR);
        }
        out.truncate(len);
        out
    }
}
