//! Deterministic speech-like test signals.
//!
//! Each utterance is a sequence of syllables: voiced segments (a harmonic
//! stack on a gliding, vibrato-modulated f0, shaped by three formant
//! resonances, plus formant-filtered breath noise), fricatives (high-band
//! filtered noise) and short pauses, over a faint room-noise floor. The
//! result is scaled to a target RMS with a peak ceiling.

use std::f64::consts::PI;

use merklespeech_core::dsp::AudioBuffer;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

const JITTER: f64 = 0.3;
const BREATH: f64 = 0.35;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub sample_rate: u32,
    pub min_secs: f64,
    pub max_secs: f64,
    pub min_rms: f64,
    pub max_rms: f64,
    /// Absolute peak ceiling applied after RMS scaling.
    pub max_peak: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self { sample_rate: 16_000, min_secs: 6.0, max_secs: 12.0, min_rms: 0.06, max_rms: 0.15, max_peak: 0.9 }
    }
}

/// `n_files` utterances; file `k` depends only on `(seed, k)`.
pub fn synth_corpus(n_files: usize, seed: u64) -> Vec<AudioBuffer> {
    synth_corpus_with(n_files, seed, &SynthConfig::default())
}

pub fn synth_corpus_with(n_files: usize, seed: u64, config: &SynthConfig) -> Vec<AudioBuffer> {
    (0..n_files)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64 + 1);
            synth_utterance(&mut rng, config)
        })
        .collect()
}

/// Two-pole resonator (constant 0 dB peak gain bandpass, RBJ form).
#[derive(Debug, Clone, Copy)]
struct Resonator {
    b0: f64,
    b2: f64,
    a1: f64,
    a2: f64,
    z1: f64,
    z2: f64,
}

impl Resonator {
    fn new(center_hz: f64, bandwidth_hz: f64, sample_rate: f64) -> Self {
        let w0 = 2.0 * PI * center_hz / sample_rate;
        let q = center_hz / bandwidth_hz;
        let alpha = w0.sin() / (2.0 * q);
        let a0 = 1.0 + alpha;
        Self { b0: alpha / a0, b2: -alpha / a0, a1: -2.0 * w0.cos() / a0, a2: (1.0 - alpha) / a0, z1: 0.0, z2: 0.0 }
    }

    fn process(&mut self, x: f64) -> f64 {
        let y = self.b0 * x + self.z1;
        self.z1 = -self.a1 * y + self.z2;
        self.z2 = self.b2 * x - self.a2 * y;
        y
    }
}

#[derive(Debug, Clone, Copy)]
struct Formants {
    freqs: [f64; 3],
    bandwidths: [f64; 3],
    gains: [f64; 3],
}

impl Formants {
    fn random(rng: &mut impl Rng) -> Self {
        Self {
            freqs: [rng.gen_range(300.0..850.0), rng.gen_range(900.0..2300.0), rng.gen_range(2400.0..3300.0)],
            bandwidths: [rng.gen_range(60.0..120.0), rng.gen_range(80.0..160.0), rng.gen_range(120.0..250.0)],
            gains: [1.0, rng.gen_range(0.4..0.8), rng.gen_range(0.15..0.4)],
        }
    }

    /// Magnitude response of the formant envelope at `f` Hz.
    fn envelope(&self, f: f64) -> f64 {
        let peaks: f64 = (0..3)
            .map(|k| self.gains[k] / (1.0 + ((f - self.freqs[k]) / self.bandwidths[k]).powi(2)).sqrt())
            .sum();
        // gentle source roll-off keeps inter-formant regions populated
        peaks + 0.03 / (1.0 + f / 1000.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Segment {
    Voiced,
    Fricative,
    Pause,
}

/// One utterance drawn from `rng`.
pub fn synth_utterance(rng: &mut impl Rng, config: &SynthConfig) -> AudioBuffer {
    let sr = config.sample_rate as f64;
    let n = (rng.gen_range(config.min_secs..=config.max_secs) * sr).round() as usize;
    let speaker_f0: f64 = rng.gen_range(95.0..230.0);
    let mut out = vec![0.0f64; n];

    let mut pos = 0;
    let mut phase = 0.0f64;
    while pos < n {
        let kind = match rng.gen_range(0.0..1.0) {
            p if p < 0.68 => Segment::Voiced,
            p if p < 0.86 => Segment::Fricative,
            _ => Segment::Pause,
        };
        let secs = match kind {
            Segment::Voiced => rng.gen_range(0.12..0.38),
            Segment::Fricative => rng.gen_range(0.06..0.18),
            Segment::Pause => rng.gen_range(0.04..0.22),
        };
        let len = ((secs * sr) as usize).min(n - pos);
        let level: f64 = rng.gen_range(0.35..1.0);
        let ramp = (len / 5).max(1);
        let envelope = |i: usize| -> f64 {
            let rise = (i as f64 / ramp as f64).min(1.0);
            let fall = ((len - i) as f64 / ramp as f64).min(1.0);
            level * (0.5 - 0.5 * (PI * rise).cos()) * (0.5 - 0.5 * (PI * fall).cos())
        };
        match kind {
            Segment::Voiced => {
                let formants = Formants::random(rng);
                let f0_start = speaker_f0 * rng.gen_range(0.85..1.2);
                let f0_end = speaker_f0 * rng.gen_range(0.8..1.15);
                let vibrato_hz = rng.gen_range(3.0..7.0);
                let vibrato_depth = rng.gen_range(0.005..0.02);
                let mut breath: Vec<Resonator> =
                    (0..3).map(|k| Resonator::new(formants.freqs[k], 2.0 * formants.bandwidths[k], sr)).collect();
                let mut amps: Vec<f64> = Vec::new();
                let mut jitter = 0.0f64;
                for i in 0..len {
                    let u = i as f64 / len as f64;
                    let t = i as f64 / sr;
                    let w: f64 = StandardNormal.sample(rng);
                    jitter = 0.999 * jitter + 0.001 * w * JITTER;
                    let f0 = (f0_start + (f0_end - f0_start) * u)
                        * (1.0 + vibrato_depth * (2.0 * PI * vibrato_hz * t).sin() + jitter);
                    phase = (phase + 2.0 * PI * f0 / sr) % (2.0 * PI);
                    if i % 64 == 0 {
                        let harmonics = (7000.0 / f0) as usize;
                        amps = (1..=harmonics).map(|h| formants.envelope(h as f64 * f0) / (h as f64).sqrt()).collect();
                    }
                    let voiced: f64 = amps.iter().enumerate().map(|(h, a)| a * ((h + 1) as f64 * phase).sin()).sum();
                    let w: f64 = StandardNormal.sample(rng);
                    let aspiration: f64 = breath.iter_mut().map(|r| r.process(w)).sum();
                    out[pos + i] += envelope(i) * (voiced + BREATH * aspiration);
                }
            }
            Segment::Fricative => {
                let mut band = Resonator::new(rng.gen_range(3000.0..6000.0), rng.gen_range(1500.0..3000.0), sr);
                for i in 0..len {
                    let w: f64 = StandardNormal.sample(rng);
                    out[pos + i] += 0.6 * envelope(i) * band.process(w);
                }
            }
            Segment::Pause => {}
        }
        pos += len;
    }

    let rms = |v: &[f64]| (v.iter().map(|x| x * x).sum::<f64>() / v.len().max(1) as f64).sqrt();
    let speech_rms = rms(&out).max(1e-12);
    let floor = speech_rms * 10f64.powf(-45.0 / 20.0);
    for s in &mut out {
        let w: f64 = StandardNormal.sample(rng);
        *s += floor * w;
    }

    let target = rng.gen_range(config.min_rms..=config.max_rms);
    let mut gain = target / rms(&out).max(1e-12);
    let peak = out.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if peak * gain > config.max_peak {
        gain = config.max_peak / peak;
    }
    AudioBuffer::new(out.iter().map(|x| (x * gain) as f32).collect(), config.sample_rate)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rms(v: &[f32]) -> f64 {
        (v.iter().map(|&x| x as f64 * x as f64).sum::<f64>() / v.len() as f64).sqrt()
    }

    #[test]
    fn corpus_is_deterministic() {
        assert_eq!(synth_corpus(3, 17), synth_corpus(3, 17));
        assert_ne!(synth_corpus(1, 17), synth_corpus(1, 18));
    }

    #[test]
    fn files_are_independent_of_corpus_size() {
        let small = synth_corpus(2, 5);
        let large = synth_corpus(4, 5);
        assert_eq!(small[..], large[..2]);
    }

    #[test]
    fn level_and_length_constraints() {
        for audio in synth_corpus(8, 3) {
            assert_eq!(audio.sample_rate, 16_000);
            let secs = audio.duration_secs();
            assert!((6.0..=12.0).contains(&secs), "{secs}");
            assert!(audio.len() / 32_000 >= 3);
            let r = rms(&audio.samples);
            assert!((0.05..=0.3).contains(&r), "rms {r}");
            assert!(audio.samples.iter().all(|s| s.abs() <= 0.9));
        }
    }
}
