use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use realfft::num_complex::Complex64;
use realfft::RealFftPlanner;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{resample, to_f32, to_f64, AudioBuffer};
use crate::error::{Error, Result};

/// A parameterised, length-preserving signal transform.
///
/// The text form is `kind:param=value,...`, e.g. `noise:snr_db=20,seed=7`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TransformSpec {
    Identity,
    /// Additive white Gaussian noise at a whole-signal SNR.
    Noise { snr_db: f64, seed: u64 },
    /// Down-up round trip through an intermediate rate.
    Resample { rate_hz: u32 },
    /// Causal 4th-order Butterworth band-pass (2nd-order high-pass cascaded
    /// with a 2nd-order low-pass).
    Bandpass { low_hz: f64, high_hz: f64 },
    /// Hard limiter.
    Clip { threshold: f64 },
    /// Convolution with a synthetic exponentially decaying room response.
    Reverb { rt60_s: f64, seed: u64 },
}

impl TransformSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Identity => "identity",
            Self::Noise { .. } => "noise",
            Self::Resample { .. } => "resample",
            Self::Bandpass { .. } => "bandpass",
            Self::Clip { .. } => "clip",
            Self::Reverb { .. } => "reverb",
        }
    }

    /// Short condition label used in reports, e.g. `noise_20db`.
    pub fn label(&self) -> String {
        match *self {
            Self::Identity => "clean".into(),
            Self::Noise { snr_db, .. } => format!("noise_{snr_db}db"),
            Self::Resample { rate_hz } => format!("resample_{}k", rate_hz as f64 / 1000.0),
            Self::Bandpass { low_hz, high_hz } => format!("bandpass_{low_hz}_{high_hz}"),
            Self::Clip { threshold } => format!("clip_{threshold}"),
            Self::Reverb { rt60_s, .. } => format!("reverb_{rt60_s}s"),
        }
    }

    /// Check parameter ranges against a sample rate.
    pub fn validate(&self, sample_rate: u32) -> Result<()> {
        let nyquist = sample_rate as f64 / 2.0;
        let ok = match *self {
            Self::Identity => true,
            Self::Noise { snr_db, .. } => snr_db.is_finite(),
            Self::Resample { rate_hz } => rate_hz > 0 && rate_hz < sample_rate,
            Self::Bandpass { low_hz, high_hz } => low_hz > 0.0 && low_hz < high_hz && high_hz < nyquist,
            Self::Clip { threshold } => threshold > 0.0 && threshold <= 1.0,
            Self::Reverb { rt60_s, .. } => rt60_s > 0.0 && rt60_s.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("transform parameters out of range: {self}")))
        }
    }
}

impl fmt::Display for TransformSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Self::Identity => write!(f, "identity"),
            Self::Noise { snr_db, seed } => write!(f, "noise:snr_db={snr_db},seed={seed}"),
            Self::Resample { rate_hz } => write!(f, "resample:rate_hz={rate_hz}"),
            Self::Bandpass { low_hz, high_hz } => write!(f, "bandpass:low_hz={low_hz},high_hz={high_hz}"),
            Self::Clip { threshold } => write!(f, "clip:threshold={threshold}"),
            Self::Reverb { rt60_s, seed } => write!(f, "reverb:rt60_s={rt60_s},seed={seed}"),
        }
    }
}

impl FromStr for TransformSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, rest) = s.trim().split_once(':').unwrap_or((s.trim(), ""));
        let mut params = std::collections::BTreeMap::new();
        for pair in rest.split(',').filter(|p| !p.trim().is_empty()) {
            let (k, v) = pair
                .split_once('=')
                .ok_or_else(|| Error::Malformed(format!("transform parameter `{pair}` is not key=value")))?;
            params.insert(k.trim().to_string(), v.trim().to_string());
        }
        let mut take = |name: &str| params.remove(name);
        fn num<T: FromStr>(name: &str, v: Option<String>) -> Result<T> {
            let v = v.ok_or_else(|| Error::Malformed(format!("missing transform parameter `{name}`")))?;
            v.parse().map_err(|_| Error::Malformed(format!("bad value for `{name}`: {v}")))
        }
        let seed = |v: Option<String>| -> Result<u64> { v.map_or(Ok(0), |v| num("seed", Some(v))) };
        let spec = match kind {
            "identity" => Self::Identity,
            "noise" => Self::Noise { snr_db: num("snr_db", take("snr_db"))?, seed: seed(take("seed"))? },
            "resample" => Self::Resample { rate_hz: num("rate_hz", take("rate_hz"))? },
            "bandpass" => Self::Bandpass {
                low_hz: num("low_hz", take("low_hz"))?,
                high_hz: num("high_hz", take("high_hz"))?,
            },
            "clip" => Self::Clip { threshold: num("threshold", take("threshold"))? },
            "reverb" => Self::Reverb { rt60_s: num("rt60_s", take("rt60_s"))?, seed: seed(take("seed"))? },
            other => return Err(Error::UnknownTransform(other.to_string())),
        };
        if let Some(extra) = params.keys().next() {
            return Err(Error::Malformed(format!("unexpected parameter `{extra}` for {kind}")));
        }
        Ok(spec)
    }
}

impl Serialize for TransformSpec {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for TransformSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// Apply `spec` to `audio`. The output always has the input's length and
/// sample rate; no clamping is applied.
pub fn apply_transform(audio: &AudioBuffer, spec: &TransformSpec) -> Result<AudioBuffer> {
    spec.validate(audio.sample_rate)?;
    let sr = audio.sample_rate;
    let samples = match *spec {
        TransformSpec::Identity => return Ok(audio.clone()),
        TransformSpec::Clip { threshold } => {
            let t = threshold as f32;
            audio.samples.iter().map(|&s| s.clamp(-t, t)).collect()
        }
        TransformSpec::Noise { snr_db, seed } => to_f32(&add_noise(&to_f64(&audio.samples), snr_db, seed)),
        TransformSpec::Resample { rate_hz } => {
            let x = to_f64(&audio.samples);
            let mut y = resample(&resample(&x, sr, rate_hz), rate_hz, sr);
            y.resize(x.len(), 0.0);
            to_f32(&y)
        }
        TransformSpec::Bandpass { low_hz, high_hz } => {
            let mut x = to_f64(&audio.samples);
            Biquad::butterworth_highpass(low_hz, sr as f64).process(&mut x);
            Biquad::butterworth_lowpass(high_hz, sr as f64).process(&mut x);
            to_f32(&x)
        }
        TransformSpec::Reverb { rt60_s, seed } => {
            let x = to_f64(&audio.samples);
            let ir = room_impulse_response(x.len(), rt60_s, sr, seed);
            to_f32(&convolve_truncated(&x, &ir))
        }
    };
    Ok(AudioBuffer::new(samples, sr))
}

/// White Gaussian noise scaled so that `10 log10(Px / Pn)` equals `snr_db`
/// over the whole signal. Silent input is returned unchanged.
fn add_noise(x: &[f64], snr_db: f64, seed: u64) -> Vec<f64> {
    let px = x.iter().map(|v| v * v).sum::<f64>() / x.len().max(1) as f64;
    if px == 0.0 {
        return x.to_vec();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise: Vec<f64> = (0..x.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
    let pn_raw = noise.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
    let gain = (px / 10f64.powf(snr_db / 10.0) / pn_raw).sqrt();
    x.iter().zip(&noise).map(|(s, n)| s + gain * n).collect()
}

/// Direct-form II transposed second-order section.
#[derive(Debug, Clone, Copy)]
struct Biquad {
    b: [f64; 3],
    a: [f64; 2],
}

impl Biquad {
    /// Bilinear-transform Butterworth sections (Q = 1/sqrt 2) with
    /// frequency prewarping.
    fn butterworth(cutoff_hz: f64, sr: f64, highpass: bool) -> Self {
        let w0 = 2.0 * std::f64::consts::PI * cutoff_hz / sr;
        let (sin, cos) = w0.sin_cos();
        let alpha = sin / (2.0 * std::f64::consts::FRAC_1_SQRT_2);
        let a0 = 1.0 + alpha;
        let b = if highpass {
            [(1.0 + cos) / 2.0, -(1.0 + cos), (1.0 + cos) / 2.0]
        } else {
            [(1.0 - cos) / 2.0, 1.0 - cos, (1.0 - cos) / 2.0]
        };
        Self { b: b.map(|v| v / a0), a: [-2.0 * cos / a0, (1.0 - alpha) / a0] }
    }

    fn butterworth_highpass(cutoff_hz: f64, sr: f64) -> Self {
        Self::butterworth(cutoff_hz, sr, true)
    }

    fn butterworth_lowpass(cutoff_hz: f64, sr: f64) -> Self {
        Self::butterworth(cutoff_hz, sr, false)
    }

    fn process(&self, x: &mut [f64]) {
        let (mut z1, mut z2) = (0.0, 0.0);
        for v in x.iter_mut() {
            let input = *v;
            let out = self.b[0] * input + z1;
            z1 = self.b[1] * input - self.a[0] * out + z2;
            z2 = self.b[2] * input - self.a[1] * out;
            *v = out;
        }
    }
}

/// Unit direct path followed by a seeded Gaussian tail with amplitude
/// envelope `exp(-6.9077 t / RT60)` (60 dB energy decay at RT60), normalised
/// to unit peak and truncated to `len` samples.
fn room_impulse_response(len: usize, rt60_s: f64, sr: u32, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ir: Vec<f64> = (0..len)
        .map(|n| {
            if n == 0 {
                1.0
            } else {
                let t = n as f64 / sr as f64;
                let g: f64 = StandardNormal.sample(&mut rng);
                g * (-6.9077 * t / rt60_s).exp()
            }
        })
        .collect();
    let peak = ir.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    ir.iter_mut().for_each(|v| *v /= peak);
    ir
}

/// Linear convolution via FFT, keeping the first `x.len()` samples.
pub fn convolve_truncated(x: &[f64], h: &[f64]) -> Vec<f64> {
    let n = (x.len() + h.len()).next_power_of_two();
    let mut planner = RealFftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let spectrum = |v: &[f64]| {
        let mut buf = vec![0.0; n];
        buf[..v.len()].copy_from_slice(v);
        let mut out = fwd.make_output_vec();
        fwd.process(&mut buf, &mut out).expect("sizes match plan");
        out
    };
    let (a, b) = (spectrum(x), spectrum(h));
    let mut prod: Vec<Complex64> = a.iter().zip(&b).map(|(p, q)| p * q).collect();
    prod[0].im = 0.0;
    let last = prod.len() - 1;
    prod[last].im = 0.0;
    let mut out = vec![0.0; n];
    inv.process(&mut prod, &mut out).expect("sizes match plan");
    out.truncate(x.len());
    out.iter_mut().for_each(|v| *v /= n as f64);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::measure_snr;

    fn signal(n: usize) -> AudioBuffer {
        let samples = (0..n)
            .map(|i| {
                let t = i as f64 / 16_000.0;
                (0.5 * (2.0 * std::f64::consts::PI * 440.0 * t).sin() + 0.3 * (2.0 * std::f64::consts::PI * 1250.0 * t).sin())
                    as f32
            })
            .collect();
        AudioBuffer::new(samples, 16_000)
    }

    #[test]
    fn parse_and_display_round_trip() {
        for text in [
            "identity",
            "noise:snr_db=20,seed=7",
            "resample:rate_hz=8000",
            "bandpass:low_hz=300,high_hz=3400",
            "clip:threshold=0.95",
            "reverb:rt60_s=0.3,seed=1",
        ] {
            let spec: TransformSpec = text.parse().unwrap();
            assert_eq!(spec.to_string(), text);
        }
        assert_eq!("noise:snr_db=10".parse::<TransformSpec>().unwrap(), TransformSpec::Noise { snr_db: 10.0, seed: 0 });
    }

    #[test]
    fn unknown_or_malformed_rejected() {
        assert!(matches!("echo:delay=3".parse::<TransformSpec>(), Err(Error::UnknownTransform(_))));
        assert!("noise:snr_db".parse::<TransformSpec>().is_err());
        assert!("noise:snr_db=x".parse::<TransformSpec>().is_err());
        assert!("clip:threshold=0.9,extra=1".parse::<TransformSpec>().is_err());
        assert!(apply_transform(&signal(100), &TransformSpec::Clip { threshold: 1.5 }).is_err());
    }

    #[test]
    fn clip_limits_at_threshold() {
        let audio = AudioBuffer::new(vec![0.99, -0.99, 0.5, 0.0], 16_000);
        let y = apply_transform(&audio, &TransformSpec::Clip { threshold: 0.95 }).unwrap();
        let peak = y.samples.iter().fold(0.0f32, |m, v| m.max(v.abs()));
        assert_eq!(peak, 0.95f32);
        assert_eq!(y.samples[2], 0.5);
    }

    #[test]
    fn identity_is_bit_identical() {
        let audio = signal(5000);
        assert_eq!(apply_transform(&audio, &TransformSpec::Identity).unwrap(), audio);
    }

    #[test]
    fn noise_hits_target_snr() {
        let audio = signal(32_000);
        for snr in [10.0, 20.0, 30.0] {
            let y = apply_transform(&audio, &TransformSpec::Noise { snr_db: snr, seed: 3 }).unwrap();
            let measured = measure_snr(&audio.samples, &y.samples).unwrap();
            assert!((measured - snr).abs() < 0.1, "{snr}: {measured}");
        }
    }

    #[test]
    fn every_kind_preserves_length_and_rate() {
        let audio = signal(32_123);
        for text in [
            "identity",
            "noise:snr_db=20,seed=7",
            "resample:rate_hz=8000",
            "resample:rate_hz=12000",
            "bandpass:low_hz=300,high_hz=3400",
            "clip:threshold=0.95",
            "reverb:rt60_s=0.3,seed=1",
        ] {
            let y = apply_transform(&audio, &text.parse().unwrap()).unwrap();
            assert_eq!(y.len(), audio.len(), "{text}");
            assert_eq!(y.sample_rate, 16_000);
        }
    }

    #[test]
    fn butterworth_gain_at_cutoff_is_minus_3db() {
        // steady-state gain of a tone at the cutoff frequency
        for (hp, f) in [(true, 300.0), (false, 3400.0)] {
            let mut x: Vec<f64> =
                (0..64_000).map(|i| (2.0 * std::f64::consts::PI * f * i as f64 / 16_000.0).sin()).collect();
            Biquad::butterworth(f, 16_000.0, hp).process(&mut x);
            let rms = (x[32_000..].iter().map(|v| v * v).sum::<f64>() / 32_000.0).sqrt();
            let gain_db = 20.0 * (rms / std::f64::consts::FRAC_1_SQRT_2).log10();
            assert!((gain_db + 3.0103).abs() < 0.05, "gain {gain_db}");
        }
    }

    #[test]
    fn reverb_ir_shape() {
        let ir = room_impulse_response(16_000, 0.3, 16_000, 9);
        assert_eq!(ir.len(), 16_000);
        let peak = ir.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!((peak - 1.0).abs() < 1e-12);
        // tail energy decays: last 0.1 s is far below the first 0.1 s
        let e = |r: std::ops::Range<usize>| ir[r].iter().map(|v| v * v).sum::<f64>();
        assert!(e(14_400..16_000) < 1e-4 * e(1..1_600));
        assert_eq!(ir, room_impulse_response(16_000, 0.3, 16_000, 9));
    }

    #[test]
    fn fft_convolution_matches_direct() {
        let x: Vec<f64> = (0..50).map(|i| (i as f64 * 0.37).sin()).collect();
        let h: Vec<f64> = (0..20).map(|i| 1.0 / (1.0 + i as f64)).collect();
        let fast = convolve_truncated(&x, &h);
        for n in 0..x.len() {
            let direct: f64 = (0..=n.min(h.len() - 1)).map(|k| h[k] * x[n - k]).sum();
            assert!((fast[n] - direct).abs() < 1e-10);
        }
    }
}
