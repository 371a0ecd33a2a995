//! 256-bit MFCC fingerprints with seeded random-projection binarisation.
//!
//! A chunk's frame-wise MFCC matrix (122 frames x 13 coefficients for a
//! 2 s chunk) is flattened row-major, multiplied by a fixed Gaussian
//! projection matrix and binarised by sign. The fingerprint is deliberately
//! strict: any change to the short-time magnitude spectrum perturbs at least
//! some projections across zero.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dsp::{to_f64, Mfcc, MfccConfig, StftConfig};
use crate::error::{Error, Result};

pub const FINGERPRINT_BITS: usize = 256;
pub const FINGERPRINT_BYTES: usize = FINGERPRINT_BITS / 8;

/// How the MFCC matrix is reduced to a vector before projection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    Flatten,
}

/// Committed fingerprint parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FingerprintSpec {
    pub bits: usize,
    pub n_mfcc: usize,
    pub n_mels: usize,
    pub mel_fmin_hz: f64,
    pub mel_fmax_hz: f64,
    pub projection_seed: u64,
    pub pooling: Pooling,
    pub stft: StftConfig,
}

impl Default for FingerprintSpec {
    fn default() -> Self {
        Self {
            bits: FINGERPRINT_BITS,
            n_mfcc: 13,
            n_mels: 40,
            mel_fmin_hz: 0.0,
            mel_fmax_hz: 8000.0,
            projection_seed: 1122,
            pooling: Pooling::Flatten,
            stft: StftConfig::default(),
        }
    }
}

/// An m-bit fingerprint, most significant bit first.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Fingerprint(#[serde(with = "crate::hexbytes")] pub [u8; FINGERPRINT_BYTES]);

impl Fingerprint {
    pub fn as_bytes(&self) -> &[u8; FINGERPRINT_BYTES] {
        &self.0
    }

    pub fn bit(&self, j: usize) -> bool {
        self.0[j / 8] >> (7 - j % 8) & 1 == 1
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Display for Fingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for Fingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Fingerprint({})", self.to_hex())
    }
}

impl FromStr for Fingerprint {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        crate::hexbytes::decode_array(s).map(Fingerprint).map_err(Error::Malformed)
    }
}

/// Number of differing bits.
pub fn hamming(a: &Fingerprint, b: &Fingerprint) -> u32 {
    a.0.iter().zip(&b.0).map(|(x, y)| (x ^ y).count_ones()).sum()
}

/// Hamming distance between raw fingerprint byte strings of equal length.
pub fn hamming_bytes(a: &[u8], b: &[u8]) -> Result<u32> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch { expected: a.len(), got: b.len() });
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x ^ y).count_ones()).sum())
}

fn splitmix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Uniform double in `[0, 1)` for `(seed, counter)`: SplitMix64 finaliser
/// applied to `seed + (counter + 1) * golden_gamma`, top 53 bits.
fn counter_uniform(seed: u64, counter: u64) -> f64 {
    let x = splitmix64(seed.wrapping_add(counter.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15)));
    (x >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Row-major `rows x cols` matrix of i.i.d. standard normals. Entry `k`
/// uses the Box–Muller cosine branch on counters `2k` and `2k + 1`.
pub fn projection_matrix(seed: u64, rows: usize, cols: usize) -> Vec<f64> {
    (0..rows * cols)
        .map(|k| {
            let u1 = counter_uniform(seed, 2 * k as u64);
            let u2 = counter_uniform(seed, 2 * k as u64 + 1);
            (-2.0 * (1.0 - u1).ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
        })
        .collect()
}

/// Fingerprint extractor for a fixed chunk length. Cheap to clone; the
/// projection matrix is shared.
#[derive(Debug, Clone)]
pub struct Fingerprinter {
    spec: FingerprintSpec,
    chunk_len: usize,
    input_dim: usize,
    mfcc: Mfcc,
    projection: Arc<Vec<f64>>,
}

impl Fingerprinter {
    pub fn new(spec: FingerprintSpec, sample_rate: u32, chunk_len: usize) -> Result<Self> {
        if spec.bits == 0 || spec.bits % 8 != 0 || spec.bits != FINGERPRINT_BITS {
            return Err(Error::InvalidArgument(format!("fingerprint length must be {FINGERPRINT_BITS} bits")));
        }
        let frames = spec.stft.frame_count(chunk_len);
        if frames == 0 {
            return Err(Error::AudioTooShort { needed: spec.stft.win, got: chunk_len });
        }
        let mfcc = Mfcc::new(
            MfccConfig {
                n_mfcc: spec.n_mfcc,
                n_mels: spec.n_mels,
                fmin_hz: spec.mel_fmin_hz,
                fmax_hz: spec.mel_fmax_hz,
                sample_rate,
            },
            spec.stft,
        )?;
        let input_dim = frames * spec.n_mfcc;
        let projection = Arc::new(projection_matrix(spec.projection_seed, input_dim, spec.bits));
        Ok(Self { spec, chunk_len, input_dim, mfcc, projection })
    }

    pub fn spec(&self) -> &FingerprintSpec {
        &self.spec
    }

    /// Dimension of the pooled MFCC vector (rows of the projection).
    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn projection(&self) -> &[f64] {
        &self.projection
    }

    /// Projected values before binarisation.
    pub fn project(&self, chunk: &[f32]) -> Result<Vec<f64>> {
        if chunk.len() != self.chunk_len {
            return Err(Error::LengthMismatch { expected: self.chunk_len, got: chunk.len() });
        }
        let features = match self.spec.pooling {
            Pooling::Flatten => self.mfcc.frames(&to_f64(chunk))?,
        };
        debug_assert_eq!(features.len(), self.input_dim);
        let cols = self.spec.bits;
        let mut out = vec![0.0; cols];
        for (v, row) in features.iter().zip(self.projection.chunks_exact(cols)) {
            for (o, p) in out.iter_mut().zip(row) {
                *o += v * p;
            }
        }
        Ok(out)
    }

    /// Bit `j` is set iff projection `j` is `>= 0`.
    pub fn compute(&self, chunk: &[f32]) -> Result<Fingerprint> {
        let projected = self.project(chunk)?;
        let mut bytes = [0u8; FINGERPRINT_BYTES];
        for (j, &v) in projected.iter().enumerate() {
            if v >= 0.0 {
                bytes[j / 8] |= 0x80 >> (j % 8);
            }
        }
        Ok(Fingerprint(bytes))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fingerprinter() -> Fingerprinter {
        Fingerprinter::new(FingerprintSpec::default(), 16_000, 32_000).unwrap()
    }

    fn chunk(seed: u64) -> Vec<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f0: f64 = rng.gen_range(100.0..250.0);
        (0..32_000)
            .map(|i| {
                let t = i as f64 / 16_000.0;
                let env = 0.5 + 0.5 * (2.0 * std::f64::consts::PI * 3.0 * t).sin();
                let tone: f64 = (1..8).map(|h| (2.0 * std::f64::consts::PI * f0 * h as f64 * t).sin() / h as f64).sum();
                (0.1 * env * tone + 0.01 * rng.gen_range(-1.0..1.0)) as f32
            })
            .collect()
    }

    #[test]
    fn matrix_shape_is_frames_times_coefficients() {
        let fp = fingerprinter();
        assert_eq!(fp.input_dim(), 122 * 13);
        assert_eq!(fp.input_dim(), 1586);
        assert_eq!(fp.projection().len(), 1586 * 256);
    }

    #[test]
    fn matrix_is_seed_deterministic() {
        assert_eq!(projection_matrix(1122, 50, 256), projection_matrix(1122, 50, 256));
        let (a, b) = (projection_matrix(1122, 1586, 256), projection_matrix(1123, 1586, 256));
        let differ = a.iter().zip(&b).filter(|(x, y)| x != y).count();
        assert!(differ as f64 > 0.99 * a.len() as f64);
    }

    #[test]
    fn matrix_entries_are_standard_normal() {
        let m = projection_matrix(1122, 1586, 256);
        let n = m.len() as f64;
        let mean = m.iter().sum::<f64>() / n;
        let var = m.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() < 0.01, "mean {mean}");
        assert!((var - 1.0).abs() < 0.01, "var {var}");
    }

    #[test]
    fn deterministic_fingerprint() {
        let fp = fingerprinter();
        let x = chunk(1);
        assert_eq!(fp.compute(&x).unwrap(), fp.compute(&x).unwrap());
    }

    #[test]
    fn single_sample_perturbation_changes_bits() {
        let fp = fingerprinter();
        let x = chunk(2);
        let mut y = x.clone();
        y[16_000] += 0.2;
        assert!(hamming(&fp.compute(&x).unwrap(), &fp.compute(&y).unwrap()) > 0);
    }

    #[test]
    fn wrong_length_rejected() {
        let fp = fingerprinter();
        assert!(matches!(fp.compute(&[0.0; 31_999]), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn hamming_extremes() {
        let a = Fingerprint([0x5A; 32]);
        let not_a = Fingerprint(a.0.map(|b| !b));
        assert_eq!(hamming(&a, &a), 0);
        assert_eq!(hamming(&a, &not_a), 256);
        assert!(hamming_bytes(&a.0, &a.0[..31]).is_err());
        assert_eq!(hamming_bytes(&a.0, &not_a.0).unwrap(), 256);
    }

    #[test]
    fn random_pairs_average_half_the_bits() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let total: u32 = (0..1000)
            .map(|_| {
                let a = Fingerprint(std::array::from_fn(|_| rng.gen()));
                let b = Fingerprint(std::array::from_fn(|_| rng.gen()));
                hamming(&a, &b)
            })
            .sum();
        let mean = total as f64 / 1000.0;
        assert!((mean - 128.0).abs() < 10.0, "{mean}");
    }

    #[test]
    fn hex_is_64_lowercase_chars() {
        let fp = fingerprinter().compute(&chunk(3)).unwrap();
        let h = fp.to_hex();
        assert_eq!(h.len(), 64);
        assert_eq!(h.parse::<Fingerprint>().unwrap(), fp);
        assert_eq!(serde_json::to_string(&fp).unwrap(), format!("\"{h}\""));
    }
}
