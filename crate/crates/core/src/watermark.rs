//! QIM watermark in the STFT log-magnitude domain.
//!
//! Each of the 320 interleaved codeword bits is carried by `redundancy`
//! time-frequency cells drawn by a keyed shuffle of the in-band
//! (frame, bin) grid. A cell carries bit `b` when `log10(|X| + eps)` sits on
//! the lattice `alpha * (Z + b/2)`. Embedding alternates between quantising
//! the carrier cells and resynthesising, so that the cells of the
//! *re-analysed* waveform decode correctly. Decoding takes the nearest coset
//! per cell and a majority vote per bit.

use std::sync::Arc;

use realfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dsp::{to_f64, Spectrogram, Stft, StftConfig, LOG_EPS};
use crate::error::{Error, Result};
use crate::payload::{self, keyed_permutation, Interleaver, PayloadError, PayloadFields, CODEWORD_BITS, PACKED_LEN};

const CARRIER_STREAM: u64 = 2;

/// Secret key driving carrier selection and interleaving.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WatermarkKey {
    pub seed: u64,
}

impl Default for WatermarkKey {
    fn default() -> Self {
        Self { seed: 1460 }
    }
}

/// Logarithm applied to carrier magnitudes before quantisation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogBase {
    Natural,
    Base10,
}

impl LogBase {
    fn ln_base(self) -> f64 {
        match self {
            LogBase::Natural => 1.0,
            LogBase::Base10 => std::f64::consts::LN_10,
        }
    }
}

/// Committed watermark channel parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QimSpec {
    /// Quantisation step in `log_base` magnitude units.
    pub alpha: f64,
    pub log_base: LogBase,
    /// Carrier cells per codeword bit.
    pub redundancy: usize,
    pub band_low_hz: f64,
    pub band_high_hz: f64,
    pub stft: StftConfig,
    pub max_iters: usize,
    /// Gain applied to each round's carrier update. An isolated cell keeps
    /// roughly half of a change through resynthesis and re-analysis, so a
    /// gain near 2 lands it close to its lattice point in one round.
    pub relaxation: f64,
    /// After every bit decodes, embedding keeps iterating (up to `max_iters`)
    /// until this fraction of individual carriers decodes to its bit.
    pub target_agreement: f64,
}

impl Default for QimSpec {
    fn default() -> Self {
        Self {
            alpha: 0.6,
            log_base: LogBase::Base10,
            redundancy: 16,
            band_low_hz: 300.0,
            band_high_hz: 3400.0,
            stft: StftConfig::default(),
            max_iters: 20,
            relaxation: 2.0,
            target_agreement: 0.98,
        }
    }
}

impl QimSpec {
    pub fn validate(&self, sample_rate: u32) -> Result<()> {
        let nyquist = sample_rate as f64 / 2.0;
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidArgument(format!("alpha must be positive, got {}", self.alpha)));
        }
        if self.redundancy == 0 || self.max_iters == 0 {
            return Err(Error::InvalidArgument("redundancy and max_iters must be at least 1".into()));
        }
        if !(self.relaxation > 0.0 && self.relaxation < 4.0) {
            return Err(Error::InvalidArgument(format!("relaxation must lie in (0, 4), got {}", self.relaxation)));
        }
        if !(0.0..=1.0).contains(&self.target_agreement) {
            return Err(Error::InvalidArgument(format!(
                "target_agreement must lie in [0, 1], got {}",
                self.target_agreement
            )));
        }
        if !(0.0 <= self.band_low_hz && self.band_low_hz < self.band_high_hz && self.band_high_hz <= nyquist) {
            return Err(Error::InvalidArgument(format!(
                "band {}..{} Hz not within Nyquist {nyquist} Hz",
                self.band_low_hz, self.band_high_hz
            )));
        }
        self.stft.validate()
    }

    /// `log_base` logarithm of a magnitude, floored by the shared epsilon.
    pub fn log_magnitude(&self, mag: f64) -> f64 {
        (mag + LOG_EPS).ln() / self.log_base.ln_base()
    }

    /// Inverse of [`QimSpec::log_magnitude`], floored at zero.
    pub fn magnitude(&self, log_mag: f64) -> f64 {
        ((log_mag * self.log_base.ln_base()).exp() - LOG_EPS).max(0.0)
    }

    /// Inclusive range of FFT bins whose centre lies in the band.
    pub fn band_bins(&self, sample_rate: u32) -> std::ops::RangeInclusive<usize> {
        let bin_hz = sample_rate as f64 / self.stft.n_fft as f64;
        let lo = (self.band_low_hz / bin_hz).ceil() as usize;
        let hi = ((self.band_high_hz / bin_hz).floor() as usize).min(self.stft.bins() - 1);
        lo..=hi
    }
}

/// `alpha * (round(x / alpha - bit / 2) + bit / 2)`, rounding half away
/// from zero.
pub fn qim_quantize(x: f64, alpha: f64, bit: bool) -> f64 {
    let offset = if bit { 0.5 } else { 0.0 };
    alpha * ((x / alpha - offset).round() + offset)
}

/// Nearest-coset hard decision.
pub fn qim_decide(x: f64, alpha: f64) -> bool {
    let d0 = (x - qim_quantize(x, alpha, false)).abs();
    let d1 = (x - qim_quantize(x, alpha, true)).abs();
    d1 < d0
}

/// `cos(2 pi x / alpha)`: +1 on the bit-0 lattice, -1 on the bit-1 lattice.
pub fn qim_soft(x: f64, alpha: f64) -> f64 {
    (2.0 * std::f64::consts::PI * x / alpha).cos()
}

/// Majority over a bit's carrier decisions; a tie decides 1.
pub fn majority(ones: usize, total: usize) -> bool {
    2 * ones >= total
}

/// Repeat-consistency score: mean over bits of `|mean of qim_soft|` over the
/// bit's carriers. Input is grouped by bit, `redundancy` values each.
pub fn consistency_score(log_mags: &[f64], redundancy: usize, alpha: f64) -> f64 {
    let groups = log_mags.chunks_exact(redundancy);
    let n = groups.len();
    if n == 0 {
        return 0.0;
    }
    groups
        .map(|g| (g.iter().map(|&x| qim_soft(x, alpha)).sum::<f64>() / redundancy as f64).abs())
        .sum::<f64>()
        / n as f64
}

/// Carrier cells for every codeword bit. Bit `j` owns
/// `cells[j * redundancy .. (j + 1) * redundancy]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CarrierMap {
    redundancy: usize,
    cells: Vec<(usize, usize)>,
    available: usize,
}

impl CarrierMap {
    /// Keyed shuffle of the in-band (frame, bin) grid of a `chunk_len`-sample
    /// chunk; the first `320 * redundancy` cells are assigned to bits in
    /// order. Depends only on the key, never on the CID.
    pub fn derive(key: &WatermarkKey, spec: &QimSpec, sample_rate: u32, chunk_len: usize) -> Result<Self> {
        spec.validate(sample_rate)?;
        let bins = spec.band_bins(sample_rate);
        let (lo, n_bins) = (*bins.start(), bins.count());
        let frames = spec.stft.frame_count(chunk_len);
        let available = frames * n_bins;
        let needed = CODEWORD_BITS * spec.redundancy;
        if needed > available {
            return Err(Error::CapacityExceeded { needed, available });
        }
        let perm = keyed_permutation(key.seed, CARRIER_STREAM, available);
        let cells = perm[..needed].iter().map(|&c| (c / n_bins, lo + c % n_bins)).collect();
        Ok(Self { redundancy: spec.redundancy, cells, available })
    }

    pub fn redundancy(&self) -> usize {
        self.redundancy
    }

    /// In-band cells that were available for selection.
    pub fn available(&self) -> usize {
        self.available
    }

    pub fn cells(&self) -> &[(usize, usize)] {
        &self.cells
    }

    pub fn bit_cells(&self, bit: usize) -> &[(usize, usize)] {
        &self.cells[bit * self.redundancy..(bit + 1) * self.redundancy]
    }
}

/// Result of embedding one chunk.
#[derive(Debug, Clone)]
pub struct EmbedOutcome {
    pub samples: Vec<f64>,
    /// Every codeword bit majority-decodes from the re-analysed output.
    pub converged: bool,
    /// First round after which every bit majority-decoded.
    pub converged_at: Option<usize>,
    /// Quantise/resynthesise rounds executed.
    pub iterations: usize,
    /// Fraction of carriers whose own hard decision matches their bit.
    pub agreement: f64,
}

/// Result of decoding one chunk.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionResult {
    pub decode_ok: bool,
    pub payload: Option<PayloadFields>,
    pub packed: Option<[u8; PACKED_LEN]>,
    pub corrected_bytes: usize,
    pub failure: Option<PayloadError>,
    pub score: f64,
}

/// Embedder/detector for one key and parameter set. Cheap to clone and
/// shareable across threads.
#[derive(Debug, Clone)]
pub struct Watermarker {
    spec: QimSpec,
    chunk_len: usize,
    stft: Stft,
    carriers: Arc<CarrierMap>,
    interleaver: Arc<Interleaver>,
}

impl Watermarker {
    pub fn new(key: &WatermarkKey, spec: QimSpec, sample_rate: u32, chunk_len: usize) -> Result<Self> {
        let carriers = CarrierMap::derive(key, &spec, sample_rate, chunk_len)?;
        Ok(Self {
            spec,
            chunk_len,
            stft: Stft::new(spec.stft)?,
            carriers: Arc::new(carriers),
            interleaver: Arc::new(Interleaver::new(key.seed)),
        })
    }

    pub fn spec(&self) -> &QimSpec {
        &self.spec
    }

    pub fn carriers(&self) -> &CarrierMap {
        &self.carriers
    }

    pub fn interleaver(&self) -> &Interleaver {
        &self.interleaver
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.chunk_len {
            return Err(Error::LengthMismatch { expected: self.chunk_len, got: len });
        }
        Ok(())
    }

    /// Carrier log-magnitudes grouped by bit.
    fn carrier_log_mags(&self, spec: &Spectrogram) -> Vec<f64> {
        self.carriers.cells().iter().map(|&(f, k)| self.spec.log_magnitude(spec.get(f, k).norm())).collect()
    }

    fn hard_bits(&self, log_mags: &[f64]) -> [bool; CODEWORD_BITS] {
        let r = self.carriers.redundancy();
        std::array::from_fn(|j| {
            let ones = log_mags[j * r..(j + 1) * r].iter().filter(|&&x| qim_decide(x, self.spec.alpha)).count();
            majority(ones, r)
        })
    }

    /// Carrier log-magnitudes of a chunk, grouped by bit.
    pub fn observe(&self, chunk: &[f32]) -> Result<Vec<f64>> {
        self.check_len(chunk.len())?;
        Ok(self.carrier_log_mags(&self.stft.forward(&to_f64(chunk))?))
    }

    /// Majority-decoded (still interleaved) codeword bits.
    pub fn decode_bits(&self, chunk: &[f32]) -> Result<[bool; CODEWORD_BITS]> {
        Ok(self.hard_bits(&self.observe(chunk)?))
    }

    fn agreement(&self, log_mags: &[f64], bits: &[bool; CODEWORD_BITS]) -> f64 {
        let r = self.carriers.redundancy();
        let agree = log_mags.iter().enumerate().filter(|&(c, &x)| qim_decide(x, self.spec.alpha) == bits[c / r]).count();
        agree as f64 / log_mags.len() as f64
    }

    /// Embed interleaved codeword `bits` into `chunk`.
    ///
    /// Each round quantises every carrier of the current analysis (phase
    /// kept), resynthesises the `relaxation`-scaled change, and re-analyses.
    /// The loop ends once all bits majority-decode and the carrier agreement
    /// reaches `target_agreement`, or after `max_iters` rounds.
    pub fn embed_bits(&self, chunk: &[f32], bits: &[bool; CODEWORD_BITS]) -> Result<EmbedOutcome> {
        self.check_len(chunk.len())?;
        let alpha = self.spec.alpha;
        let r = self.carriers.redundancy();
        let mut y = to_f64(chunk);
        let mut spec = self.stft.forward(&y)?;
        let mut delta = Spectrogram::zeros(spec.frames(), spec.bins());
        let mut outcome =
            EmbedOutcome { samples: Vec::new(), converged: false, converged_at: None, iterations: 0, agreement: 0.0 };
        for iteration in 1..=self.spec.max_iters {
            for (j, &bit) in bits.iter().enumerate() {
                for &(f, k) in &self.carriers.cells()[j * r..(j + 1) * r] {
                    let x = spec.get(f, k);
                    let mag = x.norm();
                    let new_mag = self.spec.magnitude(qim_quantize(self.spec.log_magnitude(mag), alpha, bit));
                    let new_x = if mag > 0.0 { x * (new_mag / mag) } else { Complex64::new(new_mag, 0.0) };
                    delta.set(f, k, (new_x - x) * self.spec.relaxation);
                }
            }
            // the carriers are the only non-zero cells of the update
            let update = self.stft.inverse(&delta, y.len());
            for (s, u) in y.iter_mut().zip(&update) {
                *s += u;
            }
            spec = self.stft.forward(&y)?;
            let log_mags = self.carrier_log_mags(&spec);
            outcome.iterations = iteration;
            outcome.converged = self.hard_bits(&log_mags) == *bits;
            if outcome.converged && outcome.converged_at.is_none() {
                outcome.converged_at = Some(iteration);
            }
            outcome.agreement = self.agreement(&log_mags, bits);
            if outcome.converged && outcome.agreement >= self.spec.target_agreement {
                break;
            }
        }
        outcome.samples = y;
        Ok(outcome)
    }

    /// Encode `fields` through the payload channel and embed them.
    pub fn embed_payload(&self, chunk: &[f32], fields: &PayloadFields) -> Result<EmbedOutcome> {
        let bits = payload::encode_bits(fields, &self.interleaver)?;
        self.embed_bits(chunk, &bits)
    }

    /// Decode the payload and compute the screening score of a chunk.
    pub fn detect(&self, chunk: &[f32]) -> Result<DetectionResult> {
        let log_mags = self.observe(chunk)?;
        let score = consistency_score(&log_mags, self.carriers.redundancy(), self.spec.alpha);
        let bits = self.hard_bits(&log_mags);
        Ok(match payload::decode_bits(&bits, &self.interleaver) {
            Ok(d) => DetectionResult {
                decode_ok: true,
                payload: Some(d.fields),
                packed: Some(d.packed),
                corrected_bytes: d.corrected_bytes,
                failure: None,
                score,
            },
            Err(e) => DetectionResult {
                decode_ok: false,
                payload: None,
                packed: None,
                corrected_bytes: 0,
                failure: Some(e),
                score,
            },
        })
    }

    /// Screening score alone.
    pub fn score(&self, chunk: &[f32]) -> Result<f64> {
        Ok(consistency_score(&self.observe(chunk)?, self.carriers.redundancy(), self.spec.alpha))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::payload::Cid;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn quantiser_examples() {
        assert!((qim_quantize(0.1, 0.6, true) - 0.3).abs() < 1e-12);
        assert_eq!(qim_quantize(0.0, 0.6, false), 0.0);
        assert!((qim_quantize(-0.31, 0.6, false) + 0.6).abs() < 1e-12);
        // half away from zero: x/alpha - 1/2 = 0.5 rounds to 1
        assert!((qim_quantize(0.6, 0.6, true) - 0.9).abs() < 1e-12);
    }

    #[test]
    fn decide_inverts_quantise() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..10_000 {
            let x = rng.gen_range(-20.0..5.0);
            let alpha = rng.gen_range(0.05..2.0);
            let bit = rng.gen();
            assert_eq!(qim_decide(qim_quantize(x, alpha, bit), alpha), bit);
        }
    }

    #[test]
    fn soft_value_on_lattices() {
        for k in -3..=3 {
            assert!((qim_soft(k as f64 * 0.6, 0.6) - 1.0).abs() < 1e-12);
            assert!((qim_soft((k as f64 + 0.5) * 0.6, 0.6) + 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn majority_ties_decide_one() {
        assert!(majority(8, 16));
        assert!(!majority(7, 16));
        assert!(majority(9, 16));
    }

    #[test]
    fn default_grid_capacity() {
        let spec = QimSpec::default();
        let bins = spec.band_bins(16_000);
        assert_eq!((*bins.start(), *bins.end()), (20, 217));
        let map = CarrierMap::derive(&WatermarkKey::default(), &spec, 16_000, 32_000).unwrap();
        assert_eq!(map.available(), 122 * 198);
        assert_eq!(map.available(), 24_156);
        assert_eq!(map.cells().len(), 320 * 16);
    }

    #[test]
    fn carrier_cells_are_disjoint_and_in_band() {
        let map = CarrierMap::derive(&WatermarkKey::default(), &QimSpec::default(), 16_000, 32_000).unwrap();
        let mut seen = std::collections::HashSet::new();
        for &(f, k) in map.cells() {
            assert!(f < 122 && (20..=217).contains(&k));
            assert!(seen.insert((f, k)));
        }
        let again = CarrierMap::derive(&WatermarkKey::default(), &QimSpec::default(), 16_000, 32_000).unwrap();
        assert_eq!(map, again);
    }

    #[test]
    fn capacity_error() {
        let spec = QimSpec { redundancy: 100, ..QimSpec::default() };
        assert!(matches!(
            CarrierMap::derive(&WatermarkKey::default(), &spec, 16_000, 32_000),
            Err(Error::CapacityExceeded { needed: 32_000, available: 24_156 })
        ));
    }

    #[test]
    fn score_is_one_on_quantised_cells() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let alpha = 0.6;
        let cells: Vec<f64> = (0..320 * 16)
            .map(|i| qim_quantize(rng.gen_range(-8.0..2.0), alpha, (i / 16) % 3 == 0))
            .collect();
        assert!((consistency_score(&cells, 16, alpha) - 1.0).abs() < 1e-12);
    }

    fn speechy(seed: u64) -> Vec<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f0: f64 = rng.gen_range(100.0..220.0);
        (0..32_000)
            .map(|i| {
                let t = i as f64 / 16_000.0;
                let env = 0.6 + 0.4 * (2.0 * std::f64::consts::PI * 4.0 * t).sin();
                let tone: f64 = (1..25)
                    .map(|h| (2.0 * std::f64::consts::PI * f0 * h as f64 * t + h as f64).sin() / (h as f64).sqrt())
                    .sum();
                (0.05 * env * tone + 0.02 * rng.gen_range(-1.0..1.0)) as f32
            })
            .collect()
    }

    #[test]
    fn embed_then_detect_recovers_payload() {
        let wm = Watermarker::new(&WatermarkKey::default(), QimSpec::default(), 16_000, 32_000).unwrap();
        let fields = PayloadFields { version: 1, cid: Cid([7; 16]), index: 3, rid: 42, kid: 9 };
        let x = speechy(5);
        let out = wm.embed_payload(&x, &fields).unwrap();
        assert!(out.converged);
        assert!(out.iterations <= 20);
        assert!(out.agreement > 0.9, "{}", out.agreement);
        let y: Vec<f32> = out.samples.iter().map(|&v| v as f32).collect();
        let det = wm.detect(&y).unwrap();
        assert!(det.decode_ok);
        assert_eq!(det.payload, Some(fields));
        assert!(det.score > 0.8, "{}", det.score);
        assert!(wm.score(&x).unwrap() < 0.3);
        // re-embedding a converged chunk decodes after a single round
        let again = wm.embed_payload(&y, &fields).unwrap();
        assert_eq!(again.converged_at, Some(1));
    }

    #[test]
    fn unwatermarked_chunk_does_not_decode() {
        let wm = Watermarker::new(&WatermarkKey::default(), QimSpec::default(), 16_000, 32_000).unwrap();
        let det = wm.detect(&speechy(6)).unwrap();
        assert!(!det.decode_ok);
        assert!(det.payload.is_none());
        assert!(det.failure.is_some());
    }

    #[test]
    fn wrong_length_rejected() {
        let wm = Watermarker::new(&WatermarkKey::default(), QimSpec::default(), 16_000, 32_000).unwrap();
        assert!(wm.detect(&[0.0; 100]).is_err());
    }
}
