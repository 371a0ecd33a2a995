//! Benchmark suites over an enrolled corpus.
//!
//! A [`Suite`] owns one issuer, one in-memory repository and the enrolled
//! clean corpus. Every random choice derives from the configured seed, so
//! identical configurations produce identical reports.

use std::path::Path;
use std::sync::{Arc, OnceLock};

use merklespeech_core::dsp::wav::read_wav;
use merklespeech_core::dsp::{apply_transform, AudioBuffer, TransformSpec};
use merklespeech_core::manifest::{IssuerKeypair, IssuerMeta, Params, TrustStore};
use merklespeech_core::payload::{pack, Cid, PayloadFields};
use merklespeech_core::protocol::{Enrollment, Issuer, Pipeline, Tier, VerificationRecord, VerifyError};
use merklespeech_core::repository::{AcceptPolicy, MemoryStore};
use merklespeech_core::watermark::WatermarkKey;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::report::{
    Auc, BitErrors, CleanSection, ConditionResult, FprSection, Meta, Rate, Report, ReportError, ScoreOperatingPoint,
    SpliceResult, SweepPoint, VerifiedFpr,
};
use crate::sampler::{NegativeSampler, SamplerError, WindowRef};
use crate::splice::{render, score, whole_chunks, SpliceError, SpliceMode, SplicePlan, Sources};
use crate::stats::{bootstrap_ci, calibrate_threshold, clopper_pearson_upper, count_flagged, roc_auc, StatsError};
use crate::synth::synth_corpus;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Core(#[from] merklespeech_core::Error),
    #[error(transparent)]
    Verify(#[from] VerifyError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Splice(#[from] SpliceError),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error("{0}")]
    Setup(String),
}

pub type EvalResult<T> = Result<T, EvalError>;

/// The robustness conditions, mildest first.
pub fn default_conditions() -> Vec<TransformSpec> {
    vec![
        TransformSpec::Clip { threshold: 0.95 },
        TransformSpec::Resample { rate_hz: 12_000 },
        TransformSpec::Resample { rate_hz: 8_000 },
        TransformSpec::Noise { snr_db: 30.0, seed: 0 },
        TransformSpec::Bandpass { low_hz: 300.0, high_hz: 3400.0 },
        TransformSpec::Noise { snr_db: 20.0, seed: 0 },
        TransformSpec::Noise { snr_db: 10.0, seed: 0 },
        TransformSpec::Reverb { rt60_s: 0.3, seed: 0 },
    ]
}

pub const DEFAULT_ALPHAS: [f64; 5] = [0.2, 0.4, 0.6, 0.8, 1.0];

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub seed: u64,
    /// Files in the synthetic clean corpus.
    pub files: usize,
    /// Files in the synthetic negative corpus.
    pub negative_files: usize,
    /// Negative windows, split evenly into validation and test.
    pub windows: usize,
    /// Positive score draws for the ROC area.
    pub positives: usize,
    pub alpha: f64,
    /// Chunks per robustness condition and per sweep point.
    pub condition_chunks: usize,
    pub conditions: Vec<TransformSpec>,
    pub alphas: Vec<f64>,
    /// Condition applied at every sweep point.
    pub sweep_condition: TransformSpec,
    /// Screening-score FPR targets.
    pub targets: Vec<f64>,
    pub bootstrap_resamples: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            files: 80,
            negative_files: 20,
            windows: 100_000,
            positives: 5_000,
            alpha: 0.6,
            condition_chunks: 90,
            conditions: default_conditions(),
            alphas: DEFAULT_ALPHAS.to_vec(),
            sweep_condition: TransformSpec::Noise { snr_db: 20.0, seed: 0 },
            targets: vec![1e-3, 1e-4],
            bootstrap_resamples: 2_000,
        }
    }
}

/// Report sections to compute.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Sections {
    pub clean: bool,
    pub fpr: bool,
    pub robustness: bool,
    pub alpha_sweep: bool,
    pub splice: bool,
}

impl Sections {
    pub const ALL: Sections = Sections { clean: true, fpr: true, robustness: true, alpha_sweep: true, splice: true };
    pub const NONE: Sections = Sections { clean: false, fpr: false, robustness: false, alpha_sweep: false, splice: false };
}

/// Independent stream `tag` of `seed` (SplitMix64 finaliser).
pub fn subseed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

mod stream {
    pub const ISSUER: u64 = 1;
    pub const CID: u64 = 2;
    pub const CORPUS: u64 = 3;
    pub const NEGATIVES: u64 = 4;
    pub const WINDOWS: u64 = 5;
    pub const POSITIVES: u64 = 6;
    pub const TRANSFORM: u64 = 7;
    pub const SWEEP: u64 = 8;
    pub const SPLICE: u64 = 9;
    pub const BOOTSTRAP: u64 = 10;
}

/// Give stochastic transforms a per-file seed.
pub fn reseed(spec: TransformSpec, seed: u64) -> TransformSpec {
    match spec {
        TransformSpec::Noise { snr_db, .. } => TransformSpec::Noise { snr_db, seed },
        TransformSpec::Reverb { rt60_s, .. } => TransformSpec::Reverb { rt60_s, seed },
        other => other,
    }
}

/// Transform as distributed audio would be: the result is clamped to [-1, 1].
pub fn attack(audio: &AudioBuffer, spec: &TransformSpec) -> EvalResult<AudioBuffer> {
    let mut out = apply_transform(audio, spec)?;
    out.clamp_in_place();
    Ok(out)
}

/// All `.wav` files under `dir`, in file-name order.
pub fn load_corpus_dir(dir: impl AsRef<Path>) -> EvalResult<Vec<AudioBuffer>> {
    let dir = dir.as_ref();
    let entries = std::fs::read_dir(dir).map_err(|e| EvalError::Setup(format!("{}: {e}", dir.display())))?;
    let mut paths: Vec<_> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(EvalError::Setup(format!("no .wav files in {}", dir.display())));
    }
    paths.iter().map(|p| Ok(read_wav(p)?)).collect()
}

/// An enrolled file: its original audio and enrollment output.
#[derive(Debug, Clone)]
pub struct Asset {
    pub original: AudioBuffer,
    pub enrollment: Enrollment,
}

impl Asset {
    pub fn cid(&self) -> Cid {
        self.enrollment.manifest.cid
    }

    pub fn chunks(&self) -> usize {
        self.enrollment.chunks.len()
    }

    /// Payload embedded into chunk `index`.
    pub fn fields(&self, index: u32) -> PayloadFields {
        let m = &self.enrollment.manifest;
        PayloadFields {
            version: m.params.payload_version,
            cid: m.cid,
            index,
            rid: m.rid_alias,
            kid: m.params.kid,
        }
    }
}

/// Signing identity, trust store, repository and pipeline.
pub struct Harness {
    pub pipeline: Pipeline,
    pub issuer: Issuer,
    pub trust: TrustStore,
    pub store: Arc<MemoryStore>,
    pub key: WatermarkKey,
}

impl Harness {
    pub fn new(params: Params, key: WatermarkKey, seed: u64) -> EvalResult<Self> {
        let mut rng = ChaCha20Rng::seed_from_u64(subseed(seed, stream::ISSUER));
        let keypair = IssuerKeypair::from_seed(&rng.gen());
        let meta = IssuerMeta { issuer_id: "eval-issuer".into(), kid: params.kid };
        let trust = TrustStore::new().with(&meta, keypair.public_key());
        let store = Arc::new(MemoryStore::new(AcceptPolicy::pinned(trust.clone())));
        let pipeline = Pipeline::new(params, &key)?;
        Ok(Self { pipeline, issuer: Issuer { keypair, meta }, trust, store, key })
    }

    /// Same issuer and repository, different embedding strength.
    pub fn with_alpha(&self, alpha: f64) -> EvalResult<Self> {
        let mut params = self.pipeline.params().clone();
        params.qim.alpha = alpha;
        Ok(Self {
            pipeline: Pipeline::new(params, &self.key)?,
            issuer: self.issuer.clone(),
            trust: self.trust.clone(),
            store: self.store.clone(),
            key: self.key,
        })
    }

    /// Enroll each file under a CID drawn from `cid_seed`.
    pub fn enroll_all(&self, corpus: &[AudioBuffer], cid_seed: u64) -> EvalResult<Vec<Asset>> {
        let mut rng = ChaCha20Rng::seed_from_u64(cid_seed);
        corpus
            .iter()
            .map(|audio| {
                let cid = Cid::from_rng(&mut rng);
                let enrollment = self.pipeline.enroll_with_cid(audio, &self.issuer, self.store.as_ref(), cid)?;
                Ok(Asset { original: audio.clone(), enrollment })
            })
            .collect()
    }

    /// Both tier records for chunk `index` of `audio`.
    pub fn verify_at(&self, audio: &AudioBuffer, index: usize) -> EvalResult<[VerificationRecord; 2]> {
        let len = self.pipeline.chunk_len();
        let window = &audio.samples[index * len..(index + 1) * len];
        Ok(self.pipeline.verify_window(window, index as f64 * self.pipeline.params().chunk_secs, &self.trust, self.store.as_ref())?)
    }
}

/// `(asset, chunk)` pairs for the first `n` chunks in corpus order.
pub fn first_chunks(assets: &[Asset], n: usize) -> Vec<(usize, usize)> {
    assets.iter().enumerate().flat_map(|(a, asset)| (0..asset.chunks()).map(move |c| (a, c))).take(n).collect()
}

fn mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, n) = values.into_iter().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Screening scores collected by the clean and FPR suites.
#[derive(Debug, Clone, Default)]
pub struct Scores {
    pub positive: Vec<f64>,
    pub negative_test: Vec<f64>,
}

pub struct Suite {
    pub config: EvalConfig,
    pub harness: Harness,
    pub corpus: Vec<AudioBuffer>,
    pub corpus_label: String,
    negatives: Vec<AudioBuffer>,
    assets: OnceLock<Vec<Asset>>,
}

impl Suite {
    /// Suite over the seeded synthetic corpora with default parameters.
    pub fn synthetic(config: EvalConfig) -> EvalResult<Self> {
        Self::from_sources(config, None, None)
    }

    /// WAV directories for the clean and negative corpora; a missing one is
    /// replaced by the seeded synthetic corpus.
    pub fn from_sources(config: EvalConfig, corpus_dir: Option<&Path>, negative_dir: Option<&Path>) -> EvalResult<Self> {
        let (corpus, corpus_label) = match corpus_dir {
            Some(dir) => (load_corpus_dir(dir)?, format!("dir:{}", dir.display())),
            None => (
                synth_corpus(config.files, subseed(config.seed, stream::CORPUS)),
                format!("synthetic:files={}", config.files),
            ),
        };
        let (negatives, negative_label) = match negative_dir {
            Some(dir) => (load_corpus_dir(dir)?, format!("dir:{}", dir.display())),
            None => (
                synth_corpus(config.negative_files, subseed(config.seed, stream::NEGATIVES)),
                format!("negative_files={}", config.negative_files),
            ),
        };
        let label = match (corpus_dir, negative_dir) {
            (None, None) => format!("{corpus_label},{negative_label}"),
            _ => format!("{corpus_label};negatives={negative_label}"),
        };
        Self::new(config, corpus, negatives, label)
    }

    pub fn new(
        config: EvalConfig,
        corpus: Vec<AudioBuffer>,
        negatives: Vec<AudioBuffer>,
        corpus_label: String,
    ) -> EvalResult<Self> {
        if corpus.is_empty() {
            return Err(EvalError::Setup("empty corpus".into()));
        }
        let mut params = Params::default();
        params.qim.alpha = config.alpha;
        let harness = Harness::new(params, WatermarkKey::default(), config.seed)?;
        Ok(Self { config, harness, corpus, corpus_label, negatives, assets: OnceLock::new() })
    }

    /// The clean corpus, enrolled on first use.
    pub fn assets(&self) -> EvalResult<&[Asset]> {
        if let Some(a) = self.assets.get() {
            return Ok(a);
        }
        let assets = self.harness.enroll_all(&self.corpus, subseed(self.config.seed, stream::CID))?;
        Ok(self.assets.get_or_init(|| assets))
    }

    pub fn negatives(&self) -> &[AudioBuffer] {
        &self.negatives
    }

    pub fn meta(&self) -> EvalResult<Meta> {
        let params = self.harness.pipeline.params();
        let len = self.harness.pipeline.chunk_len();
        Ok(Meta {
            toolkit_version: params.toolkit_version.clone(),
            seed: self.config.seed,
            params_hash: hex::encode(params.hash()?),
            alpha: self.config.alpha,
            corpus: self.corpus_label.clone(),
            files: self.corpus.len(),
            chunks: self.corpus.iter().map(|a| a.len() / len).sum(),
        })
    }

    /// Decode, message and verification rates over every enrolled chunk.
    pub fn clean(&self) -> EvalResult<(CleanSection, Vec<f64>)> {
        let assets = self.assets()?;
        let h = &self.harness;
        let targets: Vec<(usize, usize)> = first_chunks(assets, usize::MAX);
        struct Outcome {
            decoded: bool,
            matched: bool,
            bit_errors: u64,
            score: f64,
            wm: bool,
            full: bool,
        }
        let outcomes: Vec<Outcome> = targets
            .par_iter()
            .map(|&(a, c)| {
                let asset = &assets[a];
                let len = h.pipeline.chunk_len();
                let window = &asset.enrollment.audio.samples[c * len..(c + 1) * len];
                let det = h.pipeline.detect(window)?;
                let expected = asset.fields(c as u32);
                let bit_errors = match det.packed {
                    Some(got) => {
                        let want = pack(&expected)?;
                        got.iter().zip(&want).map(|(x, y)| (x ^ y).count_ones() as u64).sum()
                    }
                    None => 0,
                };
                let [wm, full] = h.verify_at(&asset.enrollment.audio, c)?;
                Ok(Outcome {
                    decoded: det.decode_ok,
                    matched: det.payload == Some(expected),
                    bit_errors,
                    score: det.score,
                    wm: wm.verified(),
                    full: full.verified(),
                })
            })
            .collect::<EvalResult<_>>()?;

        let decoded = outcomes.iter().filter(|o| o.decoded).count() as u64;
        let errors: u64 = outcomes.iter().map(|o| o.bit_errors).sum();
        let bits = decoded * 8 * merklespeech_core::payload::PACKED_LEN as u64;
        let reports: Vec<_> = assets.iter().flat_map(|a| &a.enrollment.chunks).collect();
        let section = CleanSection {
            chunks: outcomes.len(),
            decode: Rate::from_flags(outcomes.iter().map(|o| o.decoded))?,
            msg_match: Rate::from_flags(outcomes.iter().map(|o| o.matched))?,
            ber: BitErrors { errors, bits, rate: if bits == 0 { 0.0 } else { errors as f64 / bits as f64 } },
            wm_only: Rate::from_flags(outcomes.iter().map(|o| o.wm))?,
            msv1: Rate::from_flags(outcomes.iter().map(|o| o.full))?,
            embed_converged: Rate::from_flags(reports.iter().map(|r| r.converged))?,
            mean_iterations: mean(reports.iter().map(|r| r.iterations as f64)),
            mean_snr_db: mean(reports.iter().map(|r| r.snr_db).filter(|s| s.is_finite())),
            auc: None,
        };
        Ok((section, outcomes.iter().map(|o| o.score).collect()))
    }

    /// Negative windows through the screening score and the full pipeline.
    /// Needs the repository populated, so the clean corpus is enrolled first.
    pub fn fpr(&self) -> EvalResult<(FprSection, Vec<f64>)> {
        self.assets()?;
        let h = &self.harness;
        let len = h.pipeline.chunk_len();
        let sampler = NegativeSampler::new(self.config.windows, subseed(self.config.seed, stream::WINDOWS));
        let lens: Vec<usize> = self.negatives.iter().map(|a| a.len()).collect();
        let split = sampler.sample(&lens, len)?;
        let run = |windows: &[WindowRef]| -> EvalResult<Vec<(f64, bool, bool)>> {
            windows
                .par_iter()
                .map(|w| {
                    let samples = &self.negatives[w.file].samples[w.offset..w.offset + len];
                    let [wm, full] = h.pipeline.verify_window(samples, 0.0, &h.trust, h.store.as_ref())?;
                    Ok((wm.score, wm.verified(), full.verified()))
                })
                .collect()
        };
        let val = run(&split.val)?;
        let test = run(&split.test)?;
        let val_scores: Vec<f64> = val.iter().map(|v| v.0).collect();
        let test_scores: Vec<f64> = test.iter().map(|v| v.0).collect();

        let mut score = Vec::new();
        if !val_scores.is_empty() && !test_scores.is_empty() {
            for &target in &self.config.targets {
                let t = calibrate_threshold(&val_scores, target)?;
                let fp = count_flagged(&test_scores, t.threshold);
                score.push(ScoreOperatingPoint {
                    target,
                    threshold: t.threshold,
                    val_false_positives: t.val_false_positives,
                    val_fpr: t.val_fpr(),
                    test_false_positives: fp,
                    test_fpr: fp as f64 / test_scores.len() as f64,
                });
            }
        }

        let mut verified = Vec::new();
        for (i, tier) in Tier::BOTH.into_iter().enumerate() {
            let flags: Vec<bool> = val.iter().chain(&test).map(|v| if i == 0 { v.1 } else { v.2 }).collect();
            let n = flags.len() as u64;
            let count = flags.iter().filter(|&&f| f).count() as u64;
            let (upper_bound, ci) = if n == 0 {
                (None, None)
            } else if count == 0 {
                (Some(clopper_pearson_upper(0, n, 0.95)?), None)
            } else {
                let seed = subseed(self.config.seed, stream::BOOTSTRAP + i as u64);
                let (lo, hi) = bootstrap_ci(&flags, self.config.bootstrap_resamples, seed)?;
                (None, Some([lo, hi]))
            };
            verified.push(VerifiedFpr {
                tier: tier.as_str().into(),
                count,
                n,
                rate: if n == 0 { 0.0 } else { count as f64 / n as f64 },
                upper_bound,
                bootstrap_ci: ci,
            });
        }
        let section = FprSection {
            windows: self.config.windows,
            n_val: val.len(),
            n_test: test.len(),
            score,
            verified,
            approximate: true,
        };
        Ok((section, test_scores))
    }

    /// ROC area of clean positives against held-out negatives. Positives are
    /// drawn with replacement up to the configured count.
    pub fn auc(&self, positive: &[f64], negative: &[f64]) -> EvalResult<Auc> {
        let mut rng = ChaCha20Rng::seed_from_u64(subseed(self.config.seed, stream::POSITIVES));
        let n = self.config.positives.max(1);
        let draws: Vec<f64> = if positive.is_empty() {
            Vec::new()
        } else {
            (0..n).map(|_| positive[rng.gen_range(0..positive.len())]).collect()
        };
        Ok(Auc { value: roc_auc(&draws, negative)?, n_pos: draws.len(), n_pos_distinct: positive.len(), n_neg: negative.len() })
    }

    /// Each condition applied to the watermarked files holding the first
    /// `condition_chunks` chunks, verified at both tiers.
    pub fn robustness(&self) -> EvalResult<Vec<ConditionResult>> {
        let assets = self.assets()?;
        let targets = first_chunks(assets, self.config.condition_chunks);
        let files = targets.last().map_or(0, |t| t.0 + 1);
        self.config
            .conditions
            .iter()
            .enumerate()
            .map(|(ci, spec)| {
                let attacked: Vec<AudioBuffer> = (0..files)
                    .into_par_iter()
                    .map(|f| {
                        let seed = subseed(self.config.seed, stream::TRANSFORM ^ ((ci as u64) << 32 | f as u64));
                        attack(&assets[f].enrollment.audio, &reseed(*spec, seed))
                    })
                    .collect::<EvalResult<_>>()?;
                let records: Vec<[VerificationRecord; 2]> =
                    targets.par_iter().map(|&(a, c)| self.harness.verify_at(&attacked[a], c)).collect::<EvalResult<_>>()?;
                Ok(ConditionResult {
                    condition: spec.label(),
                    transform: spec.to_string(),
                    decode: Rate::from_flags(records.iter().map(|r| r[0].chunk_index_claimed.is_some()))?,
                    wm_only: Rate::from_flags(records.iter().map(|r| r[0].verified()))?,
                    msv1: Rate::from_flags(records.iter().map(|r| r[1].verified()))?,
                })
            })
            .collect()
    }

    /// A fresh enrollment per strength (distinct CIDs) of the files holding
    /// the first `condition_chunks` chunks; mean embedding SNR over those
    /// chunks and the `wm_only` rate under the sweep condition.
    pub fn alpha_sweep(&self) -> EvalResult<Vec<SweepPoint>> {
        let len = self.harness.pipeline.chunk_len();
        let mut files = Vec::new();
        let mut chunks = 0;
        for audio in &self.corpus {
            if chunks >= self.config.condition_chunks {
                break;
            }
            chunks += audio.len() / len;
            files.push(audio.clone());
        }
        self.config
            .alphas
            .iter()
            .enumerate()
            .map(|(ai, &alpha)| {
                let h = self.harness.with_alpha(alpha)?;
                let assets = h.enroll_all(&files, subseed(self.config.seed, stream::SWEEP ^ ((ai as u64 + 1) << 40)))?;
                let targets = first_chunks(&assets, self.config.condition_chunks);
                let snr = mean(targets.iter().map(|&(a, c)| assets[a].enrollment.chunks[c].snr_db).filter(|s| s.is_finite()));
                let attacked: Vec<AudioBuffer> = assets
                    .par_iter()
                    .enumerate()
                    .map(|(f, asset)| {
                        let seed = subseed(self.config.seed, stream::SWEEP ^ ((ai as u64) << 32 | f as u64));
                        attack(&asset.enrollment.audio, &reseed(self.config.sweep_condition, seed))
                    })
                    .collect::<EvalResult<_>>()?;
                let verified: Vec<bool> = targets
                    .par_iter()
                    .map(|&(a, c)| Ok(h.verify_at(&attacked[a], c)?[0].verified()))
                    .collect::<EvalResult<_>>()?;
                Ok(SweepPoint {
                    alpha,
                    snr_db: snr,
                    condition: self.config.sweep_condition.label(),
                    wm_only: Rate::from_flags(verified)?,
                })
            })
            .collect()
    }

    /// Boundary-aligned insert, remove, mute and mixed-origin edits of the
    /// first two enrolled files, with unenrolled audio as the foreign source.
    pub fn splice(&self) -> EvalResult<Vec<SpliceResult>> {
        let assets = self.assets()?;
        let len = self.harness.pipeline.chunk_len();
        let [a, b] = match assets {
            [a, b, ..] => [a, b],
            _ => return Err(EvalError::Setup("splice scenarios need two enrolled files".into())),
        };
        let foreign = self.negatives.first().unwrap_or(&a.original);
        let (na, nb, nf) = (a.chunks(), b.chunks(), whole_chunks(foreign, len));
        if na < 3 || nf == 0 {
            return Err(EvalError::Setup("splice scenarios need a 3-chunk host and foreign audio".into()));
        }
        let sources = Sources { a: &a.enrollment.audio, b: Some(&b.enrollment.audio), foreign: Some(foreign) };
        let plans = [
            SplicePlan::insert(na, 1, 2.min(nf))?,
            SplicePlan::remove(na, 1, 1)?,
            SplicePlan::mute(na, na - 1, 1)?,
            SplicePlan::mixed(na, nb, nf, 2 * na.max(nb) + 2, subseed(self.config.seed, stream::SPLICE))?,
        ];
        plans
            .iter()
            .map(|plan| {
                let audio = render(plan, &sources, len)?;
                let timeline = self.harness.pipeline.verify_streaming(
                    &audio,
                    &Tier::BOTH,
                    &self.harness.trust,
                    self.harness.store.as_ref(),
                )?;
                let tier = |t| timeline.tier(t).cloned().collect::<Vec<_>>();
                let (ca, cb) = (a.cid(), b.cid());
                Ok(SpliceResult {
                    scenario: plan.mode.as_str().into(),
                    metric: if plan.mode == SpliceMode::Mixed { "macro_f1" } else { "iou" }.into(),
                    chunks: plan.pieces.len(),
                    wm_only: score(plan, &tier(Tier::WmOnly), &ca, &cb),
                    msv1: score(plan, &tier(Tier::Msv1), &ca, &cb),
                })
            })
            .collect()
    }

    /// Run the requested sections into one report.
    pub fn report(&self, sections: Sections) -> EvalResult<Report> {
        let mut report = Report::new(self.meta()?);
        let mut scores = Scores::default();
        if sections.clean {
            let (section, positive) = self.clean()?;
            report.clean = Some(section);
            scores.positive = positive;
        }
        if sections.fpr {
            let (section, negative) = self.fpr()?;
            report.fpr = Some(section);
            scores.negative_test = negative;
        }
        if let Some(clean) = report.clean.as_mut() {
            if !scores.positive.is_empty() && !scores.negative_test.is_empty() {
                clean.auc = Some(self.auc(&scores.positive, &scores.negative_test)?);
            }
        }
        if sections.robustness {
            report.robustness = Some(self.robustness()?);
        }
        if sections.alpha_sweep {
            report.alpha_sweep = Some(self.alpha_sweep()?);
        }
        if sections.splice {
            report.splice = Some(self.splice()?);
        }
        Ok(report)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::report::validate_json;

    fn small() -> EvalConfig {
        EvalConfig {
            files: 3,
            negative_files: 2,
            windows: 200,
            positives: 50,
            condition_chunks: 6,
            conditions: vec![TransformSpec::Clip { threshold: 0.95 }, TransformSpec::Noise { snr_db: 5.0, seed: 0 }],
            alphas: vec![0.3, 0.9],
            ..EvalConfig::default()
        }
    }

    #[test]
    fn subseeds_differ() {
        let s: std::collections::HashSet<u64> = (0..100).map(|t| subseed(42, t)).collect();
        assert_eq!(s.len(), 100);
        assert_eq!(subseed(1, 2), subseed(1, 2));
    }

    #[test]
    fn conditions_are_ordered_mild_to_harsh() {
        let labels: Vec<String> = default_conditions().iter().map(|c| c.label()).collect();
        assert_eq!(
            labels,
            ["clip_0.95", "resample_12k", "resample_8k", "noise_30db", "bandpass_300_3400", "noise_20db", "noise_10db", "reverb_0.3s"]
        );
    }

    #[test]
    fn first_chunks_walks_files_in_order() {
        let suite = Suite::synthetic(small()).unwrap();
        let assets = suite.assets().unwrap();
        let t = first_chunks(assets, 5);
        assert_eq!(t.len(), 5);
        assert_eq!(t[0], (0, 0));
        assert!(t.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn small_suite_produces_a_valid_reproducible_report() {
        let suite = Suite::synthetic(small()).unwrap();
        let report = suite.report(Sections::ALL).unwrap();
        let clean = report.clean.as_ref().unwrap();
        assert_eq!(clean.decode.rate, 1.0);
        assert_eq!(clean.ber.errors, 0);
        assert_eq!(clean.msv1.rate, 1.0);
        assert!(clean.auc.unwrap().value > 0.9);
        let fpr = report.fpr.as_ref().unwrap();
        assert_eq!((fpr.n_val, fpr.n_test), (100, 100));
        assert!(fpr.verified.iter().all(|v| v.count == 0 && v.upper_bound.is_some()));
        let robust = report.robustness.as_ref().unwrap();
        assert_eq!(robust[0].msv1.n, 6);
        for c in robust {
            assert!(c.msv1.rate <= c.wm_only.rate);
        }
        for s in report.splice.as_ref().unwrap() {
            assert_eq!((s.wm_only, s.msv1), (1.0, 1.0), "{}", s.scenario);
        }
        let sweep = report.alpha_sweep.as_ref().unwrap();
        assert!(sweep[0].snr_db > sweep[1].snr_db);

        validate_json(&serde_json::to_value(&report).unwrap()).unwrap();
        let again = Suite::synthetic(small()).unwrap().report(Sections::ALL).unwrap();
        assert_eq!(report.to_json().unwrap(), again.to_json().unwrap());
    }
}
