//! Enrollment and chunk-wise verification.
//!
//! Enrollment embeds a payload `(cid, i, rid, kid)` into every chunk, then
//! commits fingerprints of the watermarked chunks in a signed Merkle tree.
//! The payload is embedded before the final tree exists, so its `rid` is
//! taken from a provisional tree over fingerprints of the original chunks
//! and recorded in the manifest as `rid_alias`.
//!
//! Verification walks a strict gate sequence per window and reports the
//! first gate that fails:
//!
//! 1. the payload decodes (`no_payload`);
//! 2. the manifest for the decoded CID resolves (`manifest_missing`);
//! 3. the manifest signature verifies under a pinned key (`bad_signature`);
//! 4. the proof for the decoded chunk index resolves (`proof_missing`);
//! 5. the recomputed leaf is included under the signed root
//!    (`inclusion_fail`).
//!
//! The `wm_only` tier stops after step 3; `msv1` runs all five.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsp::{chunk_audio, measure_snr, AudioBuffer};
use crate::error::{Error, Result};
use crate::fingerprint::Fingerprinter;
use crate::manifest::{IssuerKeypair, IssuerMeta, Manifest, Params, SignatureCheck, TrustStore};
use crate::merkle::{leaf_digest, verify as merkle_verify, MerkleProof, MerkleTree};
use crate::payload::{Cid, PayloadFields, MAX_INDEX};
use crate::repository::{RepoError, Repository};
use crate::watermark::{DetectionResult, WatermarkKey, Watermarker};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    WmOnly,
    Msv1,
}

impl Tier {
    pub const BOTH: [Tier; 2] = [Tier::WmOnly, Tier::Msv1];

    pub fn as_str(self) -> &'static str {
        match self {
            Tier::WmOnly => "wm_only",
            Tier::Msv1 => "msv1",
        }
    }
}

impl fmt::Display for Tier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Tier {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "wm_only" => Ok(Tier::WmOnly),
            "msv1" => Ok(Tier::Msv1),
            other => Err(Error::InvalidArgument(format!("unknown tier `{other}` (expected wm_only or msv1)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    Verified,
    Unverified,
}

/// Gate outcome, in gate order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reason {
    Ok,
    NoPayload,
    ManifestMissing,
    BadSignature,
    ProofMissing,
    InclusionFail,
}

impl Reason {
    pub const ALL: [Reason; 6] = [
        Reason::Ok,
        Reason::NoPayload,
        Reason::ManifestMissing,
        Reason::BadSignature,
        Reason::ProofMissing,
        Reason::InclusionFail,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Reason::Ok => "ok",
            Reason::NoPayload => "no_payload",
            Reason::ManifestMissing => "manifest_missing",
            Reason::BadSignature => "bad_signature",
            Reason::ProofMissing => "proof_missing",
            Reason::InclusionFail => "inclusion_fail",
        }
    }
}

impl fmt::Display for Reason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Outcome for one window at one tier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationRecord {
    pub start_time: f64,
    pub chunk_index_claimed: Option<u32>,
    pub tier: Tier,
    pub status: Status,
    pub reason: Reason,
    pub cid: Option<Cid>,
    #[serde(with = "opt_rid")]
    pub rid: Option<u64>,
    pub score: f64,
}

impl VerificationRecord {
    pub fn verified(&self) -> bool {
        self.status == Status::Verified
    }
}

mod opt_rid {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<u64>, s: S) -> Result<S::Ok, S::Error> {
        v.map(|r| format!("{r:016x}")).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<u64>, D::Error> {
        Option::<String>::deserialize(d)?
            .map(|s| {
                crate::hexbytes::decode_array::<8>(&s).map(u64::from_be_bytes).map_err(serde::de::Error::custom)
            })
            .transpose()
    }
}

/// Time-ordered verification records with per-tier reason counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timeline {
    pub stride_secs: f64,
    pub records: Vec<VerificationRecord>,
    pub summary: BTreeMap<Tier, BTreeMap<Reason, usize>>,
}

impl Timeline {
    pub fn new(stride_secs: f64, mut records: Vec<VerificationRecord>) -> Self {
        records.sort_by(|a, b| a.start_time.total_cmp(&b.start_time).then(a.tier.cmp(&b.tier)));
        let mut summary: BTreeMap<Tier, BTreeMap<Reason, usize>> = BTreeMap::new();
        for r in &records {
            *summary.entry(r.tier).or_default().entry(r.reason).or_default() += 1;
        }
        Self { stride_secs, records, summary }
    }

    pub fn tier(&self, tier: Tier) -> impl Iterator<Item = &VerificationRecord> {
        self.records.iter().filter(move |r| r.tier == tier)
    }

    /// Fraction of `tier` records that verified; `None` without records.
    pub fn verified_rate(&self, tier: Tier) -> Option<f64> {
        let (n, ok) = self.tier(tier).fold((0usize, 0usize), |(n, ok), r| (n + 1, ok + r.verified() as usize));
        (n > 0).then(|| ok as f64 / n as f64)
    }

    /// The records as a JSON array.
    pub fn records_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.records)?)
    }
}

/// Merge window records onto the chunk grid of length `chunk_secs`.
///
/// Records are grouped per tier. When the stride equals the chunk length the
/// records pass through. Otherwise every grid cell takes a verified record
/// from any window overlapping it, falling back to the first overlapping
/// window's record, restamped with the cell start.
pub fn aggregate_timeline(records: Vec<VerificationRecord>, stride_secs: f64, chunk_secs: f64) -> Timeline {
    const TOL: f64 = 1e-9;
    if records.is_empty() || (stride_secs - chunk_secs).abs() < TOL {
        return Timeline::new(stride_secs, records);
    }
    let mut cells: BTreeMap<(usize, Tier), VerificationRecord> = BTreeMap::new();
    for r in &records {
        let first = (r.start_time / chunk_secs + TOL).floor() as usize;
        let end = r.start_time + chunk_secs;
        let mut k = first;
        while (k as f64) * chunk_secs < end - TOL {
            let cell_start = k as f64 * chunk_secs;
            let entry = cells.entry((k, r.tier)).or_insert_with(|| VerificationRecord { start_time: cell_start, ..r.clone() });
            if r.verified() && !entry.verified() {
                *entry = VerificationRecord { start_time: cell_start, ..r.clone() };
            }
            k += 1;
        }
    }
    Timeline::new(chunk_secs, cells.into_values().collect())
}

/// Signing identity used at enrollment.
#[derive(Debug, Clone)]
pub struct Issuer {
    pub keypair: IssuerKeypair,
    pub meta: IssuerMeta,
}

/// Embedding statistics for one enrolled chunk.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChunkReport {
    pub index: u32,
    pub converged: bool,
    pub iterations: usize,
    pub agreement: f64,
    pub snr_db: f64,
}

#[derive(Debug, Clone)]
pub struct Enrollment {
    pub audio: AudioBuffer,
    pub manifest: Manifest,
    pub proofs: Vec<MerkleProof>,
    pub chunks: Vec<ChunkReport>,
}

impl Enrollment {
    /// Indices of chunks whose embedding did not converge.
    pub fn warnings(&self) -> Vec<u32> {
        self.chunks.iter().filter(|c| !c.converged).map(|c| c.index).collect()
    }
}

/// Verification failed for a reason outside the gate sequence. Retryable.
#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("repository unavailable: {0}")]
    Transport(String),
    #[error(transparent)]
    Core(#[from] Error),
}

impl From<RepoError> for VerifyError {
    fn from(e: RepoError) -> Self {
        VerifyError::Transport(e.to_string())
    }
}

/// Watermark channel and fingerprinter for one parameter set.
#[derive(Debug, Clone)]
pub struct Pipeline {
    params: Params,
    watermarker: Watermarker,
    fingerprinter: Fingerprinter,
}

impl Pipeline {
    pub fn new(params: Params, key: &WatermarkKey) -> Result<Self> {
        params.validate()?;
        let len = params.chunk_len();
        let watermarker = Watermarker::new(key, params.qim, params.sample_rate, len)?;
        let fingerprinter = Fingerprinter::new(params.fingerprint, params.sample_rate, len)?;
        Ok(Self { params, watermarker, fingerprinter })
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn watermarker(&self) -> &Watermarker {
        &self.watermarker
    }

    pub fn fingerprinter(&self) -> &Fingerprinter {
        &self.fingerprinter
    }

    pub fn chunk_len(&self) -> usize {
        self.params.chunk_len()
    }

    /// Enroll under a fresh random CID.
    pub fn enroll(&self, audio: &AudioBuffer, issuer: &Issuer, store: &dyn Repository) -> Result<Enrollment> {
        self.enroll_with_cid(audio, issuer, store, Cid::random())
    }

    pub fn enroll_with_cid(
        &self,
        audio: &AudioBuffer,
        issuer: &Issuer,
        store: &dyn Repository,
        cid: Cid,
    ) -> Result<Enrollment> {
        let enrollment = self.prepare(audio, issuer, cid)?;
        let stored = |e: RepoError| Error::Malformed(format!("repository refused enrollment: {e}"));
        store.put_manifest(&enrollment.manifest).map_err(stored)?;
        store.put_proofs(&cid, &enrollment.proofs).map_err(stored)?;
        Ok(enrollment)
    }

    /// Enrollment without publishing: watermark, commit and sign.
    pub fn prepare(&self, audio: &AudioBuffer, issuer: &Issuer, cid: Cid) -> Result<Enrollment> {
        let p = &self.params;
        if issuer.meta.kid != p.kid {
            return Err(Error::KeyMismatch(format!("issuer kid {} but params kid {}", issuer.meta.kid, p.kid)));
        }
        if audio.sample_rate != p.sample_rate {
            return Err(Error::SampleRateMismatch { expected: p.sample_rate, got: audio.sample_rate });
        }
        if p.stride_secs != p.chunk_secs {
            return Err(Error::InvalidArgument("enrollment needs non-overlapping chunks (stride = length)".into()));
        }
        let chunks = chunk_audio(audio, p.chunk_secs, p.stride_secs)?;
        if chunks.is_empty() {
            return Err(Error::AudioTooShort { needed: self.chunk_len(), got: audio.len() });
        }
        if chunks.len() - 1 > MAX_INDEX as usize {
            return Err(Error::PayloadRange(format!("{} chunks exceed the 24-bit index", chunks.len())));
        }
        let params_hash = p.hash()?;

        let provisional: Vec<_> = chunks
            .par_iter()
            .map(|c| Ok(leaf_digest(&cid, c.index as u32, &self.fingerprinter.compute(c.samples)?, &params_hash)))
            .collect::<Result<_>>()?;
        let r0 = MerkleTree::build(provisional)?.root();
        let rid = u64::from_be_bytes(r0[..8].try_into().unwrap());

        let embedded: Vec<(Vec<f32>, ChunkReport)> = chunks
            .par_iter()
            .map(|c| {
                let fields = PayloadFields { version: p.payload_version, cid, index: c.index as u32, rid, kid: p.kid };
                let out = self.watermarker.embed_payload(c.samples, &fields)?;
                let samples: Vec<f32> = out.samples.iter().map(|&v| (v as f32).clamp(-1.0, 1.0)).collect();
                let report = ChunkReport {
                    index: c.index as u32,
                    converged: out.converged,
                    iterations: out.iterations,
                    agreement: out.agreement,
                    snr_db: measure_snr(c.samples, &samples)?,
                };
                Ok((samples, report))
            })
            .collect::<Result<_>>()?;

        let mut output = audio.clone();
        for (c, (samples, _)) in chunks.iter().zip(&embedded) {
            output.samples[c.start..c.start + samples.len()].copy_from_slice(samples);
        }
        let leaves: Vec<_> = embedded
            .par_iter()
            .map(|(samples, r)| Ok(leaf_digest(&cid, r.index, &self.fingerprinter.compute(samples)?, &params_hash)))
            .collect::<Result<_>>()?;
        let tree = MerkleTree::build(leaves)?;
        let manifest = Manifest::sign(&issuer.keypair, issuer.meta.clone(), cid, tree.root(), p.clone(), rid)?;
        Ok(Enrollment {
            audio: output,
            manifest,
            proofs: tree.proofs(),
            chunks: embedded.into_iter().map(|(_, r)| r).collect(),
        })
    }

    /// Decode, resolve and check one window at both tiers.
    pub fn verify_window(
        &self,
        window: &[f32],
        start_time: f64,
        trust: &TrustStore,
        repo: &dyn Repository,
    ) -> std::result::Result<[VerificationRecord; 2], VerifyError> {
        let detection = self.watermarker.detect(window)?;
        let (wm, full) = self.gates(window, &detection, trust, repo)?;
        let payload = detection.payload;
        let record = |tier, reason: Reason| VerificationRecord {
            start_time,
            chunk_index_claimed: payload.map(|f| f.index),
            tier,
            status: if reason == Reason::Ok { Status::Verified } else { Status::Unverified },
            reason,
            cid: payload.map(|f| f.cid),
            rid: payload.map(|f| f.rid),
            score: detection.score,
        };
        Ok([record(Tier::WmOnly, wm), record(Tier::Msv1, full)])
    }

    pub fn verify_chunk(
        &self,
        window: &[f32],
        start_time: f64,
        tier: Tier,
        trust: &TrustStore,
        repo: &dyn Repository,
    ) -> std::result::Result<VerificationRecord, VerifyError> {
        let [wm, full] = self.verify_window(window, start_time, trust, repo)?;
        Ok(match tier {
            Tier::WmOnly => wm,
            Tier::Msv1 => full,
        })
    }

    /// Gate reasons for the `wm_only` and `msv1` tiers.
    fn gates(
        &self,
        window: &[f32],
        detection: &DetectionResult,
        trust: &TrustStore,
        repo: &dyn Repository,
    ) -> std::result::Result<(Reason, Reason), VerifyError> {
        let Some(fields) = detection.payload else {
            return Ok((Reason::NoPayload, Reason::NoPayload));
        };
        let manifest = match repo.get_manifest(&fields.cid)? {
            Some(m) if m.cid == fields.cid => m,
            _ => return Ok((Reason::ManifestMissing, Reason::ManifestMissing)),
        };
        if fields.kid != manifest.issuer_meta.kid || manifest.verify(trust) != SignatureCheck::Valid {
            return Ok((Reason::BadSignature, Reason::BadSignature));
        }
        let Some(proof) = repo.get_proof(&fields.cid, fields.index)? else {
            return Ok((Reason::Ok, Reason::ProofMissing));
        };
        let fingerprint = if manifest.params.fingerprint == self.params.fingerprint
            && manifest.params.sample_rate == self.params.sample_rate
            && manifest.params.chunk_len() == window.len()
        {
            self.fingerprinter.compute(window)?
        } else {
            Fingerprinter::new(manifest.params.fingerprint, manifest.params.sample_rate, window.len())?.compute(window)?
        };
        let digest = leaf_digest(&fields.cid, fields.index, &fingerprint, &manifest.params_hash);
        let included = proof.leaf_index == fields.index && merkle_verify(&digest, &proof, &manifest.root);
        Ok((Reason::Ok, if included { Reason::Ok } else { Reason::InclusionFail }))
    }

    /// Windows at the configured stride from offset zero; records for the
    /// requested tiers, in time order.
    pub fn verify_streaming(
        &self,
        audio: &AudioBuffer,
        tiers: &[Tier],
        trust: &TrustStore,
        repo: &dyn Repository,
    ) -> std::result::Result<Timeline, VerifyError> {
        let p = &self.params;
        if audio.sample_rate != p.sample_rate {
            return Err(Error::SampleRateMismatch { expected: p.sample_rate, got: audio.sample_rate }.into());
        }
        let windows = chunk_audio(audio, p.chunk_secs, p.stride_secs)?;
        let per_window: Vec<[VerificationRecord; 2]> = windows
            .par_iter()
            .map(|w| self.verify_window(w.samples, w.start as f64 / p.sample_rate as f64, trust, repo))
            .collect::<std::result::Result<_, _>>()?;
        let records = per_window.into_iter().flatten().filter(|r| tiers.contains(&r.tier)).collect();
        Ok(aggregate_timeline(records, p.stride_secs, p.chunk_secs))
    }

    /// Embed an explicit payload into one chunk.
    pub fn embed_chunk(&self, chunk: &[f32], fields: &PayloadFields) -> Result<Vec<f32>> {
        let out = self.watermarker.embed_payload(chunk, fields)?;
        Ok(out.samples.iter().map(|&v| (v as f32).clamp(-1.0, 1.0)).collect())
    }

    /// Score and decode one chunk without repository access.
    pub fn detect(&self, chunk: &[f32]) -> Result<DetectionResult> {
        self.watermarker.detect(chunk)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::repository::MemoryStore;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn record(start: f64, tier: Tier, reason: Reason) -> VerificationRecord {
        VerificationRecord {
            start_time: start,
            chunk_index_claimed: None,
            tier,
            status: if reason == Reason::Ok { Status::Verified } else { Status::Unverified },
            reason,
            cid: None,
            rid: None,
            score: 0.0,
        }
    }

    #[test]
    fn tier_and_reason_names() {
        assert_eq!(serde_json::to_string(&Tier::WmOnly).unwrap(), "\"wm_only\"");
        assert_eq!(serde_json::to_string(&Reason::InclusionFail).unwrap(), "\"inclusion_fail\"");
        assert_eq!("msv1".parse::<Tier>().unwrap(), Tier::Msv1);
        assert!("both".parse::<Tier>().is_err());
        for r in Reason::ALL {
            assert_eq!(serde_json::to_string(&r).unwrap(), format!("\"{r}\""));
        }
    }

    #[test]
    fn aggregate_passes_through_at_full_stride() {
        let recs = vec![record(2.0, Tier::WmOnly, Reason::Ok), record(0.0, Tier::WmOnly, Reason::NoPayload)];
        let t = aggregate_timeline(recs, 2.0, 2.0);
        assert_eq!(t.records.len(), 2);
        assert_eq!(t.records[0].start_time, 0.0);
        assert_eq!(t.summary[&Tier::WmOnly][&Reason::Ok], 1);
        assert_eq!(t.verified_rate(Tier::WmOnly), Some(0.5));
        assert_eq!(t.verified_rate(Tier::Msv1), None);
    }

    #[test]
    fn aggregate_empty() {
        let t = aggregate_timeline(Vec::new(), 1.0, 2.0);
        assert!(t.records.is_empty());
        assert!(t.summary.is_empty());
    }

    #[test]
    fn aggregate_any_rule_over_overlaps() {
        // windows at 0, 1, 2 s of length 2 s over cells [0,2) and [2,4)
        let recs = vec![
            record(0.0, Tier::Msv1, Reason::NoPayload),
            record(1.0, Tier::Msv1, Reason::Ok),
            record(2.0, Tier::Msv1, Reason::NoPayload),
        ];
        let t = aggregate_timeline(recs, 1.0, 2.0);
        assert_eq!(t.records.len(), 2);
        assert!(t.records.iter().all(|r| r.verified()));
        assert_eq!(t.records[1].start_time, 2.0);
        let t = aggregate_timeline(vec![record(0.0, Tier::Msv1, Reason::NoPayload)], 1.0, 2.0);
        assert_eq!(t.records[0].reason, Reason::NoPayload);
    }

    #[test]
    fn record_json_shape() {
        let mut r = record(4.0, Tier::Msv1, Reason::Ok);
        r.cid = Some(Cid([0xAA; 16]));
        r.rid = Some(0x0102);
        r.chunk_index_claimed = Some(2);
        let v = serde_json::to_value(&r).unwrap();
        assert_eq!(v["rid"], "0000000000000102");
        assert_eq!(v["cid"], "aa".repeat(16));
        assert_eq!(v["status"], "Verified");
        assert_eq!(serde_json::from_value::<VerificationRecord>(v).unwrap(), r);
        let none = serde_json::to_value(record(0.0, Tier::WmOnly, Reason::NoPayload)).unwrap();
        assert!(none["cid"].is_null());
    }

    fn tone(secs: f64, seed: u64) -> AudioBuffer {
        use rand::Rng;
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let n = (secs * 16_000.0) as usize;
        let f0: f64 = rng.gen_range(110.0..200.0);
        let samples = (0..n)
            .map(|i| {
                let t = i as f64 / 16_000.0;
                let env = 0.6 + 0.4 * (2.0 * std::f64::consts::PI * 2.5 * t).sin();
                let voiced: f64 =
                    (1..30).map(|h| (2.0 * std::f64::consts::PI * f0 * h as f64 * t).sin() / h as f64).sum();
                (0.08 * env * voiced + 0.01 * rng.gen_range(-1.0..1.0)) as f32
            })
            .collect();
        AudioBuffer::new(samples, 16_000)
    }

    fn issuer(seed: u64) -> Issuer {
        Issuer {
            keypair: IssuerKeypair::generate(&mut ChaCha20Rng::seed_from_u64(seed)),
            meta: IssuerMeta { issuer_id: "lab".into(), kid: 1 },
        }
    }

    #[test]
    fn enroll_and_verify_clean_audio() {
        let pipeline = Pipeline::new(Params::default(), &WatermarkKey::default()).unwrap();
        let store = MemoryStore::default();
        let who = issuer(1);
        let audio = tone(7.0, 1);
        let e = pipeline.enroll(&audio, &who, &store).unwrap();
        assert_eq!(e.audio.len(), audio.len());
        assert_eq!(e.proofs.len(), 3);
        assert_eq!(&e.audio.samples[96_000..], &audio.samples[96_000..]);
        assert!(e.warnings().is_empty());
        let trust = TrustStore::new().with(&who.meta, who.keypair.public_key());
        assert!(e.manifest.verify(&trust).is_valid());

        let t = pipeline.verify_streaming(&e.audio, &Tier::BOTH, &trust, &store).unwrap();
        assert_eq!(t.records.len(), 6);
        assert!(t.records.iter().all(|r| r.reason == Reason::Ok), "{:?}", t.records);
        assert!(t.records.iter().all(|r| r.cid == Some(e.manifest.cid) && r.rid == Some(e.manifest.rid_alias)));

        let orig = pipeline.verify_streaming(&audio, &[Tier::Msv1], &trust, &store).unwrap();
        assert!(orig.records.iter().all(|r| r.reason == Reason::NoPayload));

        // single-point failures, in gate order
        let w = &e.audio.samples[32_000..64_000];
        let check = |trust: &TrustStore, repo: &dyn Repository| pipeline.verify_window(w, 2.0, trust, repo).unwrap();
        let [a, b] = check(&TrustStore::new(), &store);
        assert_eq!((a.reason, b.reason), (Reason::BadSignature, Reason::BadSignature));
        let empty = MemoryStore::default();
        let [a, b] = check(&trust, &empty);
        assert_eq!((a.reason, b.reason), (Reason::ManifestMissing, Reason::ManifestMissing));
        empty.put_manifest(&e.manifest).unwrap();
        let [a, b] = check(&trust, &empty);
        assert_eq!((a.reason, b.reason), (Reason::Ok, Reason::ProofMissing));
        let mut wrong = e.proofs.clone();
        wrong.swap(0, 1);
        for (i, p) in wrong.iter_mut().enumerate() {
            p.leaf_index = i as u32;
        }
        empty.put_proofs(&e.manifest.cid, &wrong).unwrap();
        let [a, b] = check(&trust, &empty);
        assert_eq!((a.reason, b.reason), (Reason::Ok, Reason::InclusionFail));

        let again = pipeline.enroll(&audio, &who, &store).unwrap();
        assert_ne!(again.manifest.cid, e.manifest.cid);
        assert_ne!(again.manifest.root, e.manifest.root);
    }

    #[test]
    fn enrollment_preconditions() {
        let pipeline = Pipeline::new(Params::default(), &WatermarkKey::default()).unwrap();
        let store = MemoryStore::default();
        let mut who = issuer(2);
        assert!(matches!(pipeline.enroll(&tone(1.5, 2), &who, &store), Err(Error::AudioTooShort { .. })));
        assert!(matches!(
            pipeline.enroll(&AudioBuffer::new(vec![0.0; 64_000], 8_000), &who, &store),
            Err(Error::SampleRateMismatch { .. })
        ));
        who.meta.kid = 2;
        assert!(matches!(pipeline.enroll(&tone(2.0, 2), &who, &store), Err(Error::KeyMismatch(_))));
    }
}
