//! Committed parameters, canonical JSON, issuer keys and signed manifests.
//!
//! Canonical JSON sorts object keys at every level, has no insignificant
//! whitespace and prints numbers in shortest round-trip form. Canonical
//! records never contain `null`; a non-finite float (which `serde_json`
//! would silently map to `null`) is rejected instead.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use ed25519_dalek::{Signature, Signer, SigningKey, Verifier, VerifyingKey};
use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest as _, Sha256};

use crate::dsp::{seconds_to_samples, SAMPLE_RATE};
use crate::error::{Error, Result};
use crate::fingerprint::FingerprintSpec;
use crate::merkle::Digest;
use crate::payload::{Cid, PAYLOAD_VERSION};
use crate::watermark::QimSpec;

/// Channel code identifiers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EccSpec {
    pub code: String,
    pub field_poly: u16,
    pub first_root: u8,
    pub crc: String,
}

impl Default for EccSpec {
    fn default() -> Self {
        Self { code: "RS(40,32)".into(), field_poly: 0x11D, first_root: 0, crc: "CRC-16/CCITT-FALSE".into() }
    }
}

pub const MERKLE_RULE: &str = "sha256:leaf=00|MSv1|cid|i_be32|fp|params_hash;node=01|l|r;odd=dup-last";

/// Every enrollment constant a verifier needs, hashed into each leaf.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub chunk_secs: f64,
    pub stride_secs: f64,
    pub sample_rate: u32,
    pub fingerprint: FingerprintSpec,
    pub qim: QimSpec,
    pub ecc: EccSpec,
    pub cid_bits: u32,
    pub kid: u16,
    pub payload_version: u8,
    pub merkle_rule: String,
    pub toolkit_version: String,
}

impl Default for Params {
    fn default() -> Self {
        Self::for_kid(1)
    }
}

impl Params {
    pub fn for_kid(kid: u16) -> Self {
        Self {
            chunk_secs: 2.0,
            stride_secs: 2.0,
            sample_rate: SAMPLE_RATE,
            fingerprint: FingerprintSpec::default(),
            qim: QimSpec::default(),
            ecc: EccSpec::default(),
            cid_bits: 128,
            kid,
            payload_version: PAYLOAD_VERSION,
            merkle_rule: MERKLE_RULE.into(),
            toolkit_version: crate::TOOLKIT_VERSION.into(),
        }
    }

    pub fn chunk_len(&self) -> usize {
        seconds_to_samples(self.chunk_secs, self.sample_rate)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.chunk_secs > 0.0) || !(self.stride_secs > 0.0) || self.stride_secs > self.chunk_secs {
            return Err(Error::InvalidArgument(format!(
                "chunking requires L > 0 and 0 < S <= L (got L={}, S={})",
                self.chunk_secs, self.stride_secs
            )));
        }
        if self.sample_rate == 0 {
            return Err(Error::InvalidArgument("sample rate must be positive".into()));
        }
        if self.payload_version != PAYLOAD_VERSION {
            return Err(Error::InvalidArgument(format!("unsupported payload version {}", self.payload_version)));
        }
        if self.ecc != EccSpec::default() || self.cid_bits != 128 || self.merkle_rule != MERKLE_RULE {
            return Err(Error::InvalidArgument("unsupported channel code, identifier size or tree rule".into()));
        }
        self.qim.validate(self.sample_rate)
    }

    pub fn canonical_json(&self) -> Result<Vec<u8>> {
        canonical_json(self)
    }

    pub fn hash(&self) -> Result<Digest> {
        Ok(Sha256::digest(self.canonical_json()?).into())
    }
}

/// Canonical JSON bytes of any serialisable record.
pub fn canonical_json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    // serde_json's map is ordered by key unless `preserve_order` is enabled,
    // so a round trip through `Value` sorts every object
    let v = serde_json::to_value(value)?;
    reject_nulls(&v, "$")?;
    Ok(serde_json::to_vec(&v)?)
}

fn reject_nulls(v: &Value, path: &str) -> Result<()> {
    match v {
        Value::Null => Err(Error::NonFinite(path.to_string())),
        Value::Array(items) => items.iter().enumerate().try_for_each(|(i, x)| reject_nulls(x, &format!("{path}[{i}]"))),
        Value::Object(map) => map.iter().try_for_each(|(k, x)| reject_nulls(x, &format!("{path}.{k}"))),
        _ => Ok(()),
    }
}

/// Signer identity bound into every manifest signature.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct IssuerMeta {
    pub issuer_id: String,
    pub kid: u16,
}

/// Ed25519 issuer key, stored on disk as its 32-byte seed in hex.
#[derive(Clone)]
pub struct IssuerKeypair {
    signing: SigningKey,
}

impl fmt::Debug for IssuerKeypair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "IssuerKeypair(pk={})", hex::encode(self.public_key().as_bytes()))
    }
}

impl IssuerKeypair {
    pub fn generate<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        Self { signing: SigningKey::generate(rng) }
    }

    pub fn from_seed(seed: &[u8; 32]) -> Self {
        Self { signing: SigningKey::from_bytes(seed) }
    }

    pub fn from_seed_hex(s: &str) -> Result<Self> {
        crate::hexbytes::decode_array(s.trim()).map(|seed| Self::from_seed(&seed)).map_err(Error::Malformed)
    }

    pub fn seed_hex(&self) -> String {
        hex::encode(self.signing.to_bytes())
    }

    pub fn public_key(&self) -> VerifyingKey {
        self.signing.verifying_key()
    }

    pub fn sign(&self, message: &[u8]) -> Signature {
        self.signing.sign(message)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_seed_hex(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, format!("{}\n", self.seed_hex()))?;
        Ok(())
    }
}

/// `root || cid || params_hash || canonical(issuer_meta)`.
pub fn signing_message(root: &Digest, cid: &Cid, params_hash: &Digest, meta: &IssuerMeta) -> Result<Vec<u8>> {
    let mut msg = Vec::with_capacity(80 + 48);
    msg.extend_from_slice(root);
    msg.extend_from_slice(&cid.0);
    msg.extend_from_slice(params_hash);
    msg.extend_from_slice(&canonical_json(meta)?);
    Ok(msg)
}

/// Signed commitment to one enrolled asset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub cid: Cid,
    #[serde(with = "crate::hexbytes")]
    pub root: Digest,
    #[serde(with = "crate::hexbytes")]
    pub signature: [u8; 64],
    pub params: Params,
    #[serde(with = "crate::hexbytes")]
    pub params_hash: Digest,
    pub issuer_meta: IssuerMeta,
    /// Lookup hint carried in every payload. Not covered by the signature.
    #[serde(with = "crate::hexbytes::u64_hex")]
    pub rid_alias: u64,
}

impl Manifest {
    /// Sign a commitment. `params.kid` must equal `meta.kid`.
    pub fn sign(
        key: &IssuerKeypair,
        meta: IssuerMeta,
        cid: Cid,
        root: Digest,
        params: Params,
        rid_alias: u64,
    ) -> Result<Self> {
        if meta.kid != params.kid {
            return Err(Error::KeyMismatch(format!("issuer kid {} but params kid {}", meta.kid, params.kid)));
        }
        let params_hash = params.hash()?;
        let signature = key.sign(&signing_message(&root, &cid, &params_hash, &meta)?).to_bytes();
        Ok(Self { cid, root, signature, params, params_hash, issuer_meta: meta, rid_alias })
    }

    pub fn signing_message(&self) -> Result<Vec<u8>> {
        signing_message(&self.root, &self.cid, &self.params_hash, &self.issuer_meta)
    }

    /// Checks the stored params hash against the params and the signature
    /// against `pk`.
    pub fn verify_with(&self, pk: &VerifyingKey) -> SignatureCheck {
        match self.params.hash() {
            Ok(h) if h == self.params_hash => {}
            _ => return SignatureCheck::ParamsHashMismatch,
        }
        let Ok(msg) = self.signing_message() else {
            return SignatureCheck::Invalid;
        };
        match pk.verify(&msg, &Signature::from_bytes(&self.signature)) {
            Ok(()) => SignatureCheck::Valid,
            Err(_) => SignatureCheck::Invalid,
        }
    }

    /// Resolve the issuer key in `trust` and verify.
    pub fn verify(&self, trust: &TrustStore) -> SignatureCheck {
        match trust.resolve(&self.issuer_meta) {
            Some(pk) => self.verify_with(&pk),
            None => SignatureCheck::KeyUnresolved,
        }
    }

    pub fn to_canonical_json(&self) -> Result<Vec<u8>> {
        canonical_json(self)
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        Ok(serde_json::from_slice(bytes)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignatureCheck {
    Valid,
    Invalid,
    KeyUnresolved,
    ParamsHashMismatch,
}

impl SignatureCheck {
    pub fn is_valid(self) -> bool {
        self == SignatureCheck::Valid
    }
}

/// Pinned issuer keys, one `issuer_id kid pk_hex` record per line.
#[derive(Debug, Clone, Default)]
pub struct TrustStore {
    keys: HashMap<(String, u16), VerifyingKey>,
}

impl TrustStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, meta: &IssuerMeta, pk: VerifyingKey) {
        self.keys.insert((meta.issuer_id.clone(), meta.kid), pk);
    }

    pub fn with(mut self, meta: &IssuerMeta, pk: VerifyingKey) -> Self {
        self.insert(meta, pk);
        self
    }

    pub fn resolve(&self, meta: &IssuerMeta) -> Option<VerifyingKey> {
        self.keys.get(&(meta.issuer_id.clone(), meta.kid)).copied()
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    /// Parse the line format. Blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut store = Self::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |what: &str| Error::Malformed(format!("trust store line {}: {what}", n + 1));
            let fields: Vec<&str> = line.split_whitespace().collect();
            let [issuer_id, kid, pk_hex] = fields[..] else {
                return Err(bad("expected `issuer_id kid pk_hex`"));
            };
            let kid: u16 = kid.parse().map_err(|_| bad("kid must be an integer in 0..=65535"))?;
            let pk_bytes: [u8; 32] = crate::hexbytes::decode_array(pk_hex).map_err(|e| bad(&e))?;
            let pk = VerifyingKey::from_bytes(&pk_bytes).map_err(|_| bad("not a valid Ed25519 public key"))?;
            store.insert(&IssuerMeta { issuer_id: issuer_id.to_string(), kid }, pk);
        }
        Ok(store)
    }

    /// Records sorted by issuer and kid.
    pub fn to_text(&self) -> String {
        let mut entries: Vec<_> = self.keys.iter().collect();
        entries.sort_by(|a, b| a.0.cmp(b.0));
        entries.iter().map(|((id, kid), pk)| format!("{id} {kid} {}\n", hex::encode(pk.as_bytes()))).collect()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

/// A trust store record line for `meta` and `pk`.
pub fn trust_line(meta: &IssuerMeta, pk: &VerifyingKey) -> Result<String> {
    if meta.issuer_id.is_empty() || meta.issuer_id.chars().any(char::is_whitespace) {
        return Err(Error::InvalidArgument("issuer_id must be non-empty and contain no whitespace".into()));
    }
    Ok(format!("{} {} {}\n", meta.issuer_id, meta.kid, hex::encode(pk.as_bytes())))
}
