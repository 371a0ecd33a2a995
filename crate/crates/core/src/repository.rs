//! Manifest and proof stores.
//!
//! Records are immutable: a put of content identical to what is stored
//! succeeds without effect, a put of different content under the same key is
//! a conflict. Lookups of unknown keys return `Ok(None)`; only I/O and
//! transport failures are errors.
//!
//! On disk a [`FileStore`] keeps `<root>/<cid>/manifest.json`,
//! `<root>/<cid>/proofs/<i>.json` and a `<root>/rid-index` of
//! `rid_hex cid_hex` lines.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use thiserror::Error;

use crate::manifest::{canonical_json, Manifest, SignatureCheck, TrustStore};
use crate::merkle::MerkleProof;
use crate::payload::Cid;

/// Environment variable naming the default store root or URL.
pub const REPO_ENV: &str = "MERKLESPEECH_REPO";

#[derive(Debug, Error)]
pub enum RepoError {
    #[error("conflict: {0}")]
    Conflict(String),
    #[error("rejected: {0}")]
    Rejected(String),
    #[error("transport: {0}")]
    Transport(String),
}

impl From<std::io::Error> for RepoError {
    fn from(e: std::io::Error) -> Self {
        RepoError::Transport(e.to_string())
    }
}

pub type RepoResult<T> = std::result::Result<T, RepoError>;

/// Keyed, immutable store of manifests and inclusion proofs.
pub trait Repository: Send + Sync {
    fn get_manifest(&self, cid: &Cid) -> RepoResult<Option<Manifest>>;
    fn get_manifest_by_rid(&self, rid: u64) -> RepoResult<Option<Manifest>>;
    fn get_proof(&self, cid: &Cid, index: u32) -> RepoResult<Option<MerkleProof>>;
    fn put_manifest(&self, manifest: &Manifest) -> RepoResult<()>;
    /// Store proofs `0..proofs.len()` of an already stored manifest.
    fn put_proofs(&self, cid: &Cid, proofs: &[MerkleProof]) -> RepoResult<()>;
}

impl<R: Repository + ?Sized> Repository for &R {
    fn get_manifest(&self, cid: &Cid) -> RepoResult<Option<Manifest>> {
        (**self).get_manifest(cid)
    }
    fn get_manifest_by_rid(&self, rid: u64) -> RepoResult<Option<Manifest>> {
        (**self).get_manifest_by_rid(rid)
    }
    fn get_proof(&self, cid: &Cid, index: u32) -> RepoResult<Option<MerkleProof>> {
        (**self).get_proof(cid, index)
    }
    fn put_manifest(&self, manifest: &Manifest) -> RepoResult<()> {
        (**self).put_manifest(manifest)
    }
    fn put_proofs(&self, cid: &Cid, proofs: &[MerkleProof]) -> RepoResult<()> {
        (**self).put_proofs(cid, proofs)
    }
}

impl<R: Repository + ?Sized> Repository for std::sync::Arc<R> {
    fn get_manifest(&self, cid: &Cid) -> RepoResult<Option<Manifest>> {
        (**self).get_manifest(cid)
    }
    fn get_manifest_by_rid(&self, rid: u64) -> RepoResult<Option<Manifest>> {
        (**self).get_manifest_by_rid(rid)
    }
    fn get_proof(&self, cid: &Cid, index: u32) -> RepoResult<Option<MerkleProof>> {
        (**self).get_proof(cid, index)
    }
    fn put_manifest(&self, manifest: &Manifest) -> RepoResult<()> {
        (**self).put_manifest(manifest)
    }
    fn put_proofs(&self, cid: &Cid, proofs: &[MerkleProof]) -> RepoResult<()> {
        (**self).put_proofs(cid, proofs)
    }
}

/// What a store checks before accepting a manifest.
///
/// Every manifest must carry a params hash matching its params. With a trust
/// store, the signature must also verify under a pinned key.
#[derive(Debug, Clone, Default)]
pub struct AcceptPolicy {
    pub trust: Option<TrustStore>,
}

impl AcceptPolicy {
    pub fn pinned(trust: TrustStore) -> Self {
        Self { trust: Some(trust) }
    }

    pub fn check(&self, manifest: &Manifest) -> RepoResult<()> {
        match manifest.params.hash() {
            Ok(h) if h == manifest.params_hash => {}
            _ => return Err(RepoError::Rejected("params_hash does not match params".into())),
        }
        if let Some(trust) = &self.trust {
            match manifest.verify(trust) {
                SignatureCheck::Valid => {}
                other => return Err(RepoError::Rejected(format!("signature check failed: {other:?}"))),
            }
        }
        Ok(())
    }
}

/// Proof-set checks shared by the stores: consecutive leaf indices and a
/// uniform path length of `ceil(log2 n)`.
pub fn check_proof_set(proofs: &[MerkleProof]) -> RepoResult<()> {
    if proofs.is_empty() {
        return Err(RepoError::Rejected("empty proof set".into()));
    }
    let height = proofs.len().next_power_of_two().trailing_zeros() as usize;
    for (i, p) in proofs.iter().enumerate() {
        if p.leaf_index as usize != i {
            return Err(RepoError::Rejected(format!("proof {i} carries leaf index {}", p.leaf_index)));
        }
        if p.path.len() != height {
            return Err(RepoError::Rejected(format!("proof {i} has {} steps, expected {height}", p.path.len())));
        }
    }
    Ok(())
}

fn canonical<T: serde::Serialize>(v: &T) -> RepoResult<Vec<u8>> {
    canonical_json(v).map_err(|e| RepoError::Rejected(e.to_string()))
}

#[derive(Default)]
struct Tables {
    manifests: HashMap<Cid, Manifest>,
    proofs: HashMap<Cid, Vec<MerkleProof>>,
    rid_index: HashMap<u64, Cid>,
}

/// In-process store.
#[derive(Default)]
pub struct MemoryStore {
    policy: AcceptPolicy,
    tables: RwLock<Tables>,
}

impl MemoryStore {
    pub fn new(policy: AcceptPolicy) -> Self {
        Self { policy, tables: RwLock::default() }
    }

    pub fn manifest_count(&self) -> usize {
        self.tables.read().unwrap().manifests.len()
    }

    pub fn clear(&self) {
        *self.tables.write().unwrap() = Tables::default();
    }
}

impl Repository for MemoryStore {
    fn get_manifest(&self, cid: &Cid) -> RepoResult<Option<Manifest>> {
        Ok(self.tables.read().unwrap().manifests.get(cid).cloned())
    }

    fn get_manifest_by_rid(&self, rid: u64) -> RepoResult<Option<Manifest>> {
        let t = self.tables.read().unwrap();
        Ok(t.rid_index.get(&rid).and_then(|cid| t.manifests.get(cid)).cloned())
    }

    fn get_proof(&self, cid: &Cid, index: u32) -> RepoResult<Option<MerkleProof>> {
        Ok(self.tables.read().unwrap().proofs.get(cid).and_then(|p| p.get(index as usize)).cloned())
    }

    fn put_manifest(&self, manifest: &Manifest) -> RepoResult<()> {
        self.policy.check(manifest)?;
        let mut t = self.tables.write().unwrap();
        if let Some(existing) = t.manifests.get(&manifest.cid) {
            return if canonical(existing)? == canonical(manifest)? {
                Ok(())
            } else {
                Err(RepoError::Conflict(format!("manifest {} already stored with different content", manifest.cid)))
            };
        }
        if let Some(other) = t.rid_index.get(&manifest.rid_alias) {
            return Err(RepoError::Conflict(format!("rid {:016x} already maps to {other}", manifest.rid_alias)));
        }
        t.rid_index.insert(manifest.rid_alias, manifest.cid);
        t.manifests.insert(manifest.cid, manifest.clone());
        Ok(())
    }

    fn put_proofs(&self, cid: &Cid, proofs: &[MerkleProof]) -> RepoResult<()> {
        check_proof_set(proofs)?;
        let mut t = self.tables.write().unwrap();
        if !t.manifests.contains_key(cid) {
            return Err(RepoError::Rejected(format!("no manifest stored for {cid}")));
        }
        if let Some(existing) = t.proofs.get(cid) {
            return if existing.as_slice() == proofs {
                Ok(())
            } else {
                Err(RepoError::Conflict(format!("proofs for {cid} already stored with different content")))
            };
        }
        t.proofs.insert(*cid, proofs.to_vec());
        Ok(())
    }
}

/// Directory-backed store. Files are written once, via a temporary file and
/// a rename, and never modified.
pub struct FileStore {
    root: PathBuf,
    policy: AcceptPolicy,
    write_lock: Mutex<()>,
}

impl FileStore {
    pub fn open(root: impl Into<PathBuf>, policy: AcceptPolicy) -> RepoResult<Self> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        Ok(Self { root, policy, write_lock: Mutex::new(()) })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn manifest_path(&self, cid: &Cid) -> PathBuf {
        self.root.join(cid.to_hex()).join("manifest.json")
    }

    fn proof_path(&self, cid: &Cid, index: u32) -> PathBuf {
        self.root.join(cid.to_hex()).join("proofs").join(format!("{index}.json"))
    }

    fn rid_index_path(&self) -> PathBuf {
        self.root.join("rid-index")
    }

    fn read_opt(path: &Path) -> RepoResult<Option<Vec<u8>>> {
        match fs::read(path) {
            Ok(b) => Ok(Some(b)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e.into()),
        }
    }

    fn parse<T: serde::de::DeserializeOwned>(path: &Path, bytes: &[u8]) -> RepoResult<T> {
        serde_json::from_slice(bytes).map_err(|e| RepoError::Transport(format!("corrupt record {}: {e}", path.display())))
    }

    fn write_new(path: &Path, bytes: &[u8]) -> RepoResult<()> {
        let dir = path.parent().expect("record paths have a parent");
        fs::create_dir_all(dir)?;
        let tmp = dir.join(format!(".{}.tmp", path.file_name().unwrap().to_string_lossy()));
        fs::write(&tmp, bytes)?;
        fs::rename(&tmp, path)?;
        Ok(())
    }

    fn lookup_rid(&self, rid: u64) -> RepoResult<Option<Cid>> {
        let Some(bytes) = Self::read_opt(&self.rid_index_path())? else {
            return Ok(None);
        };
        let key = format!("{rid:016x}");
        for line in String::from_utf8_lossy(&bytes).lines() {
            if let Some((r, c)) = line.split_once(' ') {
                if r == key {
                    return c.trim().parse().map(Some).map_err(|_| RepoError::Transport("corrupt rid-index".into()));
                }
            }
        }
        Ok(None)
    }
}

impl Repository for FileStore {
    fn get_manifest(&self, cid: &Cid) -> RepoResult<Option<Manifest>> {
        let path = self.manifest_path(cid);
        Self::read_opt(&path)?.map(|b| Self::parse(&path, &b)).transpose()
    }

    fn get_manifest_by_rid(&self, rid: u64) -> RepoResult<Option<Manifest>> {
        match self.lookup_rid(rid)? {
            Some(cid) => self.get_manifest(&cid),
            None => Ok(None),
        }
    }

    fn get_proof(&self, cid: &Cid, index: u32) -> RepoResult<Option<MerkleProof>> {
        let path = self.proof_path(cid, index);
        Self::read_opt(&path)?.map(|b| Self::parse(&path, &b)).transpose()
    }

    fn put_manifest(&self, manifest: &Manifest) -> RepoResult<()> {
        self.policy.check(manifest)?;
        let bytes = canonical(manifest)?;
        let _guard = self.write_lock.lock().unwrap();
        let path = self.manifest_path(&manifest.cid);
        if let Some(existing) = Self::read_opt(&path)? {
            return if existing == bytes {
                Ok(())
            } else {
                Err(RepoError::Conflict(format!("manifest {} already stored with different content", manifest.cid)))
            };
        }
        if let Some(other) = self.lookup_rid(manifest.rid_alias)? {
            return Err(RepoError::Conflict(format!("rid {:016x} already maps to {other}", manifest.rid_alias)));
        }
        Self::write_new(&path, &bytes)?;
        let mut index = fs::OpenOptions::new().create(true).append(true).open(self.rid_index_path())?;
        writeln!(index, "{:016x} {}", manifest.rid_alias, manifest.cid)?;
        Ok(())
    }

    fn put_proofs(&self, cid: &Cid, proofs: &[MerkleProof]) -> RepoResult<()> {
        check_proof_set(proofs)?;
        let _guard = self.write_lock.lock().unwrap();
        if !self.manifest_path(cid).exists() {
            return Err(RepoError::Rejected(format!("no manifest stored for {cid}")));
        }
        let encoded: Vec<Vec<u8>> = proofs.iter().map(canonical).collect::<RepoResult<_>>()?;
        for (i, bytes) in encoded.iter().enumerate() {
            if let Some(existing) = Self::read_opt(&self.proof_path(cid, i as u32))? {
                if &existing != bytes {
                    return Err(RepoError::Conflict(format!("proof {i} for {cid} already stored with different content")));
                }
            }
        }
        for (i, bytes) in encoded.iter().enumerate() {
            let path = self.proof_path(cid, i as u32);
            if !path.exists() {
                Self::write_new(&path, bytes)?;
            }
        }
        Ok(())
    }
}
