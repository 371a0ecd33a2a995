use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use merklespeech_core::manifest::{canonical_json, Manifest};
use merklespeech_core::merkle::MerkleProof;
use merklespeech_core::payload::Cid;
use merklespeech_core::repository::{RepoError, RepoResult, Repository};

/// Blocking repository client over HTTP.
///
/// Records are immutable, so every successful GET is cached for the life of
/// the client. Absence is not cached: a record may be published later.
pub struct HttpRepository {
    base: String,
    agent: ureq::Agent,
    cache: Mutex<HashMap<String, Vec<u8>>>,
    requests: AtomicUsize,
}

impl HttpRepository {
    pub fn new(base_url: &str) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(30)))
            .build()
            .into();
        Self {
            base: base_url.trim_end_matches('/').to_string(),
            agent,
            cache: Mutex::new(HashMap::new()),
            requests: AtomicUsize::new(0),
        }
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    /// Requests sent over the network so far.
    pub fn request_count(&self) -> usize {
        self.requests.load(Ordering::Relaxed)
    }

    fn transport(e: impl std::fmt::Display) -> RepoError {
        RepoError::Transport(e.to_string())
    }

    fn fetch(&self, path: &str) -> RepoResult<Option<Vec<u8>>> {
        if let Some(hit) = self.cache.lock().unwrap().get(path) {
            return Ok(Some(hit.clone()));
        }
        self.requests.fetch_add(1, Ordering::Relaxed);
        let mut resp = self.agent.get(&format!("{}{path}", self.base)).call().map_err(Self::transport)?;
        match resp.status().as_u16() {
            200 => {
                let body = resp.body_mut().read_to_vec().map_err(Self::transport)?;
                self.cache.lock().unwrap().insert(path.to_string(), body.clone());
                Ok(Some(body))
            }
            404 => Ok(None),
            code => Err(RepoError::Transport(format!("GET {path}: HTTP {code}"))),
        }
    }

    fn fetch_json<T: serde::de::DeserializeOwned>(&self, path: &str) -> RepoResult<Option<T>> {
        self.fetch(path)?
            .map(|body| serde_json::from_slice(&body).map_err(|e| Self::transport(format!("GET {path}: {e}"))))
            .transpose()
    }

    fn send(&self, path: &str, body: Vec<u8>) -> RepoResult<()> {
        self.requests.fetch_add(1, Ordering::Relaxed);
        let mut resp = self
            .agent
            .put(&format!("{}{path}", self.base))
            .header("content-type", "application/json")
            .send(&body[..])
            .map_err(Self::transport)?;
        let code = resp.status().as_u16();
        let mut msg = || resp.body_mut().read_to_string().unwrap_or_default();
        match code {
            200 => Ok(()),
            409 => Err(RepoError::Conflict(msg())),
            400 => Err(RepoError::Rejected(msg())),
            code => Err(RepoError::Transport(format!("PUT {path}: HTTP {code}"))),
        }
    }
}

impl Repository for HttpRepository {
    fn get_manifest(&self, cid: &Cid) -> RepoResult<Option<Manifest>> {
        self.fetch_json(&format!("/manifest/{cid}"))
    }

    fn get_manifest_by_rid(&self, rid: u64) -> RepoResult<Option<Manifest>> {
        self.fetch_json(&format!("/manifest/by-rid/{rid:016x}"))
    }

    fn get_proof(&self, cid: &Cid, index: u32) -> RepoResult<Option<MerkleProof>> {
        self.fetch_json(&format!("/proof/{cid}/{index}"))
    }

    fn put_manifest(&self, manifest: &Manifest) -> RepoResult<()> {
        let body = canonical_json(manifest).map_err(|e| RepoError::Rejected(e.to_string()))?;
        self.send(&format!("/manifest/{}", manifest.cid), body)
    }

    fn put_proofs(&self, cid: &Cid, proofs: &[MerkleProof]) -> RepoResult<()> {
        let body = canonical_json(&proofs).map_err(|e| RepoError::Rejected(e.to_string()))?;
        self.send(&format!("/proofs/{cid}"), body)
    }
}
