use std::sync::Arc;

use merklespeech_core::manifest::{IssuerKeypair, IssuerMeta, Manifest, Params};
use merklespeech_core::merkle::{MerkleProof, MerkleTree};
use merklespeech_core::payload::Cid;
use merklespeech_core::repository::{AcceptPolicy, FileStore, MemoryStore, RepoError, Repository};
use merklespeech_repo_http::{HttpRepository, ServerHandle};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

fn asset(seed: u64, n: usize) -> (Manifest, Vec<MerkleProof>) {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let key = IssuerKeypair::generate(&mut rng);
    let tree = MerkleTree::build((0..n).map(|_| rng.gen()).collect()).unwrap();
    let meta = IssuerMeta { issuer_id: "archive".into(), kid: 1 };
    let m = Manifest::sign(&key, meta, Cid::from_rng(&mut rng), tree.root(), Params::default(), rng.gen()).unwrap();
    (m, tree.proofs())
}

fn status(url: &str) -> u16 {
    let agent: ureq::Agent = ureq::Agent::config_builder().http_status_as_error(false).build().into();
    agent.get(url).call().unwrap().status().as_u16()
}

#[test]
fn loopback_matches_direct_store_access() {
    let dir = tempfile::tempdir().unwrap();
    let store = Arc::new(FileStore::open(dir.path(), AcceptPolicy::default()).unwrap());
    let (m, proofs) = asset(1, 6);
    store.put_manifest(&m).unwrap();
    store.put_proofs(&m.cid, &proofs).unwrap();

    let server = ServerHandle::spawn("127.0.0.1:0", store.clone()).unwrap();
    let client = HttpRepository::new(&server.url());
    let remote = client.get_manifest(&m.cid).unwrap().unwrap();
    assert_eq!(remote.to_canonical_json().unwrap(), store.get_manifest(&m.cid).unwrap().unwrap().to_canonical_json().unwrap());
    assert_eq!(client.get_manifest_by_rid(m.rid_alias).unwrap().unwrap(), m);
    for i in 0..6 {
        assert_eq!(client.get_proof(&m.cid, i).unwrap(), store.get_proof(&m.cid, i).unwrap());
    }
    assert!(client.get_proof(&m.cid, 6).unwrap().is_none());
    assert!(client.get_manifest(&Cid([3; 16])).unwrap().is_none());
}

#[test]
fn second_fetch_is_served_from_cache() {
    let store = Arc::new(MemoryStore::default());
    let (m, proofs) = asset(2, 3);
    store.put_manifest(&m).unwrap();
    store.put_proofs(&m.cid, &proofs).unwrap();
    let server = ServerHandle::spawn("127.0.0.1:0", store).unwrap();
    let client = HttpRepository::new(&server.url());

    client.get_manifest(&m.cid).unwrap().unwrap();
    client.get_proof(&m.cid, 1).unwrap().unwrap();
    let after_first = client.request_count();
    assert_eq!(after_first, 2);
    client.get_manifest(&m.cid).unwrap().unwrap();
    client.get_proof(&m.cid, 1).unwrap().unwrap();
    assert_eq!(client.request_count(), after_first);
    // absence is not cached
    client.get_proof(&m.cid, 9).unwrap();
    client.get_proof(&m.cid, 9).unwrap();
    assert_eq!(client.request_count(), after_first + 2);
}

#[test]
fn status_codes() {
    let store = Arc::new(MemoryStore::default());
    let server = ServerHandle::spawn("127.0.0.1:0", store.clone()).unwrap();
    let base = server.url();
    let (m, proofs) = asset(3, 2);

    assert_eq!(status(&format!("{base}/manifest/{}", m.cid)), 404);
    assert_eq!(status(&format!("{base}/manifest/not-hex")), 400);
    assert_eq!(status(&format!("{base}/manifest/by-rid/xyz")), 400);
    assert_eq!(status(&format!("{base}/proof/{}/minus", m.cid)), 400);

    let client = HttpRepository::new(&base);
    client.put_manifest(&m).unwrap();
    client.put_manifest(&m).unwrap();
    client.put_proofs(&m.cid, &proofs).unwrap();
    assert_eq!(status(&format!("{base}/manifest/{}", m.cid)), 200);
    assert_eq!(store.manifest_count(), 1);

    let mut altered = m.clone();
    altered.root[0] ^= 1;
    assert!(matches!(client.put_manifest(&altered), Err(RepoError::Conflict(_))));
    let mut bad = m.clone();
    bad.cid = Cid([1; 16]);
    bad.params.kid = 4;
    assert!(matches!(client.put_manifest(&bad), Err(RepoError::Rejected(_))));
}

#[test]
fn unreachable_server_is_a_transport_error() {
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let client = HttpRepository::new(&format!("http://127.0.0.1:{port}"));
    assert!(matches!(client.get_manifest(&Cid([0; 16])), Err(RepoError::Transport(_))));
}
