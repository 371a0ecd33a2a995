//! SHA-256 Merkle commitment over per-chunk leaf digests.
//!
//! Leaves and interior nodes are domain separated: a leaf digest hashes a
//! `0x00`-prefixed record, an interior node hashes `0x01 || left || right`.
//! A level of odd size greater than one duplicates its last node. A single
//! leaf is its own root with an empty proof.

use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};
use subtle::ConstantTimeEq;

use crate::error::{Error, Result};
use crate::fingerprint::{Fingerprint, FINGERPRINT_BYTES};
use crate::payload::Cid;

pub type Digest = [u8; 32];

/// Protocol tag mixed into every leaf.
pub const LEAF_TAG: &[u8; 4] = b"MSv1";
const LEAF_PREFIX: u8 = 0x00;
const NODE_PREFIX: u8 = 0x01;
/// Length of the hashed leaf record.
pub const LEAF_PREIMAGE_LEN: usize = 1 + 4 + 16 + 4 + FINGERPRINT_BYTES + 32;
/// Deepest proof accepted by [`verify`]; a 32-level tree already exceeds any
/// addressable chunk count.
pub const MAX_PROOF_LEN: usize = 32;

pub fn leaf_preimage(cid: &Cid, index: u32, fingerprint: &Fingerprint, params_hash: &Digest) -> [u8; LEAF_PREIMAGE_LEN] {
    let mut out = [0u8; LEAF_PREIMAGE_LEN];
    out[0] = LEAF_PREFIX;
    out[1..5].copy_from_slice(LEAF_TAG);
    out[5..21].copy_from_slice(&cid.0);
    out[21..25].copy_from_slice(&index.to_be_bytes());
    out[25..57].copy_from_slice(fingerprint.as_bytes());
    out[57..89].copy_from_slice(params_hash);
    out
}

/// Digest of chunk `index`'s leaf record.
pub fn leaf_digest(cid: &Cid, index: u32, fingerprint: &Fingerprint, params_hash: &Digest) -> Digest {
    Sha256::digest(leaf_preimage(cid, index, fingerprint, params_hash)).into()
}

/// [`leaf_digest`] over unchecked byte slices.
pub fn leaf_digest_from_slices(cid: &[u8], index: u32, fingerprint: &[u8], params_hash: &[u8]) -> Result<Digest> {
    let cid = Cid(cid.try_into().map_err(|_| Error::LengthMismatch { expected: 16, got: cid.len() })?);
    let fp = Fingerprint(
        fingerprint
            .try_into()
            .map_err(|_| Error::LengthMismatch { expected: FINGERPRINT_BYTES, got: fingerprint.len() })?,
    );
    let ph: Digest = params_hash.try_into().map_err(|_| Error::LengthMismatch { expected: 32, got: params_hash.len() })?;
    Ok(leaf_digest(&cid, index, &fp, &ph))
}

pub fn node_digest(left: &Digest, right: &Digest) -> Digest {
    let mut h = Sha256::new();
    h.update([NODE_PREFIX]);
    h.update(left);
    h.update(right);
    h.finalize().into()
}

/// Which side of the running hash a sibling sits on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    #[serde(rename = "L")]
    Left,
    #[serde(rename = "R")]
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProofStep {
    #[serde(with = "crate::hexbytes")]
    pub hash: Digest,
    pub side: Side,
}

/// Inclusion path from a leaf to the root, bottom level first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MerkleProof {
    pub leaf_index: u32,
    pub path: Vec<ProofStep>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MerkleTree {
    levels: Vec<Vec<Digest>>,
}

impl MerkleTree {
    pub fn build(leaves: Vec<Digest>) -> Result<Self> {
        if leaves.is_empty() {
            return Err(Error::InvalidArgument("a Merkle tree needs at least one leaf".into()));
        }
        if leaves.len() > u32::MAX as usize {
            return Err(Error::InvalidArgument("too many leaves".into()));
        }
        let mut levels = vec![leaves];
        while levels.last().unwrap().len() > 1 {
            let level = levels.last().unwrap();
            let next = level
                .chunks(2)
                .map(|pair| match pair {
                    [l, r] => node_digest(l, r),
                    [last] => node_digest(last, last),
                    _ => unreachable!(),
                })
                .collect();
            levels.push(next);
        }
        Ok(Self { levels })
    }

    pub fn root(&self) -> Digest {
        self.levels.last().unwrap()[0]
    }

    pub fn leaves(&self) -> &[Digest] {
        &self.levels[0]
    }

    pub fn len(&self) -> usize {
        self.levels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Number of proof steps per leaf.
    pub fn height(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn proof(&self, index: usize) -> Option<MerkleProof> {
        if index >= self.len() {
            return None;
        }
        let mut path = Vec::with_capacity(self.height());
        let mut pos = index;
        for level in &self.levels[..self.height()] {
            let step = if pos % 2 == 0 {
                // the last node of an odd level is paired with itself
                ProofStep { hash: *level.get(pos + 1).unwrap_or(&level[pos]), side: Side::Right }
            } else {
                ProofStep { hash: level[pos - 1], side: Side::Left }
            };
            path.push(step);
            pos /= 2;
        }
        Some(MerkleProof { leaf_index: index as u32, path })
    }

    pub fn proofs(&self) -> Vec<MerkleProof> {
        (0..self.len()).map(|i| self.proof(i).unwrap()).collect()
    }
}

/// Fold `digest` up `proof` and compare with `root` in constant time.
///
/// The side flags must agree with the binary expansion of `leaf_index`, so a
/// proof cannot be replayed for a different position. Malformed proofs
/// verify as `false`.
pub fn verify(digest: &Digest, proof: &MerkleProof, root: &Digest) -> bool {
    if proof.path.len() > MAX_PROOF_LEN {
        return false;
    }
    if proof.path.len() < 32 && (proof.leaf_index as u64) >> proof.path.len() != 0 {
        return false;
    }
    let mut acc = *digest;
    for (level, step) in proof.path.iter().enumerate() {
        let expected = if proof.leaf_index >> level & 1 == 0 { Side::Right } else { Side::Left };
        if step.side != expected {
            return false;
        }
        acc = match step.side {
            Side::Right => node_digest(&acc, &step.hash),
            Side::Left => node_digest(&step.hash, &acc),
        };
    }
    acc.ct_eq(root).into()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sha(bytes: &[u8]) -> Digest {
        Sha256::digest(bytes).into()
    }

    fn leaves(n: usize, rng: &mut impl Rng) -> Vec<Digest> {
        (0..n).map(|_| rng.gen()).collect()
    }

    #[test]
    fn all_zero_leaf_golden() {
        let d = leaf_digest(&Cid([0; 16]), 0, &Fingerprint([0; 32]), &[0; 32]);
        // SHA-256 of the 89-byte record, computed with Python hashlib
        assert_eq!(hex::encode(d), "0ed4900d1e4ff9c3c3d1771eaf8a97dc8ed123cdf3dd22233e7faf7a31888327");
    }

    #[test]
    fn populated_leaf_golden() {
        let cid = Cid(std::array::from_fn(|i| i as u8));
        let d = leaf_digest(&cid, 7, &Fingerprint([0xAB; 32]), &[0xCD; 32]);
        assert_eq!(hex::encode(d), "2e2c73cbb932c8dbfd01519e0d3ee6fcc0d19b4c566215fdbc23ce6a54e09a14");
    }

    #[test]
    fn preimage_layout() {
        let p = leaf_preimage(&Cid([1; 16]), 0x01020304, &Fingerprint([2; 32]), &[3; 32]);
        assert_eq!(p.len(), 89);
        assert_eq!(&p[..5], b"\x00MSv1");
        assert_eq!(&p[21..25], &[1, 2, 3, 4]);
    }

    #[test]
    fn every_input_byte_matters() {
        let base = leaf_preimage(&Cid([0; 16]), 0, &Fingerprint([0; 32]), &[0; 32]);
        let d0 = leaf_digest_from_slices(&base[5..21], 0, &base[25..57], &base[57..]).unwrap();
        for pos in 5..LEAF_PREIMAGE_LEN {
            let mut p = base;
            p[pos] ^= 1;
            let index = u32::from_be_bytes(p[21..25].try_into().unwrap());
            let d = leaf_digest_from_slices(&p[5..21], index, &p[25..57], &p[57..]).unwrap();
            assert_ne!(d, d0, "byte {pos}");
        }
    }

    #[test]
    fn slice_lengths_are_checked() {
        assert!(leaf_digest_from_slices(&[0; 15], 0, &[0; 32], &[0; 32]).is_err());
        assert!(leaf_digest_from_slices(&[0; 16], 0, &[0; 31], &[0; 32]).is_err());
        assert!(leaf_digest_from_slices(&[0; 16], 0, &[0; 32], &[0; 33]).is_err());
    }

    #[test]
    fn single_leaf_is_root() {
        let d = sha(b"x");
        let t = MerkleTree::build(vec![d]).unwrap();
        assert_eq!(t.root(), d);
        assert!(t.proof(0).unwrap().path.is_empty());
        assert!(verify(&d, &t.proof(0).unwrap(), &d));
    }

    #[test]
    fn three_leaf_root_golden() {
        let d: Vec<Digest> = (0..3u8).map(|k| sha(&[k])).collect();
        let t = MerkleTree::build(d.clone()).unwrap();
        assert_eq!(hex::encode(t.root()), "e8df0d16b06960aecb5eb1cb356efc205fc13a4ee65a7834790163478c6fe845");
        let expected = node_digest(&node_digest(&d[0], &d[1]), &node_digest(&d[2], &d[2]));
        assert_eq!(t.root(), expected);
    }

    #[test]
    fn empty_input_rejected() {
        assert!(MerkleTree::build(Vec::new()).is_err());
    }

    #[test]
    fn four_leaves_have_two_step_proofs() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = MerkleTree::build(leaves(4, &mut rng)).unwrap();
        assert!(t.proofs().iter().all(|p| p.path.len() == 2));
    }

    #[test]
    fn all_proofs_verify_and_bit_flips_fail() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for n in 1..=33 {
            let t = MerkleTree::build(leaves(n, &mut rng)).unwrap();
            for (i, p) in t.proofs().iter().enumerate() {
                let d = t.leaves()[i];
                assert!(verify(&d, p, &t.root()), "n={n} i={i}");
                let mut bad = d;
                bad[rng.gen_range(0..32)] ^= 1 << rng.gen_range(0..8);
                assert!(!verify(&bad, p, &t.root()));
            }
        }
    }

    #[test]
    fn swapped_siblings_fail() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = MerkleTree::build(leaves(4, &mut rng)).unwrap();
        let mut p = t.proof(1).unwrap();
        let (a, b) = (p.path[0].hash, p.path[1].hash);
        p.path[0].hash = b;
        p.path[1].hash = a;
        assert!(!verify(&t.leaves()[1], &p, &t.root()));
    }

    #[test]
    fn wrong_index_or_sides_fail() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let t = MerkleTree::build(leaves(8, &mut rng)).unwrap();
        let mut p = t.proof(5).unwrap();
        p.leaf_index = 4;
        assert!(!verify(&t.leaves()[5], &p, &t.root()));
        let mut p = t.proof(5).unwrap();
        p.leaf_index = 13;
        assert!(!verify(&t.leaves()[5], &p, &t.root()));
        let mut p = t.proof(5).unwrap();
        p.path[1].side = Side::Left;
        assert!(!verify(&t.leaves()[5], &p, &t.root()));
    }

    #[test]
    fn interior_node_cannot_pose_as_leaf() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let t = MerkleTree::build(leaves(4, &mut rng)).unwrap();
        let l = t.leaves();
        let inner = node_digest(&l[0], &l[1]);
        // the same child bytes hashed under the leaf prefix land elsewhere
        let as_leaf = sha(&[&[LEAF_PREFIX][..], &l[0], &l[1]].concat());
        assert_ne!(as_leaf, inner);
        let short = MerkleProof { leaf_index: 0, path: vec![ProofStep { hash: node_digest(&l[2], &l[3]), side: Side::Right }] };
        assert!(verify(&inner, &short, &t.root()));
        assert!(!verify(&as_leaf, &short, &t.root()));
    }

    #[test]
    fn rebuild_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let l = leaves(17, &mut rng);
        assert_eq!(MerkleTree::build(l.clone()).unwrap(), MerkleTree::build(l).unwrap());
    }

    #[test]
    fn proof_serialises_with_hex_and_side_letters() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let t = MerkleTree::build(leaves(3, &mut rng)).unwrap();
        let p = t.proof(2).unwrap();
        let v = serde_json::to_value(&p).unwrap();
        assert_eq!(v["leaf_index"], 2);
        assert_eq!(v["path"][0]["side"], "R");
        assert_eq!(v["path"][1]["side"], "L");
        assert_eq!(v["path"][0]["hash"].as_str().unwrap().len(), 64);
        assert_eq!(serde_json::from_value::<MerkleProof>(v).unwrap(), p);
    }

    #[test]
    fn oversized_proof_rejected() {
        let d = [0u8; 32];
        let p = MerkleProof { leaf_index: 0, path: vec![ProofStep { hash: d, side: Side::Right }; 33] };
        assert!(!verify(&d, &p, &d));
    }
}
