//! Keyed bit interleaver over the 320-bit codeword.
//!
//! The permutation is a Fisher–Yates shuffle driven by ChaCha20 on stream 1
//! of the watermark key seed, so it is fixed before any CID is known.

use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub const CODEWORD_BITS: usize = super::rs::CODEWORD_LEN * 8;

const INTERLEAVER_STREAM: u64 = 1;

/// Uniform index in `0..bound` from a 64-bit draw (multiply-shift).
pub(crate) fn bounded(rng: &mut impl RngCore, bound: usize) -> usize {
    ((rng.next_u64() as u128 * bound as u128) >> 64) as usize
}

/// Deterministic Fisher–Yates shuffle of `0..len`.
pub(crate) fn keyed_permutation(seed: u64, stream: u64, len: usize) -> Vec<usize> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let mut perm: Vec<usize> = (0..len).collect();
    for i in (1..len).rev() {
        let j = bounded(&mut rng, i + 1);
        perm.swap(i, j);
    }
    perm
}

/// Bit permutation: `out[k] = input[perm[k]]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Interleaver {
    perm: Vec<usize>,
}

impl Interleaver {
    pub fn new(key_seed: u64) -> Self {
        Self { perm: keyed_permutation(key_seed, INTERLEAVER_STREAM, CODEWORD_BITS) }
    }

    pub fn permutation(&self) -> &[usize] {
        &self.perm
    }

    pub fn interleave(&self, bits: &[bool; CODEWORD_BITS]) -> [bool; CODEWORD_BITS] {
        std::array::from_fn(|k| bits[self.perm[k]])
    }

    pub fn deinterleave(&self, bits: &[bool; CODEWORD_BITS]) -> [bool; CODEWORD_BITS] {
        let mut out = [false; CODEWORD_BITS];
        for (k, &src) in self.perm.iter().enumerate() {
            out[src] = bits[k];
        }
        out
    }
}

/// Bytes to bits, most significant bit first.
pub fn bytes_to_bits<const B: usize, const N: usize>(bytes: &[u8; B]) -> [bool; N] {
    assert_eq!(B * 8, N);
    std::array::from_fn(|k| bytes[k / 8] >> (7 - k % 8) & 1 == 1)
}

pub fn bits_to_bytes<const N: usize, const B: usize>(bits: &[bool; N]) -> [u8; B] {
    assert_eq!(B * 8, N);
    std::array::from_fn(|i| bits[i * 8..i * 8 + 8].iter().fold(0u8, |acc, &b| (acc << 1) | b as u8))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn permutation_is_a_bijection() {
        let il = Interleaver::new(1460);
        let mut sorted = il.permutation().to_vec();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..CODEWORD_BITS).collect::<Vec<_>>());
    }

    #[test]
    fn round_trip() {
        let il = Interleaver::new(1460);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let bits: [bool; CODEWORD_BITS] = std::array::from_fn(|_| rng.gen());
        assert_eq!(il.deinterleave(&il.interleave(&bits)), bits);
        assert_ne!(il.interleave(&bits), bits);
    }

    #[test]
    fn distinct_keys_differ_almost_everywhere() {
        let (a, b) = (Interleaver::new(1460), Interleaver::new(1461));
        let differing = a.permutation().iter().zip(b.permutation()).filter(|(x, y)| x != y).count();
        assert!(differing >= 300, "{differing}");
        assert_eq!(Interleaver::new(1460), a);
    }

    #[test]
    fn bit_packing_is_msb_first() {
        let bits: [bool; 16] = bytes_to_bits(&[0x80, 0x01]);
        assert!(bits[0] && bits[15]);
        assert_eq!(bits.iter().filter(|&&b| b).count(), 2);
        assert_eq!(bits_to_bytes::<16, 2>(&bits), [0x80, 0x01]);
    }
}
