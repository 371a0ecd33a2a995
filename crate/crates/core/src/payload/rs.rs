//! Systematic Reed–Solomon RS(40, 32) over GF(2^8).
//!
//! Field polynomial `x^8 + x^4 + x^3 + x^2 + 1` (0x11D), generator element
//! `alpha = 2`, generator polynomial roots `alpha^0 .. alpha^7`. Codewords
//! are written highest-degree coefficient first: the 32 message bytes
//! followed by 8 parity bytes. Up to four byte errors are corrected.

pub const MESSAGE_LEN: usize = 32;
pub const PARITY_LEN: usize = 8;
pub const CODEWORD_LEN: usize = MESSAGE_LEN + PARITY_LEN;
/// Correctable byte errors.
pub const CAPACITY: usize = PARITY_LEN / 2;

const PRIM: u16 = 0x11D;

struct Tables {
    exp: [u8; 512],
    log: [u8; 256],
}

const fn build_tables() -> Tables {
    let mut exp = [0u8; 512];
    let mut log = [0u8; 256];
    let mut x: u16 = 1;
    let mut i = 0;
    while i < 255 {
        exp[i] = x as u8;
        log[x as usize] = i as u8;
        x <<= 1;
        if x & 0x100 != 0 {
            x ^= PRIM;
        }
        i += 1;
    }
    while i < 512 {
        exp[i] = exp[i - 255];
        i += 1;
    }
    Tables { exp, log }
}

static GF: Tables = build_tables();

fn mul(a: u8, b: u8) -> u8 {
    if a == 0 || b == 0 {
        0
    } else {
        GF.exp[GF.log[a as usize] as usize + GF.log[b as usize] as usize]
    }
}

fn div(a: u8, b: u8) -> u8 {
    assert!(b != 0, "division by zero in GF(256)");
    if a == 0 {
        0
    } else {
        GF.exp[(GF.log[a as usize] as usize + 255 - GF.log[b as usize] as usize) % 255]
    }
}

fn pow_alpha(e: usize) -> u8 {
    GF.exp[e % 255]
}

fn inv(a: u8) -> u8 {
    div(1, a)
}

/// Evaluate a polynomial given highest-degree coefficient first (Horner).
fn eval_desc(poly: &[u8], x: u8) -> u8 {
    poly.iter().fold(0, |acc, &c| mul(acc, x) ^ c)
}

/// Evaluate a polynomial given lowest-degree coefficient first.
fn eval_asc(poly: &[u8], x: u8) -> u8 {
    poly.iter().rev().fold(0, |acc, &c| mul(acc, x) ^ c)
}

/// Generator polynomial, highest-degree first (monic, degree 8).
fn generator() -> [u8; PARITY_LEN + 1] {
    let mut g = [0u8; PARITY_LEN + 1];
    g[0] = 1;
    let mut len = 1;
    for i in 0..PARITY_LEN {
        // multiply by (x + alpha^i)
        let root = pow_alpha(i);
        for j in (1..=len).rev() {
            g[j] ^= mul(g[j - 1], root);
        }
        len += 1;
    }
    g
}

/// Syndromes `S_j = r(alpha^j)`, `j = 0..8`.
pub fn syndromes(word: &[u8; CODEWORD_LEN]) -> [u8; PARITY_LEN] {
    std::array::from_fn(|j| eval_desc(word, pow_alpha(j)))
}

/// Append 8 parity bytes to `message`.
pub fn encode(message: &[u8; MESSAGE_LEN]) -> [u8; CODEWORD_LEN] {
    let g = generator();
    // remainder of message(x) * x^8 divided by g(x)
    let mut rem = [0u8; PARITY_LEN];
    for &m in message {
        let factor = m ^ rem[0];
        rem.copy_within(1.., 0);
        rem[PARITY_LEN - 1] = 0;
        if factor != 0 {
            for (r, &gc) in rem.iter_mut().zip(&g[1..]) {
                *r ^= mul(gc, factor);
            }
        }
    }
    let mut out = [0u8; CODEWORD_LEN];
    out[..MESSAGE_LEN].copy_from_slice(message);
    out[MESSAGE_LEN..].copy_from_slice(&rem);
    out
}

/// Outcome of a successful decode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Decoded {
    pub message: [u8; MESSAGE_LEN],
    /// Number of byte positions that were corrected.
    pub corrected: usize,
}

/// Decode a received word, correcting up to four byte errors. Returns
/// `None` when the word is not within distance four of a codeword.
pub fn decode(received: &[u8; CODEWORD_LEN]) -> Option<Decoded> {
    let synd = syndromes(received);
    let message = |w: &[u8; CODEWORD_LEN]| -> [u8; MESSAGE_LEN] { w[..MESSAGE_LEN].try_into().unwrap() };
    if synd.iter().all(|&s| s == 0) {
        return Some(Decoded { message: message(received), corrected: 0 });
    }

    // Berlekamp–Massey; polynomials lowest-degree first.
    let mut lambda = vec![1u8];
    let mut prev = vec![1u8];
    let mut l = 0usize;
    let mut shift = 1usize;
    let mut b = 1u8;
    for n in 0..PARITY_LEN {
        let mut d = synd[n];
        for i in 1..=l.min(lambda.len() - 1) {
            d ^= mul(lambda[i], synd[n - i]);
        }
        if d == 0 {
            shift += 1;
            continue;
        }
        let coef = div(d, b);
        let mut next = lambda.clone();
        if next.len() < prev.len() + shift {
            next.resize(prev.len() + shift, 0);
        }
        for (i, &p) in prev.iter().enumerate() {
            next[i + shift] ^= mul(coef, p);
        }
        if 2 * l <= n {
            l = n + 1 - l;
            prev = lambda;
            b = d;
            shift = 1;
        } else {
            shift += 1;
        }
        lambda = next;
    }
    while lambda.len() > 1 && *lambda.last().unwrap() == 0 {
        lambda.pop();
    }
    let degree = lambda.len() - 1;
    if degree == 0 || degree > CAPACITY || degree != l {
        return None;
    }

    // Chien search: position p (0 = first byte) has locator X = alpha^(39 - p).
    let mut positions = Vec::with_capacity(degree);
    for p in 0..CODEWORD_LEN {
        let x_inv = inv(pow_alpha(CODEWORD_LEN - 1 - p));
        if eval_asc(&lambda, x_inv) == 0 {
            positions.push(p);
        }
    }
    if positions.len() != degree {
        return None;
    }

    // Forney with first consecutive root alpha^0:
    // e = X * Omega(X^-1) / Lambda'(X^-1), Omega = S(x) Lambda(x) mod x^8.
    let mut omega = [0u8; PARITY_LEN];
    for (i, o) in omega.iter_mut().enumerate() {
        for j in 0..=i.min(degree) {
            *o ^= mul(lambda[j], synd[i - j]);
        }
    }
    // formal derivative: only odd-degree terms survive in characteristic 2
    let deriv: Vec<u8> = (1..lambda.len()).map(|i| if i % 2 == 1 { lambda[i] } else { 0 }).collect();
    let mut corrected = *received;
    for &p in &positions {
        let x = pow_alpha(CODEWORD_LEN - 1 - p);
        let x_inv = inv(x);
        let denom = eval_asc(&deriv, x_inv);
        if denom == 0 {
            return None;
        }
        corrected[p] ^= mul(x, div(eval_asc(&omega, x_inv), denom));
    }
    if syndromes(&corrected).iter().any(|&s| s != 0) {
        return None;
    }
    Some(Decoded { message: message(&corrected), corrected: degree })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::seq::index::sample;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_message(rng: &mut impl Rng) -> [u8; MESSAGE_LEN] {
        std::array::from_fn(|_| rng.gen())
    }

    /// Reference field multiplication by shift-and-add, independent of the
    /// log/exp tables.
    fn slow_mul(mut a: u8, mut b: u8) -> u8 {
        let mut p = 0u8;
        while b != 0 {
            if b & 1 != 0 {
                p ^= a;
            }
            let carry = a & 0x80 != 0;
            a <<= 1;
            if carry {
                a ^= (PRIM & 0xFF) as u8;
            }
            b >>= 1;
        }
        p
    }

    #[test]
    fn table_multiplication_matches_reference() {
        for a in 0..=255u8 {
            for b in 0..=255u8 {
                assert_eq!(mul(a, b), slow_mul(a, b));
            }
        }
    }

    #[test]
    fn codewords_vanish_at_generator_roots() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let cw = encode(&random_message(&mut rng));
            assert!(syndromes(&cw).iter().all(|&s| s == 0));
        }
    }

    #[test]
    fn golden_codeword() {
        // produced by an independent RS implementation with the same
        // conventions (prim 0x11d, generator 2, fcr 0, 8 parity symbols)
        let msg: [u8; 32] = std::array::from_fn(|i| i as u8);
        let cw = encode(&msg);
        assert_eq!(&cw[..32], &msg);
        assert_eq!(hex::encode(&cw[32..]), "0cb4728527df8e39");
    }

    #[test]
    fn clean_decode() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let msg = random_message(&mut rng);
        let d = decode(&encode(&msg)).unwrap();
        assert_eq!(d.message, msg);
        assert_eq!(d.corrected, 0);
    }

    #[test]
    fn corrects_up_to_four_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for trial in 0..1000 {
            let msg = random_message(&mut rng);
            let mut cw = encode(&msg);
            let n_err = 1 + trial % CAPACITY;
            for p in sample(&mut rng, CODEWORD_LEN, n_err) {
                cw[p] ^= rng.gen_range(1..=255u8);
            }
            let d = decode(&cw).expect("within capacity");
            assert_eq!(d.message, msg);
            assert_eq!(d.corrected, n_err);
        }
    }

    #[test]
    fn five_errors_rarely_miscorrect() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut wrong = 0;
        for _ in 0..1000 {
            let msg = random_message(&mut rng);
            let mut cw = encode(&msg);
            for p in sample(&mut rng, CODEWORD_LEN, 5) {
                cw[p] ^= rng.gen_range(1..=255u8);
            }
            if let Some(d) = decode(&cw) {
                assert_ne!(d.message, msg);
                wrong += 1;
            }
        }
        // miscorrections are left for the CRC stage; they must be rare
        assert!(wrong < 10, "{wrong} miscorrections");
    }
}
