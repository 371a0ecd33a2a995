//! The v1 in-band payload: bit-exact 32-byte layout, CRC-16, RS(40,32)
//! protection and keyed interleaving.
//!
//! Layout (big-endian throughout):
//!
//! | bytes  | field                                    |
//! |--------|------------------------------------------|
//! | 0      | `version << 4` (low nibble reserved, 0)  |
//! | 1–16   | CID (128 bits)                           |
//! | 17–19  | chunk index (24 bits)                    |
//! | 20–27  | rid, repository lookup hint (64 bits)    |
//! | 28–29  | kid, issuer key id (16 bits)             |
//! | 30–31  | CRC-16/CCITT-FALSE over bytes 0–29       |

mod crc;
mod interleave;
pub mod rs;

use std::fmt;
use std::str::FromStr;

use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use crc::crc16_ccitt_false;
pub use interleave::{bits_to_bytes, bytes_to_bits, Interleaver, CODEWORD_BITS};
pub(crate) use interleave::keyed_permutation;

use crate::error::{Error, Result};

pub const PAYLOAD_VERSION: u8 = 1;
pub const PACKED_LEN: usize = 32;
pub const MAX_INDEX: u32 = (1 << 24) - 1;

/// Random per-asset content identifier.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Cid(#[serde(with = "crate::hexbytes")] pub [u8; 16]);

impl Cid {
    /// Draw a fresh identifier from the operating system CSPRNG.
    pub fn random() -> Self {
        let mut bytes = [0u8; 16];
        rand::rngs::OsRng.fill_bytes(&mut bytes);
        Self(bytes)
    }

    pub fn from_rng(rng: &mut impl RngCore) -> Self {
        let mut bytes = [0u8; 16];
        rng.fill_bytes(&mut bytes);
        Self(bytes)
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Display for Cid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for Cid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Cid({})", self.to_hex())
    }
}

impl FromStr for Cid {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        crate::hexbytes::decode_array(s).map(Cid).map_err(Error::Malformed)
    }
}

/// Decoded payload fields.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PayloadFields {
    pub version: u8,
    pub cid: Cid,
    pub index: u32,
    pub rid: u64,
    pub kid: u16,
}

/// Why a received payload was rejected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum PayloadError {
    #[error("reed-solomon decoding failed")]
    Uncorrectable,
    #[error("payload_integrity: CRC mismatch")]
    Integrity,
    #[error("unsupported_version: {0}")]
    UnsupportedVersion(u8),
}

pub fn pack(fields: &PayloadFields) -> Result<[u8; PACKED_LEN]> {
    if fields.version > 0x0F {
        return Err(Error::PayloadRange(format!("version {} does not fit in 4 bits", fields.version)));
    }
    if fields.index > MAX_INDEX {
        return Err(Error::PayloadRange(format!("chunk index {} does not fit in 24 bits", fields.index)));
    }
    let mut out = [0u8; PACKED_LEN];
    out[0] = fields.version << 4;
    out[1..17].copy_from_slice(&fields.cid.0);
    out[17..20].copy_from_slice(&fields.index.to_be_bytes()[1..]);
    out[20..28].copy_from_slice(&fields.rid.to_be_bytes());
    out[28..30].copy_from_slice(&fields.kid.to_be_bytes());
    let crc = crc16_ccitt_false(&out[..30]);
    out[30..].copy_from_slice(&crc.to_be_bytes());
    Ok(out)
}

pub fn unpack(packed: &[u8; PACKED_LEN]) -> Result<PayloadFields, PayloadError> {
    let crc = u16::from_be_bytes([packed[30], packed[31]]);
    if crc16_ccitt_false(&packed[..30]) != crc {
        return Err(PayloadError::Integrity);
    }
    let version = packed[0] >> 4;
    if version != PAYLOAD_VERSION {
        return Err(PayloadError::UnsupportedVersion(version));
    }
    Ok(PayloadFields {
        version,
        cid: Cid(packed[1..17].try_into().unwrap()),
        index: u32::from_be_bytes([0, packed[17], packed[18], packed[19]]),
        rid: u64::from_be_bytes(packed[20..28].try_into().unwrap()),
        kid: u16::from_be_bytes([packed[28], packed[29]]),
    })
}

/// Full channel encoding: pack, RS encode, expand to bits, interleave.
pub fn encode_bits(fields: &PayloadFields, interleaver: &Interleaver) -> Result<[bool; CODEWORD_BITS]> {
    let codeword = rs::encode(&pack(fields)?);
    Ok(interleaver.interleave(&bytes_to_bits(&codeword)))
}

/// Successful channel decode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DecodedPayload {
    pub fields: PayloadFields,
    pub packed: [u8; PACKED_LEN],
    pub corrected_bytes: usize,
}

/// Inverse of [`encode_bits`]: deinterleave, RS decode, CRC check, unpack.
pub fn decode_bits(bits: &[bool; CODEWORD_BITS], interleaver: &Interleaver) -> Result<DecodedPayload, PayloadError> {
    let word: [u8; rs::CODEWORD_LEN] = bits_to_bytes(&interleaver.deinterleave(bits));
    decode_word(&word)
}

/// RS decode then CRC/version check of a 40-byte received word.
pub fn decode_word(word: &[u8; rs::CODEWORD_LEN]) -> Result<DecodedPayload, PayloadError> {
    let decoded = rs::decode(word).ok_or(PayloadError::Uncorrectable)?;
    let fields = unpack(&decoded.message)?;
    Ok(DecodedPayload { fields, packed: decoded.message, corrected_bytes: decoded.corrected })
}
