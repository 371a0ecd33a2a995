//! Lowercase-hex serde helpers for fixed-size byte arrays.
//!
//! Use as `#[serde(with = "crate::hexbytes")]` on `[u8; N]` fields.

use serde::{de::Error as _, Deserialize, Deserializer, Serializer};

pub fn serialize<S: Serializer, const N: usize>(bytes: &[u8; N], s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&hex::encode(bytes))
}

pub fn deserialize<'de, D: Deserializer<'de>, const N: usize>(d: D) -> Result<[u8; N], D::Error> {
    let s = String::deserialize(d)?;
    decode_array(&s).map_err(D::Error::custom)
}

/// Decode exactly `N` bytes of hex; uppercase digits are rejected so that
/// every value has a single textual form.
pub fn decode_array<const N: usize>(s: &str) -> Result<[u8; N], String> {
    if s.len() != 2 * N {
        return Err(format!("expected {} hex chars, got {}", 2 * N, s.len()));
    }
    if s.bytes().any(|b| b.is_ascii_uppercase()) {
        return Err("hex must be lowercase".into());
    }
    let mut out = [0u8; N];
    hex::decode_to_slice(s, &mut out).map_err(|e| e.to_string())?;
    Ok(out)
}

/// `u64` as 16 lowercase hex digits (big-endian).
pub mod u64_hex {
    use serde::{de::Error as _, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &u64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format!("{v:016x}"))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u64, D::Error> {
        let s = String::deserialize(d)?;
        super::decode_array::<8>(&s).map(u64::from_be_bytes).map_err(D::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_uppercase_and_wrong_length() {
        assert!(decode_array::<2>("abcd").is_ok());
        assert!(decode_array::<2>("ABCD").is_err());
        assert!(decode_array::<2>("abc").is_err());
        assert!(decode_array::<2>("abcdef").is_err());
    }

    #[derive(serde::Serialize, serde::Deserialize, PartialEq, Debug)]
    struct Rid(#[serde(with = "u64_hex")] u64);

    #[test]
    fn u64_is_sixteen_digits() {
        assert_eq!(serde_json::to_string(&Rid(0xAB)).unwrap(), "\"00000000000000ab\"");
        assert_eq!(serde_json::from_str::<Rid>("\"0102030405060708\"").unwrap(), Rid(0x0102030405060708));
        assert!(serde_json::from_str::<Rid>("\"ab\"").is_err());
    }
}
