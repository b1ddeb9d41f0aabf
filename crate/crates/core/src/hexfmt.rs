//! Lowercase hex helpers shared by the wire formats.
//!
//! Decoding is strict: uppercase digits are rejected so that every byte
//! string has exactly one textual encoding.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HexError {
    #[error("hex string contains uppercase or non-hex characters")]
    NotLowercase,
    #[error("invalid hex: {0}")]
    Invalid(String),
    #[error("expected {expected} hex digits, found {found}")]
    Width { expected: usize, found: usize },
}

pub fn encode(bytes: &[u8]) -> String {
    hex::encode(bytes)
}

pub fn decode(s: &str) -> Result<Vec<u8>, HexError> {
    if !s.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b)) {
        return Err(HexError::NotLowercase);
    }
    hex::decode(s).map_err(|e| HexError::Invalid(e.to_string()))
}

/// Decodes a hex string that must be exactly `width` bytes long.
pub fn decode_fixed(s: &str, width: usize) -> Result<Vec<u8>, HexError> {
    if s.len() != 2 * width {
        return Err(HexError::Width { expected: 2 * width, found: s.len() });
    }
    decode(s)
}

pub fn encode_u32(v: u32) -> String {
    format!("{v:08x}")
}

pub fn encode_u64(v: u64) -> String {
    format!("{v:016x}")
}

pub fn decode_u32(s: &str) -> Result<u32, HexError> {
    let bytes = decode_fixed(s, 4)?;
    Ok(u32::from_be_bytes(bytes.try_into().expect("width checked")))
}

pub fn decode_u64(s: &str) -> Result<u64, HexError> {
    let bytes = decode_fixed(s, 8)?;
    Ok(u64::from_be_bytes(bytes.try_into().expect("width checked")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_uppercase() {
        assert_eq!(decode("0A"), Err(HexError::NotLowercase));
        assert_eq!(decode("0a").unwrap(), vec![10]);
    }

    #[test]
    fn fixed_width_integers() {
        assert_eq!(encode_u64(42), "000000000000002a");
        assert_eq!(decode_u64("000000000000002a").unwrap(), 42);
        assert!(decode_u32("2a").is_err());
    }
}
