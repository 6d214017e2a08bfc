use std::fmt;
use std::str::FromStr;

use sha2::{Digest as _, Sha256};

pub const DIGEST_LEN: usize = 32;

/// A SHA-256 output.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Digest(pub [u8; DIGEST_LEN]);

impl Digest {
    pub const ZERO: Digest = Digest([0u8; DIGEST_LEN]);

    pub fn as_bytes(&self) -> &[u8; DIGEST_LEN] {
        &self.0
    }

    pub fn from_slice(bytes: &[u8]) -> Option<Self> {
        <[u8; DIGEST_LEN]>::try_from(bytes).ok().map(Digest)
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    /// Flips one bit, counting from the most significant bit of byte 0.
    pub fn with_bit_flipped(mut self, bit: usize) -> Self {
        self.0[bit / 8] ^= 0x80 >> (bit % 8);
        self
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({})", self.to_hex())
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid digest: expected {DIGEST_LEN} bytes of lowercase hex")]
pub struct ParseDigestError;

impl FromStr for Digest {
    type Err = ParseDigestError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.len() != DIGEST_LEN * 2 || s.bytes().any(|b| b.is_ascii_uppercase()) {
            return Err(ParseDigestError);
        }
        let mut out = [0u8; DIGEST_LEN];
        hex::decode_to_slice(s, &mut out).map_err(|_| ParseDigestError)?;
        Ok(Digest(out))
    }
}

impl From<[u8; DIGEST_LEN]> for Digest {
    fn from(bytes: [u8; DIGEST_LEN]) -> Self {
        Digest(bytes)
    }
}

/// A hash over a sequence of byte strings, concatenated.
///
/// Everything in the crate hashes through this trait so tests can count
/// evaluations with a wrapper.
pub trait HashFn: Sync {
    fn hash_parts(&self, parts: &[&[u8]]) -> Digest;

    fn hash(&self, data: &[u8]) -> Digest {
        self.hash_parts(&[data])
    }
}

/// Plain SHA-256.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sha256Fn;

impl HashFn for Sha256Fn {
    fn hash_parts(&self, parts: &[&[u8]]) -> Digest {
        let mut h = Sha256::new();
        for p in parts {
            h.update(p);
        }
        Digest(h.finalize().into())
    }
}

pub fn sha256(data: &[u8]) -> Digest {
    Sha256Fn.hash(data)
}

pub fn sha256_parts(parts: &[&[u8]]) -> Digest {
    Sha256Fn.hash_parts(parts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hex_roundtrip_and_case() {
        let d = sha256(b"abc");
        assert_eq!(d.to_hex().parse::<Digest>().unwrap(), d);
        assert!(d.to_hex().to_uppercase().parse::<Digest>().is_err());
        assert!("00".parse::<Digest>().is_err());
    }

    #[test]
    fn parts_equal_concatenation() {
        assert_eq!(sha256_parts(&[b"ab", b"", b"c"]), sha256(b"abc"));
    }

    #[test]
    fn bit_flip_msb_first() {
        let d = Digest::ZERO.with_bit_flipped(0);
        assert_eq!(d.0[0], 0x80);
        let d = Digest::ZERO.with_bit_flipped(255);
        assert_eq!(d.0[31], 0x01);
    }
}
