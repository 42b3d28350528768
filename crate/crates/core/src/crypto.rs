//! Classical primitives: a keyed PRF and a one-time signature token double.
//!
//! The PRF is SHA-256 over `key || counter || input`, truncated to `kappa`
//! bits. The token is a stand-in for a one-shot signature: its handle signs
//! exactly once, and verification recomputes a keyed tag. Unforgeability
//! holds only operationally.

use alloc::vec::Vec;

use sha2::{Digest, Sha256};

use crate::f2::BitVec;
use crate::rng::SplitRng;

/// Encodes a tuple of byte strings, each with a 2-byte big-endian length prefix.
pub fn encode_tuple(fields: &[&[u8]]) -> Vec<u8> {
    let mut out = Vec::new();
    for f in fields {
        assert!(f.len() <= u16::MAX as usize, "tuple field too long");
        out.extend_from_slice(&(f.len() as u16).to_be_bytes());
        out.extend_from_slice(f);
    }
    out
}

/// Canonical bytes of a bit string: ASCII `0`/`1`.
pub fn bits_field(b: &BitVec) -> Vec<u8> {
    b.iter().map(|x| if x { b'1' } else { b'0' }).collect()
}

#[derive(Clone, PartialEq, Eq)]
pub struct PrfKey {
    key: [u8; 32],
    kappa: usize,
}

impl core::fmt::Debug for PrfKey {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "PrfKey {{ kappa: {}, .. }}", self.kappa)
    }
}

impl PrfKey {
    pub fn generate(kappa: usize, rng: &mut SplitRng) -> PrfKey {
        assert!(kappa >= 1, "kappa must be positive");
        let mut key = [0u8; 32];
        rng.fill_bytes(&mut key);
        PrfKey { key, kappa }
    }

    pub fn from_bytes(key: [u8; 32], kappa: usize) -> PrfKey {
        PrfKey { key, kappa }
    }

    pub fn kappa(&self) -> usize {
        self.kappa
    }

    pub fn eval(&self, input: &[u8]) -> BitVec {
        let mut out = BitVec::zeros(0);
        let mut counter = 0u32;
        while out.len() < self.kappa {
            let mut h = Sha256::new();
            h.update(self.key);
            h.update(counter.to_be_bytes());
            h.update(input);
            let digest = h.finalize();
            for byte in digest.iter() {
                for k in 0..8 {
                    if out.len() < self.kappa {
                        out.push(byte & (0x80 >> k) != 0);
                    }
                }
            }
            counter += 1;
        }
        out
    }
}

/// Tag produced by a token.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Signature(pub [u8; 32]);

/// Public verification data of a token.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VerificationKey {
    id: [u8; 16],
    mac: [u8; 32],
    msg_len: usize,
}

impl VerificationKey {
    pub fn msg_len(&self) -> usize {
        self.msg_len
    }

    fn tag(&self, m: &BitVec) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(self.mac);
        h.update(self.id);
        h.update(bits_field(m));
        h.finalize().into()
    }

    pub fn verify(&self, m: &BitVec, sig: &Signature) -> bool {
        if m.len() != self.msg_len {
            return false;
        }
        let want = self.tag(m);
        want.iter().zip(sig.0.iter()).fold(0u8, |acc, (a, b)| acc | (a ^ b)) == 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TokenError {
    #[error("token already spent")]
    Spent,
    #[error("message has {got} bits, token signs {want}")]
    Length { got: usize, want: usize },
}

/// Single-use signing handle.
#[derive(Debug)]
pub struct TokenHandle {
    vk: VerificationKey,
    spent: bool,
}

impl TokenHandle {
    pub fn is_spent(&self) -> bool {
        self.spent
    }

    /// Signs `m` and spends the handle.
    pub fn sign(&mut self, m: &BitVec) -> Result<Signature, TokenError> {
        if self.spent {
            return Err(TokenError::Spent);
        }
        if m.len() != self.vk.msg_len {
            return Err(TokenError::Length { got: m.len(), want: self.vk.msg_len });
        }
        self.spent = true;
        Ok(Signature(self.vk.tag(m)))
    }
}

/// Creates a token for messages of `msg_len` bits.
pub fn token_gen(msg_len: usize, rng: &mut SplitRng) -> (VerificationKey, TokenHandle) {
    let mut id = [0u8; 16];
    let mut mac = [0u8; 32];
    rng.fill_bytes(&mut id);
    rng.fill_bytes(&mut mac);
    let vk = VerificationKey { id, mac, msg_len };
    (vk.clone(), TokenHandle { vk, spent: false })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tuple_encoding_is_prefix_free() {
        assert_eq!(encode_tuple(&[b"ab", b""]), vec![0, 2, b'a', b'b', 0, 0]);
        assert_ne!(encode_tuple(&[b"a", b"b"]), encode_tuple(&[b"ab"]));
    }

    #[test]
    fn prf_is_deterministic_and_sized() {
        let mut rng = SplitRng::new(1);
        let k = PrfKey::generate(300, &mut rng);
        let a = k.eval(b"x");
        assert_eq!(a.len(), 300);
        assert_eq!(a, k.eval(b"x"));
        assert_ne!(a, k.eval(b"y"));
    }

    #[test]
    fn prf_frozen_vector() {
        let k = PrfKey::from_bytes([7u8; 32], 32);
        let mut h = Sha256::new();
        h.update([7u8; 32]);
        h.update(0u32.to_be_bytes());
        h.update(b"abc");
        let d = h.finalize();
        let want = BitVec::from_u64(u32::from_be_bytes([d[0], d[1], d[2], d[3]]) as u64, 32);
        assert_eq!(k.eval(b"abc"), want);
    }

    #[test]
    fn token_signs_once() {
        let mut rng = SplitRng::new(2);
        let (vk, mut h) = token_gen(2, &mut rng);
        let m = BitVec::parse("10").unwrap();
        let s = h.sign(&m).unwrap();
        assert!(vk.verify(&m, &s));
        assert!(!vk.verify(&BitVec::parse("11").unwrap(), &s));
        assert_eq!(h.sign(&m), Err(TokenError::Spent));
        let (vk2, _) = token_gen(2, &mut rng);
        assert!(!vk2.verify(&m, &s));
    }
}
