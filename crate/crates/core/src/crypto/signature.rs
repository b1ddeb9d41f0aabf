//! Schnorr signatures over the commitment group.

use rand::RngCore;
use sha2::{Digest, Sha256};

use super::group::{Element, GroupParams, Scalar};
use super::CryptoError;

pub const SIG_TAG: &[u8] = b"qpake/sig/v1";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SigKeyPair {
    pub sk: Scalar,
    pub vk: Element,
}

/// `(e, z)` with `e = H(tag || g^k || vk || msg) mod q` and `z = k + e sk`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Signature {
    pub challenge: Scalar,
    pub response: Scalar,
}

pub fn sig_keygen<R: RngCore + ?Sized>(group: &GroupParams, rng: &mut R) -> SigKeyPair {
    let sk = group.random_nonzero_scalar(rng);
    let vk = group.pow_g(&sk);
    SigKeyPair { sk, vk }
}

fn challenge(group: &GroupParams, commitment: &Element, vk: &Element, msg: &[u8]) -> Scalar {
    let mut hasher = Sha256::new();
    hasher.update(SIG_TAG);
    hasher.update(group.element_to_bytes(commitment));
    hasher.update(group.element_to_bytes(vk));
    hasher.update(msg);
    group.scalar_from_bytes_mod(&hasher.finalize())
}

pub fn sign<R: RngCore + ?Sized>(group: &GroupParams, keys: &SigKeyPair, msg: &[u8], rng: &mut R) -> Signature {
    let k = group.random_nonzero_scalar(rng);
    let e = challenge(group, &group.pow_g(&k), &keys.vk, msg);
    let z = group.scalar_add(&k, &group.scalar_mul(&e, &keys.sk));
    Signature { challenge: e, response: z }
}

pub fn verify_sig(group: &GroupParams, vk: &Element, msg: &[u8], sig: &Signature) -> bool {
    let commitment = group.mul(&group.pow_g(&sig.response), &group.pow(vk, &group.scalar_neg(&sig.challenge)));
    challenge(group, &commitment, vk, msg) == sig.challenge
}

/// Verifies a hex-encoded signature; malformed encodings are rejected.
pub fn verify_sig_hex(group: &GroupParams, vk: &Element, msg: &[u8], sig_hex: &str) -> bool {
    Signature::from_hex(group, sig_hex).map(|sig| verify_sig(group, vk, msg, &sig)).unwrap_or(false)
}

impl Signature {
    pub fn to_bytes(&self, group: &GroupParams) -> Vec<u8> {
        let mut out = group.scalar_to_bytes(&self.challenge);
        out.extend(group.scalar_to_bytes(&self.response));
        out
    }

    pub fn to_hex(&self, group: &GroupParams) -> String {
        crate::hexfmt::encode(&self.to_bytes(group))
    }

    pub fn from_hex(group: &GroupParams, s: &str) -> Result<Self, CryptoError> {
        let w = 2 * group.scalar_bytes();
        if s.len() != 2 * w || !s.is_ascii() {
            return Err(CryptoError::Encoding("signature has the wrong width".into()));
        }
        Ok(Self { challenge: group.scalar_from_hex(&s[..w])?, response: group.scalar_from_hex(&s[w..])? })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::group::GroupPreset;
    use crate::rng::stream_rng;
    use rand::Rng;

    #[test]
    fn round_trip_and_mutations() {
        let g = GroupParams::preset(GroupPreset::Sim64);
        let mut rng = stream_rng(1, 0);
        let keys = sig_keygen(&g, &mut rng);
        for i in 0..1000 {
            let len = rng.gen_range(1..64);
            let mut msg = vec![0u8; len];
            rng.fill_bytes(&mut msg);
            let sig = sign(&g, &keys, &msg, &mut rng);
            assert!(verify_sig(&g, &keys.vk, &msg, &sig), "message {i}");
            let mut bad_msg = msg.clone();
            let bit = rng.gen_range(0..8 * len);
            bad_msg[bit / 8] ^= 1 << (bit % 8);
            assert!(!verify_sig(&g, &keys.vk, &bad_msg, &sig));
            let mut bytes = sig.to_bytes(&g);
            let bit = rng.gen_range(0..8 * bytes.len());
            bytes[bit / 8] ^= 1 << (bit % 8);
            assert!(!verify_sig_hex(&g, &keys.vk, &msg, &crate::hexfmt::encode(&bytes)));
        }
    }

    #[test]
    fn other_key_rejects() {
        let g = GroupParams::preset(GroupPreset::Sim64);
        let mut rng = stream_rng(2, 0);
        let a = sig_keygen(&g, &mut rng);
        let b = sig_keygen(&g, &mut rng);
        let sig = sign(&g, &a, b"hello", &mut rng);
        assert!(verify_sig(&g, &a.vk, b"hello", &sig));
        assert!(!verify_sig(&g, &b.vk, b"hello", &sig));
        assert!(!verify_sig_hex(&g, &a.vk, b"hello", "00"));
    }

    #[test]
    fn works_in_the_large_group() {
        let g = GroupParams::preset(GroupPreset::Modp2048);
        let mut rng = stream_rng(3, 0);
        let keys = sig_keygen(&g, &mut rng);
        let sig = sign(&g, &keys, b"flow", &mut rng);
        assert_eq!(sig.to_hex(&g).len(), 4 * g.scalar_bytes());
        assert!(verify_sig_hex(&g, &keys.vk, b"flow", &sig.to_hex(&g)));
        assert!(!verify_sig(&g, &keys.vk, b"floW", &sig));
    }
}
