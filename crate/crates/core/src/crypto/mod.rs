//! Group arithmetic, the dual-mode commitment and Schnorr signatures.
//!
//! The commitment relies on DDH, which a quantum adversary can break during
//! the run. Everything that touches it goes through [`commitment`], so a
//! post-quantum dual-mode scheme can replace it without touching callers.

pub mod commitment;
pub mod group;
pub mod signature;

use thiserror::Error;

pub use commitment::{
    commit, commit_with, equivocate, extract, keygen, keygen_with, verify_open, CommitKey, Commitment, Mode, Opening,
    Trapdoor,
};
pub use group::{Element, GroupParams, GroupPreset, Scalar};
pub use signature::{sig_keygen, sign, verify_sig, SigKeyPair, Signature};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CryptoError {
    #[error("invalid group: {0}")]
    Group(String),
    #[error("bad encoding: {0}")]
    Encoding(String),
    #[error("mode error: {0}")]
    Mode(String),
    #[error("commitment opens to neither bit")]
    Malformed,
}
