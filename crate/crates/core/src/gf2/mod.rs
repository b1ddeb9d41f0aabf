//! Linear algebra over GF(2): bit strings, Toeplitz hashing, syndrome
//! coding and the password code.

mod bitstring;
pub mod code;
pub mod hash;
pub mod syndrome;

use thiserror::Error;

pub use bitstring::BitString;
pub use code::{password_encode, PasswordCode};
pub use hash::{hash_eval, sample_two_universal, HashDescriptor, UniversalHash};
pub use syndrome::{syndrome_compute, syndrome_decode, DecodeStrategy, ParityCheck, SyndromeFamily};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Gf2Error {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("no codeword within distance {radius}")]
    DecodeFailure { radius: usize },
    #[error("password {0} is not in the dictionary")]
    UnknownPassword(u32),
}
