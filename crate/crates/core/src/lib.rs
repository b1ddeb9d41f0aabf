//! Desk-scale simulator for password-authenticated key exchange over a
//! BB84 quantum channel.
//!
//! The crate is organised bottom-up:
//!
//! * [`qchannel`] prepares, transmits and measures product-state BB84 qubits.
//! * [`gf2`] holds the GF(2) machinery: packed bit strings, Toeplitz hashing,
//!   syndrome code families and the password code.
//! * [`crypto`] provides the dual-mode bit commitment and Schnorr signatures
//!   over a prime-order subgroup.
//! * [`pake`] runs the two-party protocol as explicit client/server state
//!   machines exchanging typed flows.
//! * [`splitauth`] wraps the classical flows of any runner in signed,
//!   counter-stamped envelopes.
//! * [`harness`] drives scripted adversaries, Monte-Carlo experiments and the
//!   ideal key-exchange functionality used as a comparison oracle.
//! * [`bounds`] evaluates the security bounds for a parameter set.
//! * [`feasibility`] searches finite two-party functions for OT-cores.
//! * [`acceptance`] bundles the end-to-end acceptance checks so that both the
//!   test suite and the `selftest` CLI command can run them.

pub mod acceptance;
pub mod bounds;
pub mod crypto;
pub mod feasibility;
pub mod gf2;
pub mod harness;
pub mod hexfmt;
pub mod pake;
pub mod qchannel;
pub mod rng;
pub mod splitauth;

pub use gf2::BitString;
pub use pake::{ParamSet, ProtocolParams};
