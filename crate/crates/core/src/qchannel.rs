//! Product-state BB84 simulation.
//!
//! A qubit is a classical `(basis, bit)` pair. Measuring in the preparation
//! basis returns the bit; measuring in the other basis returns a fresh fair
//! coin. Registers are not `Clone` and [`measure`] takes them by value, so a
//! register can be measured once:
//!
//! ```compile_fail
//! use qpake::qchannel::{encode_bb84, measure};
//! use qpake::{rng::stream_rng, BitString};
//! let reg = encode_bb84(&BitString::zeros(4), &BitString::zeros(4)).unwrap();
//! let mut rng = stream_rng(1, 0);
//! let _ = measure(reg, &BitString::zeros(4), &mut rng);
//! let _ = measure(reg, &BitString::zeros(4), &mut rng);
//! ```

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gf2::BitString;
use crate::hexfmt;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum QChannelError {
    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("no channel hook named {0:?}")]
    UnknownHook(String),
    #[error("malformed register encoding: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Basis {
    Plus,
    Times,
}

impl Basis {
    pub fn from_bit(bit: bool) -> Self {
        if bit {
            Basis::Times
        } else {
            Basis::Plus
        }
    }

    pub fn bit(self) -> bool {
        self == Basis::Times
    }

    pub fn symbol(self) -> char {
        match self {
            Basis::Plus => '+',
            Basis::Times => 'x',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Qubit {
    pub basis: Basis,
    pub bit: bool,
}

/// Qubits stored column-wise: `bases` bit `i` is 1 for the x basis.
#[derive(PartialEq, Eq)]
pub struct QuantumRegister {
    bases: BitString,
    bits: BitString,
}

impl QuantumRegister {
    pub fn from_qubits(qubits: &[Qubit]) -> Self {
        Self {
            bases: BitString::from_bits(qubits.iter().map(|q| q.basis.bit())),
            bits: BitString::from_bits(qubits.iter().map(|q| q.bit)),
        }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn qubit(&self, i: usize) -> Qubit {
        Qubit { basis: Basis::from_bit(self.bases.get(i)), bit: self.bits.get(i) }
    }

    pub fn qubits(&self) -> Vec<Qubit> {
        (0..self.len()).map(|i| self.qubit(i)).collect()
    }

    /// Two bits per qubit, `basis` then `bit`, packed from the top of each byte.
    pub fn to_hex(&self) -> String {
        let mut bytes = vec![0u8; self.len().div_ceil(4)];
        for i in 0..self.len() {
            let pair = (u8::from(self.bases.get(i)) << 1) | u8::from(self.bits.get(i));
            bytes[i / 4] |= pair << (6 - 2 * (i % 4));
        }
        hexfmt::encode(&bytes)
    }

    pub fn from_hex(s: &str, len: usize) -> Result<Self, QChannelError> {
        let bytes = hexfmt::decode_fixed(s, len.div_ceil(4)).map_err(|e| QChannelError::Parse(e.to_string()))?;
        let mut bases = BitString::zeros(len);
        let mut bits = BitString::zeros(len);
        for (idx, byte) in bytes.iter().enumerate() {
            for slot in 0..4 {
                let pair = (byte >> (6 - 2 * slot)) & 3;
                let i = idx * 4 + slot;
                if i >= len {
                    if pair != 0 {
                        return Err(QChannelError::Parse("nonzero padding".into()));
                    }
                    continue;
                }
                bases.set(i, pair & 2 != 0);
                bits.set(i, pair & 1 != 0);
            }
        }
        Ok(Self { bases, bits })
    }
}

impl fmt::Debug for QuantumRegister {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "QuantumRegister({} qubits)", self.len())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterceptStrategy {
    RandomBasis,
    FixedBasis(Basis),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelModel {
    Ideal,
    BitFlip(f64),
    InterceptResend(InterceptStrategy),
    /// A named entry of a [`HookRegistry`].
    Scripted(String),
}

impl ChannelModel {
    pub fn validate(&self) -> Result<(), QChannelError> {
        match self {
            ChannelModel::BitFlip(p) if !(0.0..=1.0).contains(p) => {
                Err(QChannelError::Parameter(format!("flip probability {p} outside [0, 1]")))
            }
            _ => Ok(()),
        }
    }
}

pub type ChannelHook = Arc<dyn Fn(Vec<Qubit>, &mut dyn RngCore) -> Vec<Qubit> + Send + Sync>;

/// Named quantum-channel attacks for [`ChannelModel::Scripted`].
#[derive(Clone)]
pub struct HookRegistry {
    hooks: HashMap<String, ChannelHook>,
}

impl HookRegistry {
    pub fn empty() -> Self {
        Self { hooks: HashMap::new() }
    }

    pub fn register(&mut self, name: &str, hook: ChannelHook) {
        self.hooks.insert(name.to_string(), hook);
    }

    pub fn get(&self, name: &str) -> Option<&ChannelHook> {
        self.hooks.get(name)
    }
}

impl Default for HookRegistry {
    /// `flip-all` flips every bit, `flip-first` only qubit 0, and
    /// `measure-plus` measures and resends everything in the + basis.
    fn default() -> Self {
        let mut r = Self::empty();
        r.register(
            "flip-all",
            Arc::new(|qs: Vec<Qubit>, _: &mut dyn RngCore| qs.into_iter().map(|q| Qubit { bit: !q.bit, ..q }).collect()),
        );
        r.register(
            "flip-first",
            Arc::new(|mut qs: Vec<Qubit>, _: &mut dyn RngCore| {
                if let Some(q) = qs.first_mut() {
                    q.bit = !q.bit;
                }
                qs
            }),
        );
        r.register(
            "measure-plus",
            Arc::new(|qs: Vec<Qubit>, rng: &mut dyn RngCore| {
                qs.into_iter()
                    .map(|q| {
                        let bit = if q.basis == Basis::Plus { q.bit } else { rng.gen() };
                        Qubit { basis: Basis::Plus, bit }
                    })
                    .collect()
            }),
        );
        r
    }
}

impl fmt::Debug for HookRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut names: Vec<&String> = self.hooks.keys().collect();
        names.sort();
        f.debug_struct("HookRegistry").field("hooks", &names).finish()
    }
}

/// Prepares qubit `i` in basis `theta_i` carrying bit `x_i`. No randomness
/// is involved.
pub fn encode_bb84(x: &BitString, theta: &BitString) -> Result<QuantumRegister, QChannelError> {
    if x.len() != theta.len() {
        return Err(QChannelError::LengthMismatch { expected: x.len(), found: theta.len() });
    }
    if x.is_empty() {
        return Err(QChannelError::Parameter("register must hold at least one qubit".into()));
    }
    Ok(QuantumRegister { bases: theta.clone(), bits: x.clone() })
}

/// Outcome of measuring `bits` (prepared in `bases`) in `theta_hat`. One
/// 64-bit word is drawn per 64 positions whether or not any basis differs.
fn measure_words<R: RngCore + ?Sized>(bases: &BitString, bits: &BitString, theta_hat: &BitString, rng: &mut R) -> BitString {
    let len = bits.len();
    let words: Vec<u64> = bases
        .words()
        .iter()
        .zip(bits.words())
        .zip(theta_hat.words())
        .map(|((b, x), t)| {
            let coins = rng.next_u64();
            let differ = b ^ t;
            (x & !differ) | (coins & differ)
        })
        .collect();
    BitString::from_words(words, len)
}

pub fn measure<R: RngCore + ?Sized>(
    register: QuantumRegister,
    theta_hat: &BitString,
    rng: &mut R,
) -> Result<BitString, QChannelError> {
    if theta_hat.len() != register.len() {
        return Err(QChannelError::LengthMismatch { expected: register.len(), found: theta_hat.len() });
    }
    Ok(measure_words(&register.bases, &register.bits, theta_hat, rng))
}

pub fn apply_channel<R: RngCore>(
    register: QuantumRegister,
    model: &ChannelModel,
    rng: &mut R,
) -> Result<QuantumRegister, QChannelError> {
    apply_channel_with(register, model, &HookRegistry::default(), rng)
}

pub fn apply_channel_with<R: RngCore>(
    register: QuantumRegister,
    model: &ChannelModel,
    hooks: &HookRegistry,
    rng: &mut R,
) -> Result<QuantumRegister, QChannelError> {
    model.validate()?;
    let len = register.len();
    match model {
        ChannelModel::Ideal => Ok(register),
        ChannelModel::BitFlip(p) => {
            let mut bits = register.bits;
            for i in 0..len {
                if rng.gen_bool(*p) {
                    bits.flip(i);
                }
            }
            Ok(QuantumRegister { bases: register.bases, bits })
        }
        ChannelModel::InterceptResend(strategy) => {
            let eve_bases = match strategy {
                InterceptStrategy::RandomBasis => BitString::random(rng, len),
                InterceptStrategy::FixedBasis(Basis::Plus) => BitString::zeros(len),
                InterceptStrategy::FixedBasis(Basis::Times) => BitString::ones(len),
            };
            let seen = measure_words(&register.bases, &register.bits, &eve_bases, rng);
            Ok(QuantumRegister { bases: eve_bases, bits: seen })
        }
        ChannelModel::Scripted(name) => {
            let hook = hooks.get(name).ok_or_else(|| QChannelError::UnknownHook(name.clone()))?;
            let out = hook(register.qubits(), rng);
            Ok(QuantumRegister::from_qubits(&out))
        }
    }
}
