//! The password code: an injective map from dictionary indices to basis
//! strings with a guaranteed minimum pairwise distance.
//!
//! A bit 0 in a codeword stands for the `+` basis and a bit 1 for `x`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{BitString, Gf2Error};
use crate::rng::stream_rng;

/// Dictionaries up to this size have their minimum distance checked pair by pair.
pub const VERIFY_MAX_DICTIONARY: usize = 4096;
const MAX_ATTEMPTS: usize = 10_000;
const CODE_STREAM: u64 = 0x636f_6465;

/// Compact description of a randomly drawn code.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CodeDescriptor {
    pub seed: u64,
    pub dictionary_size: usize,
    pub codeword_len: usize,
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PasswordCode {
    dictionary_size: usize,
    codeword_len: usize,
    gamma: f64,
    min_distance: usize,
    distance_verified: bool,
    seed: Option<u64>,
    table: Vec<BitString>,
}

/// `ceil(gamma * n)` with a little slack for rates like 0.4 * 10.
pub fn required_distance(gamma: f64, n: usize) -> usize {
    (gamma * n as f64 - 1e-9).ceil().max(0.0) as usize
}

impl PasswordCode {
    /// Draws random linear codes of dimension `ceil(log2 |D|)` from the seed's
    /// stream until the first `|D|` codewords are pairwise at distance at least
    /// `ceil(gamma n)`. Past [`VERIFY_MAX_DICTIONARY`] the first draw is kept
    /// and the distance is left unverified.
    pub fn construct_random(dictionary_size: usize, codeword_len: usize, gamma: f64, seed: u64) -> Result<Self, Gf2Error> {
        if dictionary_size == 0 || codeword_len == 0 {
            return Err(Gf2Error::Parameter("dictionary and codeword length must be nonzero".into()));
        }
        if !(0.0..=1.0).contains(&gamma) {
            return Err(Gf2Error::Parameter(format!("gamma {gamma} must lie in [0, 1]")));
        }
        if dictionary_size > u32::MAX as usize {
            return Err(Gf2Error::Parameter("dictionary too large".into()));
        }
        let dim = usize::BITS as usize - (dictionary_size - 1).leading_zeros() as usize;
        let d = required_distance(gamma, codeword_len);
        let mut rng = stream_rng(seed, CODE_STREAM);
        for _ in 0..MAX_ATTEMPTS {
            let table = random_linear_table(&mut rng, dim, dictionary_size, codeword_len);
            let mut code = Self {
                dictionary_size,
                codeword_len,
                gamma,
                min_distance: d,
                distance_verified: false,
                seed: Some(seed),
                table,
            };
            if dictionary_size > VERIFY_MAX_DICTIONARY {
                return Ok(code);
            }
            if code.verify_min_distance()? >= d {
                code.distance_verified = true;
                return Ok(code);
            }
        }
        Err(Gf2Error::Parameter(format!(
            "no code with |D|={dictionary_size}, n={codeword_len} reached distance {d} after {MAX_ATTEMPTS} draws"
        )))
    }

    /// A code given by its full table. Rejects tables whose pairwise
    /// distance falls short of `ceil(gamma n)`.
    pub fn from_table(table: Vec<BitString>, gamma: f64) -> Result<Self, Gf2Error> {
        let codeword_len = table.first().map(BitString::len).unwrap_or(0);
        if table.is_empty() || codeword_len == 0 {
            return Err(Gf2Error::Parameter("empty code table".into()));
        }
        if let Some(bad) = table.iter().find(|w| w.len() != codeword_len) {
            return Err(Gf2Error::LengthMismatch { expected: codeword_len, found: bad.len() });
        }
        let d = required_distance(gamma, codeword_len);
        let mut code = Self {
            dictionary_size: table.len(),
            codeword_len,
            gamma,
            min_distance: d,
            distance_verified: false,
            seed: None,
            table,
        };
        if code.dictionary_size <= VERIFY_MAX_DICTIONARY {
            let actual = code.verify_min_distance()?;
            if actual < d {
                return Err(Gf2Error::Parameter(format!("code distance {actual} below required {d}")));
            }
            code.distance_verified = true;
        }
        Ok(code)
    }

    pub fn dictionary_size(&self) -> usize {
        self.dictionary_size
    }

    pub fn codeword_len(&self) -> usize {
        self.codeword_len
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// The declared distance `ceil(gamma n)`.
    pub fn min_distance(&self) -> usize {
        self.min_distance
    }

    /// False when the dictionary was too large to check pairwise.
    pub fn distance_verified(&self) -> bool {
        self.distance_verified
    }

    pub fn descriptor(&self) -> Option<CodeDescriptor> {
        self.seed.map(|seed| CodeDescriptor {
            seed,
            dictionary_size: self.dictionary_size,
            codeword_len: self.codeword_len,
            gamma: self.gamma,
        })
    }

    pub fn table(&self) -> &[BitString] {
        &self.table
    }

    pub fn encode(&self, pw: u32) -> Result<&BitString, Gf2Error> {
        self.table.get(pw as usize).ok_or(Gf2Error::UnknownPassword(pw))
    }

    /// Exact minimum pairwise distance; the codeword length when `|D| = 1`.
    pub fn verify_min_distance(&self) -> Result<usize, Gf2Error> {
        if self.dictionary_size > VERIFY_MAX_DICTIONARY {
            return Err(Gf2Error::Unsupported(format!(
                "pairwise distance check limited to {VERIFY_MAX_DICTIONARY} passwords"
            )));
        }
        let mut best = self.codeword_len;
        for (i, a) in self.table.iter().enumerate() {
            for b in &self.table[i + 1..] {
                best = best.min(a.hamming_distance(b)?);
            }
        }
        Ok(best)
    }
}

impl CodeDescriptor {
    pub fn instantiate(&self) -> Result<PasswordCode, Gf2Error> {
        PasswordCode::construct_random(self.dictionary_size, self.codeword_len, self.gamma, self.seed)
    }
}

fn random_linear_table<R: Rng + ?Sized>(rng: &mut R, dim: usize, size: usize, n: usize) -> Vec<BitString> {
    let generator: Vec<BitString> = (0..dim).map(|_| BitString::random(rng, n)).collect();
    (0..size)
        .map(|msg| {
            let mut word = BitString::zeros(n);
            for (i, row) in generator.iter().enumerate() {
                if msg >> i & 1 == 1 {
                    word.xor_assign(row);
                }
            }
            word
        })
        .collect()
}

pub fn password_encode(code: &PasswordCode, pw: u32) -> Result<BitString, Gf2Error> {
    code.encode(pw).cloned()
}

pub fn verify_min_distance(code: &PasswordCode) -> Result<usize, Gf2Error> {
    code.verify_min_distance()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pairwise_scan(words: &[BitString]) -> usize {
        let mut best = usize::MAX;
        for i in 0..words.len() {
            for j in 0..words.len() {
                if i != j {
                    let d = words[i].iter().zip(words[j].iter()).filter(|(a, b)| a != b).count();
                    best = best.min(d);
                }
            }
        }
        best
    }

    #[test]
    fn repetition_code() {
        let code = PasswordCode::from_table(vec![BitString::zeros(4), BitString::ones(4)], 1.0).unwrap();
        assert_eq!(code.verify_min_distance().unwrap(), 4);
        assert_eq!(password_encode(&code, 1).unwrap().to_string(), "1111");
        assert!(matches!(password_encode(&code, 2), Err(Gf2Error::UnknownPassword(2))));
    }

    #[test]
    fn table_below_required_distance_is_rejected() {
        let table = vec![BitString::parse("0000").unwrap(), BitString::parse("0001").unwrap()];
        assert!(PasswordCode::from_table(table, 0.5).is_err());
    }

    #[test]
    fn random_code_matches_pairwise_oracle() {
        let code = PasswordCode::construct_random(8, 16, 0.25, 42).unwrap();
        let d = code.verify_min_distance().unwrap();
        assert_eq!(d, pairwise_scan(code.table()));
        assert!(d >= 4);
        assert_eq!(code, code.descriptor().unwrap().instantiate().unwrap());
    }

    #[test]
    fn larger_dictionary_respects_distance() {
        let code = PasswordCode::construct_random(256, 64, 0.25, 7).unwrap();
        assert!(code.distance_verified());
        assert!(pairwise_scan(code.table()) >= 16);
    }

    #[test]
    fn singleton_dictionary_has_full_distance() {
        let code = PasswordCode::construct_random(1, 10, 0.4, 1).unwrap();
        assert_eq!(code.verify_min_distance().unwrap(), 10);
    }

    #[test]
    fn encoding_is_injective() {
        let code = PasswordCode::construct_random(16, 32, 0.4, 3).unwrap();
        let mut words: Vec<String> = code.table().iter().map(|w| w.to_string()).collect();
        words.sort();
        words.dedup();
        assert_eq!(words.len(), 16);
    }
}
