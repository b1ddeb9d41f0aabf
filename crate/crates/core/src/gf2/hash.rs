//! Toeplitz hashing, the two-universal family used for privacy amplification.

use serde::{Deserialize, Serialize};

use super::{BitString, Gf2Error};
use crate::rng::stream_rng;

/// Stream id under which a hash seed expands into a Toeplitz diagonal.
const HASH_STREAM: u64 = 0x7465_6f70;

/// Compact description of a family member: enough to rebuild it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HashDescriptor {
    pub seed: u64,
    pub input_len: usize,
    pub output_len: usize,
}

/// `h(x) = T x` with `T` the `output_len x input_len` Toeplitz matrix whose
/// entry `(i, j)` is `diagonal[i - j + input_len - 1]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UniversalHash {
    input_len: usize,
    output_len: usize,
    seed: Option<u64>,
    diagonal: BitString,
    rows: Vec<BitString>,
}

impl UniversalHash {
    pub fn from_diagonal(diagonal: BitString, input_len: usize, output_len: usize) -> Result<Self, Gf2Error> {
        check_dims(input_len, output_len)?;
        let expected = input_len + output_len - 1;
        if diagonal.len() != expected {
            return Err(Gf2Error::LengthMismatch { expected, found: diagonal.len() });
        }
        let rows = (0..output_len)
            .map(|i| BitString::from_bits((0..input_len).map(|j| diagonal.get(i + input_len - 1 - j))))
            .collect();
        Ok(Self { input_len, output_len, seed: None, diagonal, rows })
    }

    pub fn input_len(&self) -> usize {
        self.input_len
    }

    pub fn output_len(&self) -> usize {
        self.output_len
    }

    pub fn diagonal(&self) -> &BitString {
        &self.diagonal
    }

    pub fn descriptor(&self) -> Option<HashDescriptor> {
        self.seed.map(|seed| HashDescriptor { seed, input_len: self.input_len, output_len: self.output_len })
    }

    pub fn eval(&self, x: &BitString) -> Result<BitString, Gf2Error> {
        if x.len() != self.input_len {
            return Err(Gf2Error::LengthMismatch { expected: self.input_len, found: x.len() });
        }
        Ok(BitString::from_bits(self.rows.iter().map(|row| row.dot(x))))
    }
}

fn check_dims(input_len: usize, output_len: usize) -> Result<(), Gf2Error> {
    if output_len == 0 || output_len > input_len {
        return Err(Gf2Error::Parameter(format!(
            "hash output length {output_len} must be in 1..={input_len}"
        )));
    }
    Ok(())
}

/// Draws the family member named by `seed`.
pub fn sample_two_universal(seed: u64, input_len: usize, output_len: usize) -> Result<UniversalHash, Gf2Error> {
    check_dims(input_len, output_len)?;
    let mut rng = stream_rng(seed, HASH_STREAM);
    let diagonal = BitString::random(&mut rng, input_len + output_len - 1);
    let mut h = UniversalHash::from_diagonal(diagonal, input_len, output_len)?;
    h.seed = Some(seed);
    Ok(h)
}

impl HashDescriptor {
    pub fn instantiate(&self) -> Result<UniversalHash, Gf2Error> {
        sample_two_universal(self.seed, self.input_len, self.output_len)
    }
}

pub fn hash_eval(h: &UniversalHash, x: &BitString) -> Result<BitString, Gf2Error> {
    h.eval(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    /// Dense matrix-vector product built straight from the Toeplitz definition.
    fn matrix_oracle(diagonal: &BitString, input_len: usize, output_len: usize, x: &BitString) -> BitString {
        BitString::from_bits((0..output_len).map(|i| {
            let mut acc = false;
            for j in 0..input_len {
                let entry = diagonal.get(i + input_len - 1 - j);
                acc ^= entry && x.get(j);
            }
            acc
        }))
    }

    #[test]
    fn hand_computed_example() {
        // T = [[1,1,0,1],[0,1,1,0]] for diagonal 10110, so T * 1010 = 11.
        let h = UniversalHash::from_diagonal(BitString::parse("10110").unwrap(), 4, 2).unwrap();
        let x = BitString::parse("1010").unwrap();
        assert_eq!(h.eval(&x).unwrap().to_string(), "11");
        assert_eq!(h.eval(&x).unwrap(), matrix_oracle(h.diagonal(), 4, 2, &x));
        assert_eq!(h.eval(&BitString::zeros(4)).unwrap().to_string(), "00");
    }

    #[test]
    fn deterministic_in_seed() {
        assert_eq!(sample_two_universal(5, 40, 8).unwrap(), sample_two_universal(5, 40, 8).unwrap());
        assert_ne!(sample_two_universal(5, 40, 8).unwrap(), sample_two_universal(6, 40, 8).unwrap());
    }

    #[test]
    fn rejects_bad_dimensions() {
        assert!(sample_two_universal(1, 4, 5).is_err());
        assert!(sample_two_universal(1, 4, 0).is_err());
        let h = sample_two_universal(1, 8, 3).unwrap();
        assert!(h.eval(&BitString::zeros(7)).is_err());
    }

    #[test]
    fn matches_dense_oracle_and_is_linear() {
        let mut rng = stream_rng(11, 0);
        for seed in 0..200u64 {
            let h = sample_two_universal(seed, 70, 13).unwrap();
            let x = BitString::random(&mut rng, 70);
            let y = BitString::random(&mut rng, 70);
            assert_eq!(h.eval(&x).unwrap(), matrix_oracle(h.diagonal(), 70, 13, &x));
            let lhs = h.eval(&x.xor(&y)).unwrap();
            let rhs = h.eval(&x).unwrap().xor(&h.eval(&y).unwrap());
            assert_eq!(lhs, rhs);
        }
    }

    #[test]
    fn linearity_randomized() {
        let mut rng = stream_rng(12, 0);
        let h = sample_two_universal(3, 64, 16).unwrap();
        for _ in 0..10_000 {
            let x = BitString::random(&mut rng, 64);
            let y = BitString::random(&mut rng, 64);
            assert_eq!(h.eval(&x.xor(&y)).unwrap(), h.eval(&x).unwrap().xor(&h.eval(&y).unwrap()));
        }
    }

    #[test]
    fn collision_probability_exhaustive() {
        // l = 8, output 3: over all 2^10 diagonals, every fixed pair x != y
        // collides on exactly a 2^-3 fraction, within the two-universal bound.
        let (l, out) = (8usize, 3usize);
        let diagonals: Vec<UniversalHash> = (0..1u64 << (l + out - 1))
            .map(|d| UniversalHash::from_diagonal(BitString::from_u64(d, l + out - 1), l, out).unwrap())
            .collect();
        for (x, y) in [(1u64, 2u64), (0, 255), (17, 18), (200, 3), (0, 1)] {
            let (x, y) = (BitString::from_u64(x, l), BitString::from_u64(y, l));
            let collisions = diagonals.iter().filter(|h| h.eval(&x).unwrap() == h.eval(&y).unwrap()).count();
            assert!(collisions * (1 << out) <= diagonals.len(), "{collisions} collisions");
        }
    }
}
