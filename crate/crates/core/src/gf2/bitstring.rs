use std::cmp::Ordering;
use std::fmt;

use rand::Rng;

use super::Gf2Error;
use crate::hexfmt;

/// Packed bit string with an explicit length.
///
/// Bit `i` lives in word `i / 64` at position `i % 64`; bits past `len` are
/// always zero so that word-level comparisons and popcounts are exact.
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct BitString {
    words: Vec<u64>,
    len: usize,
}

fn words_for(len: usize) -> usize {
    len.div_ceil(64)
}

impl BitString {
    pub fn zeros(len: usize) -> Self {
        Self { words: vec![0; words_for(len)], len }
    }

    pub fn ones(len: usize) -> Self {
        let mut s = Self { words: vec![u64::MAX; words_for(len)], len };
        s.clear_tail();
        s
    }

    pub fn from_bits<I: IntoIterator<Item = bool>>(bits: I) -> Self {
        let mut s = Self::zeros(0);
        for b in bits {
            s.push(b);
        }
        s
    }

    /// Parses a string of `0`/`1` characters, bit 0 first.
    pub fn parse(s: &str) -> Result<Self, Gf2Error> {
        s.chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Gf2Error::Parse(format!("unexpected character {other:?}"))),
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Self::from_bits)
    }

    /// The low `len` bits of `value`, least significant bit first.
    pub fn from_u64(value: u64, len: usize) -> Self {
        assert!(len <= 64);
        let mut s = Self::zeros(len);
        if len > 0 {
            s.words[0] = value;
            s.clear_tail();
        }
        s
    }

    /// The bits as an integer, bit 0 least significant. Requires `len <= 64`.
    pub fn to_u64(&self) -> u64 {
        assert!(self.len <= 64);
        self.words.first().copied().unwrap_or(0)
    }

    /// Builds a string from packed words; bits past `len` are discarded.
    pub fn from_words(mut words: Vec<u64>, len: usize) -> Self {
        words.resize(words_for(len), 0);
        let mut s = Self { words, len };
        s.clear_tail();
        s
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R, len: usize) -> Self {
        let mut s = Self { words: (0..words_for(len)).map(|_| rng.next_u64()).collect(), len };
        s.clear_tail();
        s
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len, "bit index {i} out of range for length {}", self.len);
        (self.words[i / 64] >> (i % 64)) & 1 == 1
    }

    pub fn set(&mut self, i: usize, bit: bool) {
        assert!(i < self.len, "bit index {i} out of range for length {}", self.len);
        let mask = 1u64 << (i % 64);
        if bit {
            self.words[i / 64] |= mask;
        } else {
            self.words[i / 64] &= !mask;
        }
    }

    pub fn flip(&mut self, i: usize) {
        assert!(i < self.len, "bit index {i} out of range for length {}", self.len);
        self.words[i / 64] ^= 1u64 << (i % 64);
    }

    pub fn push(&mut self, bit: bool) {
        if self.len.is_multiple_of(64) {
            self.words.push(0);
        }
        self.len += 1;
        self.set(self.len - 1, bit);
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len).map(move |i| self.get(i))
    }

    /// Indices of the set bits in increasing order.
    pub fn ones_positions(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.weight());
        for (w, &word) in self.words.iter().enumerate() {
            let mut rest = word;
            while rest != 0 {
                out.push(w * 64 + rest.trailing_zeros() as usize);
                rest &= rest - 1;
            }
        }
        out
    }

    pub fn weight(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn xor(&self, other: &BitString) -> BitString {
        let mut out = self.clone();
        out.xor_assign(other);
        out
    }

    /// In-place XOR. Both operands must have the same length.
    pub fn xor_assign(&mut self, other: &BitString) {
        assert_eq!(self.len, other.len, "xor of bit strings with different lengths");
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a ^= b;
        }
    }

    /// Inner product over GF(2).
    pub fn dot(&self, other: &BitString) -> bool {
        assert_eq!(self.len, other.len, "dot product of bit strings with different lengths");
        let ones: u32 = self.words.iter().zip(&other.words).map(|(a, b)| (a & b).count_ones()).sum();
        ones % 2 == 1
    }

    pub fn hamming_distance(&self, other: &BitString) -> Result<usize, Gf2Error> {
        if self.len != other.len {
            return Err(Gf2Error::LengthMismatch { expected: self.len, found: other.len });
        }
        Ok(self.words.iter().zip(&other.words).map(|(a, b)| (a ^ b).count_ones() as usize).sum())
    }

    /// `x|_I`: the bits at `indices`, in the given order.
    pub fn restrict(&self, indices: &[usize]) -> BitString {
        let mut out = BitString::zeros(indices.len());
        for (k, &i) in indices.iter().enumerate() {
            if self.get(i) {
                out.set(k, true);
            }
        }
        out
    }

    /// Zero-pads or truncates to exactly `width` bits; truncation drops the
    /// highest indices.
    pub fn fit_to(&self, width: usize) -> BitString {
        let mut out = BitString::zeros(width);
        let keep = width.min(self.len);
        let full = keep / 64;
        out.words[..full].copy_from_slice(&self.words[..full]);
        if !keep.is_multiple_of(64) {
            out.words[full] = self.words[full] & ((1u64 << (keep % 64)) - 1);
        }
        out
    }

    pub fn concat(&self, other: &BitString) -> BitString {
        let mut out = self.clone();
        for b in other.iter() {
            out.push(b);
        }
        out
    }

    /// Ordering used to break ties between equal-weight error patterns:
    /// `Less` when the first index at which the strings differ is set in
    /// `self`, i.e. the sorted list of set positions is lexicographically
    /// smaller.
    pub fn position_order(&self, other: &BitString) -> Ordering {
        for (a, b) in self.words.iter().zip(&other.words) {
            let diff = a ^ b;
            if diff != 0 {
                let bit = diff.trailing_zeros();
                return if (a >> bit) & 1 == 1 { Ordering::Less } else { Ordering::Greater };
            }
        }
        Ordering::Equal
    }

    /// Lowercase hex, most significant bit first: bit `i` is bit `7 - i % 8`
    /// of byte `i / 8`. The length travels separately.
    pub fn to_hex(&self) -> String {
        hexfmt::encode(&self.to_bytes_msb())
    }

    pub fn to_bytes_msb(&self) -> Vec<u8> {
        let mut bytes = vec![0u8; self.len.div_ceil(8)];
        for i in self.ones_positions() {
            bytes[i / 8] |= 0x80 >> (i % 8);
        }
        bytes
    }

    pub fn from_hex(s: &str, len: usize) -> Result<Self, Gf2Error> {
        let bytes = hexfmt::decode_fixed(s, len.div_ceil(8)).map_err(|e| Gf2Error::Parse(e.to_string()))?;
        let mut out = BitString::zeros(len);
        for (idx, byte) in bytes.iter().enumerate() {
            for bit in 0..8 {
                if byte & (0x80 >> bit) != 0 {
                    let i = idx * 8 + bit;
                    if i >= len {
                        return Err(Gf2Error::Parse("nonzero padding bits".into()));
                    }
                    out.set(i, true);
                }
            }
        }
        Ok(out)
    }

    fn clear_tail(&mut self) {
        if !self.len.is_multiple_of(64) {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << (self.len % 64)) - 1;
            }
        }
    }
}

impl fmt::Display for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in self.iter() {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.len <= 128 {
            write!(f, "BitString({self})")
        } else {
            write!(f, "BitString(len={}, weight={})", self.len, self.weight())
        }
    }
}
