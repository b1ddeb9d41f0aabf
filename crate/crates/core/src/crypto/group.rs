//! Prime-order subgroups of `Z_p^*`.
//!
//! Moduli below 2^63 run on a Montgomery fast path with precomputed
//! fixed-base tables; larger moduli fall back to `BigUint::modpow`.

use std::fmt;

use num_bigint::{BigUint, RandBigInt};
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::CryptoError;
use crate::hexfmt;

const MODP2048_HEX: &str = concat!(
    "ffffffffffffffffc90fdaa22168c234c4c6628b80dc1cd129024e088a67cc74",
    "020bbea63b139b22514a08798e3404ddef9519b3cd3a431b302b0a6df25f1437",
    "4fe1356d6d51c245e485b576625e7ec6f44c42e9a637ed6b0bff5cb6f406b7ed",
    "ee386bfb5a899fa5ae9f24117c4b1fe649286651ece45b3dc2007cb8a163bf05",
    "98da48361c55d39a69163fa8fd24cf5f83655d23dca3ad961c62f356208552bb",
    "9ed529077096966d670c354e4abc9804f1746c08ca18217c32905e462e36ce3b",
    "e39e772c180e86039b2783a2ec07a28fb5c55df06f4c52c9de2bcbf695581718",
    "3995497cea956ae515d2261898fa051015728e5a8aacaa68ffffffffffffffff",
);

/// Largest 62-bit safe prime `p = 2q + 1`.
const SIM64_P: u64 = 0x3fff_ffff_ffff_d6bb;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupPreset {
    /// `p = 23, q = 11, g = 2`: small enough for exhaustive checks.
    Toy,
    /// 62-bit safe prime with `g = 4`, for fast simulation.
    Sim64,
    /// The 2048-bit MODP group of RFC 3526 with `g = 2`.
    Modp2048,
}

impl GroupPreset {
    pub fn name(self) -> &'static str {
        match self {
            GroupPreset::Toy => "toy",
            GroupPreset::Sim64 => "sim64",
            GroupPreset::Modp2048 => "modp2048",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [GroupPreset::Toy, GroupPreset::Sim64, GroupPreset::Modp2048].into_iter().find(|p| p.name() == s)
    }
}

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
enum Repr {
    Word(u64),
    Big(BigUint),
}

impl Repr {
    fn to_biguint(&self) -> BigUint {
        match self {
            Repr::Word(w) => BigUint::from(*w),
            Repr::Big(b) => b.clone(),
        }
    }
}

/// A residue mod `p`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Element(Repr);

/// An exponent mod `q`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Scalar(Repr);

impl Element {
    pub fn to_biguint(&self) -> BigUint {
        self.0.to_biguint()
    }
}

impl Scalar {
    pub fn to_biguint(&self) -> BigUint {
        self.0.to_biguint()
    }

    pub fn is_zero(&self) -> bool {
        match &self.0 {
            Repr::Word(w) => *w == 0,
            Repr::Big(b) => b.is_zero(),
        }
    }
}

impl fmt::Debug for Element {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Element({})", self.to_biguint())
    }
}

impl fmt::Debug for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Scalar({})", self.to_biguint())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Montgomery {
    p: u64,
    /// `-p^-1 mod 2^64`
    neg_inv: u64,
    /// `2^128 mod p`
    r2: u64,
    /// `2^64 mod p`, the Montgomery form of 1
    one: u64,
}

impl Montgomery {
    fn new(p: u64) -> Self {
        debug_assert!(p % 2 == 1 && p < 1 << 63);
        let mut inv: u64 = 1;
        for _ in 0..6 {
            inv = inv.wrapping_mul(2u64.wrapping_sub(p.wrapping_mul(inv)));
        }
        let one = ((1u128 << 64) % p as u128) as u64;
        let r2 = ((one as u128 * one as u128) % p as u128) as u64;
        Self { p, neg_inv: inv.wrapping_neg(), r2, one }
    }

    #[inline]
    fn redc(&self, t: u128) -> u64 {
        let m = (t as u64).wrapping_mul(self.neg_inv);
        let u = ((t + m as u128 * self.p as u128) >> 64) as u64;
        if u >= self.p {
            u - self.p
        } else {
            u
        }
    }

    #[inline]
    fn mul(&self, a: u64, b: u64) -> u64 {
        self.redc(a as u128 * b as u128)
    }

    fn to_mont(&self, a: u64) -> u64 {
        self.mul(a, self.r2)
    }

    fn leave_mont(&self, a: u64) -> u64 {
        self.redc(a as u128)
    }

    /// `base^e` with base and result in Montgomery form.
    fn pow(&self, base: u64, mut e: u64) -> u64 {
        let mut acc = self.one;
        let mut b = base;
        while e > 0 {
            if e & 1 == 1 {
                acc = self.mul(acc, b);
            }
            b = self.mul(b, b);
            e >>= 1;
        }
        acc
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Arith {
    Word { mont: Montgomery, q: u64, g: u64 },
    Big { p: BigUint, q: BigUint, g: BigUint },
}

/// Precomputed powers of a fixed base: entry `[w][d]` is `base^(d * 256^w)`.
#[derive(Clone, PartialEq, Eq)]
pub struct FixedBase {
    inner: FixedInner,
}

#[derive(Clone, PartialEq, Eq)]
enum FixedInner {
    Word(Vec<[u64; 256]>),
    Big(BigUint),
}

impl fmt::Debug for FixedBase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.inner {
            FixedInner::Word(t) => write!(f, "FixedBase({} windows)", t.len()),
            FixedInner::Big(b) => write!(f, "FixedBase({b})"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct GroupParams {
    arith: Arith,
    preset: Option<GroupPreset>,
    element_bytes: usize,
    scalar_bytes: usize,
    g_table: FixedBase,
}

impl PartialEq for GroupParams {
    fn eq(&self, other: &Self) -> bool {
        self.arith == other.arith
    }
}

impl Eq for GroupParams {}

impl GroupParams {
    pub fn preset(preset: GroupPreset) -> Self {
        let (p, q, g) = match preset {
            GroupPreset::Toy => (BigUint::from(23u32), BigUint::from(11u32), BigUint::from(2u32)),
            GroupPreset::Sim64 => {
                let p = BigUint::from(SIM64_P);
                let q = (&p - 1u32) >> 1;
                (p, q, BigUint::from(4u32))
            }
            GroupPreset::Modp2048 => {
                let p = BigUint::parse_bytes(MODP2048_HEX.as_bytes(), 16).expect("constant parses");
                let q = (&p - 1u32) >> 1;
                (p, q, BigUint::from(2u32))
            }
        };
        let mut group = Self::new(p, q, g).expect("preset groups are valid");
        group.preset = Some(preset);
        group
    }

    /// Checks that `q` divides `p - 1` and that `g` has order exactly `q`.
    /// Primality of `p` and `q` is taken on trust.
    pub fn new(p: BigUint, q: BigUint, g: BigUint) -> Result<Self, CryptoError> {
        if p < BigUint::from(5u32) || p.is_even() || q.is_zero() || !((&p - 1u32) % &q).is_zero() {
            return Err(CryptoError::Group("q must divide p - 1 for odd p".into()));
        }
        if g <= BigUint::one() || g >= p || !g.modpow(&q, &p).is_one() {
            return Err(CryptoError::Group("g must generate a subgroup of order q".into()));
        }
        let element_bytes = p.bits().div_ceil(8) as usize;
        let scalar_bytes = q.bits().div_ceil(8) as usize;
        let arith = match (p.to_u64(), q.to_u64(), g.to_u64()) {
            (Some(pw), Some(qw), Some(gw)) if pw < 1 << 63 => {
                Arith::Word { mont: Montgomery::new(pw), q: qw, g: gw }
            }
            _ => Arith::Big { p, q, g },
        };
        let mut group = Self {
            arith,
            preset: None,
            element_bytes,
            scalar_bytes,
            g_table: FixedBase { inner: FixedInner::Big(BigUint::zero()) },
        };
        group.g_table = group.fixed_base(&group.generator());
        Ok(group)
    }

    pub fn preset_kind(&self) -> Option<GroupPreset> {
        self.preset
    }

    pub fn p(&self) -> BigUint {
        match &self.arith {
            Arith::Word { mont, .. } => BigUint::from(mont.p),
            Arith::Big { p, .. } => p.clone(),
        }
    }

    pub fn q(&self) -> BigUint {
        match &self.arith {
            Arith::Word { q, .. } => BigUint::from(*q),
            Arith::Big { q, .. } => q.clone(),
        }
    }

    pub fn generator(&self) -> Element {
        match &self.arith {
            Arith::Word { g, .. } => Element(Repr::Word(*g)),
            Arith::Big { g, .. } => Element(Repr::Big(g.clone())),
        }
    }

    pub fn identity(&self) -> Element {
        self.element_from_biguint(&BigUint::one()).expect("1 is a residue")
    }

    pub fn element_bytes(&self) -> usize {
        self.element_bytes
    }

    pub fn scalar_bytes(&self) -> usize {
        self.scalar_bytes
    }

    /// Reduces `v` into `[1, p)`; zero and values `>= p` are rejected.
    pub fn element_from_biguint(&self, v: &BigUint) -> Result<Element, CryptoError> {
        if v.is_zero() || *v >= self.p() {
            return Err(CryptoError::Encoding("group element out of range".into()));
        }
        Ok(match &self.arith {
            Arith::Word { .. } => Element(Repr::Word(v.to_u64().expect("below p"))),
            Arith::Big { .. } => Element(Repr::Big(v.clone())),
        })
    }

    /// `v mod q`.
    pub fn scalar(&self, v: u64) -> Scalar {
        self.scalar_from_biguint(&BigUint::from(v))
    }

    pub fn scalar_from_biguint(&self, v: &BigUint) -> Scalar {
        match &self.arith {
            Arith::Word { q, .. } => Scalar(Repr::Word((v % *q).to_u64().expect("below q"))),
            Arith::Big { q, .. } => Scalar(Repr::Big(v % q)),
        }
    }

    /// Reduces a big-endian byte string mod `q`.
    pub fn scalar_from_bytes_mod(&self, bytes: &[u8]) -> Scalar {
        self.scalar_from_biguint(&BigUint::from_bytes_be(bytes))
    }

    pub fn random_scalar<R: RngCore + ?Sized>(&self, rng: &mut R) -> Scalar {
        match &self.arith {
            Arith::Word { q, .. } => Scalar(Repr::Word(rng.gen_range(0..*q))),
            Arith::Big { q, .. } => Scalar(Repr::Big(rng.gen_biguint_below(q))),
        }
    }

    /// Uniform in `[1, q)`.
    pub fn random_nonzero_scalar<R: RngCore + ?Sized>(&self, rng: &mut R) -> Scalar {
        match &self.arith {
            Arith::Word { q, .. } => Scalar(Repr::Word(rng.gen_range(1..*q))),
            Arith::Big { q, .. } => Scalar(Repr::Big(rng.gen_biguint_range(&BigUint::one(), q))),
        }
    }

    pub fn scalar_add(&self, a: &Scalar, b: &Scalar) -> Scalar {
        match (&self.arith, &a.0, &b.0) {
            (Arith::Word { q, .. }, Repr::Word(x), Repr::Word(y)) => {
                Scalar(Repr::Word(((*x as u128 + *y as u128) % *q as u128) as u64))
            }
            (Arith::Big { q, .. }, _, _) => Scalar(Repr::Big((a.to_biguint() + b.to_biguint()) % q)),
            _ => unreachable!("scalar from a different group"),
        }
    }

    pub fn scalar_neg(&self, a: &Scalar) -> Scalar {
        if a.is_zero() {
            return a.clone();
        }
        match (&self.arith, &a.0) {
            (Arith::Word { q, .. }, Repr::Word(x)) => Scalar(Repr::Word(q - x)),
            (Arith::Big { q, .. }, Repr::Big(x)) => Scalar(Repr::Big(q - x)),
            _ => unreachable!("scalar from a different group"),
        }
    }

    pub fn scalar_sub(&self, a: &Scalar, b: &Scalar) -> Scalar {
        self.scalar_add(a, &self.scalar_neg(b))
    }

    pub fn scalar_mul(&self, a: &Scalar, b: &Scalar) -> Scalar {
        match (&self.arith, &a.0, &b.0) {
            (Arith::Word { q, .. }, Repr::Word(x), Repr::Word(y)) => {
                Scalar(Repr::Word(((*x as u128 * *y as u128) % *q as u128) as u64))
            }
            (Arith::Big { q, .. }, _, _) => Scalar(Repr::Big((a.to_biguint() * b.to_biguint()) % q)),
            _ => unreachable!("scalar from a different group"),
        }
    }

    /// Inverse mod the prime `q`; `None` for zero.
    pub fn scalar_inv(&self, a: &Scalar) -> Option<Scalar> {
        if a.is_zero() {
            return None;
        }
        let q = self.q();
        Some(self.scalar_from_biguint(&a.to_biguint().modpow(&(&q - 2u32), &q)))
    }

    pub fn mul(&self, a: &Element, b: &Element) -> Element {
        match (&self.arith, &a.0, &b.0) {
            (Arith::Word { mont, .. }, Repr::Word(x), Repr::Word(y)) => {
                Element(Repr::Word(((*x as u128 * *y as u128) % mont.p as u128) as u64))
            }
            (Arith::Big { p, .. }, Repr::Big(x), Repr::Big(y)) => Element(Repr::Big((x * y) % p)),
            _ => unreachable!("element from a different group"),
        }
    }

    pub fn pow(&self, base: &Element, e: &Scalar) -> Element {
        match (&self.arith, &base.0, &e.0) {
            (Arith::Word { mont, .. }, Repr::Word(b), Repr::Word(x)) => {
                Element(Repr::Word(mont.leave_mont(mont.pow(mont.to_mont(*b), *x))))
            }
            (Arith::Big { p, .. }, Repr::Big(b), Repr::Big(x)) => Element(Repr::Big(b.modpow(x, p))),
            _ => unreachable!("value from a different group"),
        }
    }

    pub fn pow_g(&self, e: &Scalar) -> Element {
        self.multi_pow_fixed(&[(&self.g_table, e)])
    }

    /// `g^m` for a bit `m`.
    pub fn g_to_bit(&self, m: bool) -> Element {
        if m {
            self.generator()
        } else {
            self.identity()
        }
    }

    /// Inverse of a subgroup element, as `a^(q-1)`.
    pub fn inv(&self, a: &Element) -> Element {
        let e = self.scalar_neg(&self.scalar(1));
        self.pow(a, &e)
    }

    pub fn is_member(&self, a: &Element) -> bool {
        let q = self.q();
        match (&self.arith, &a.0) {
            (Arith::Word { mont, .. }, Repr::Word(x)) => {
                *x != 0 && *x < mont.p && mont.leave_mont(mont.pow(mont.to_mont(*x), q.to_u64().unwrap())) == 1
            }
            (Arith::Big { p, .. }, Repr::Big(x)) => !x.is_zero() && x < p && x.modpow(&q, p).is_one(),
            _ => false,
        }
    }

    pub fn fixed_base(&self, base: &Element) -> FixedBase {
        match (&self.arith, &base.0) {
            (Arith::Word { mont, q, .. }, Repr::Word(b)) => {
                let windows = (64 - q.leading_zeros() as usize).div_ceil(8).max(1);
                let mut tables = Vec::with_capacity(windows);
                let mut step = mont.to_mont(*b);
                for _ in 0..windows {
                    let mut row = [0u64; 256];
                    row[0] = mont.one;
                    for d in 1..256 {
                        row[d] = mont.mul(row[d - 1], step);
                    }
                    step = mont.mul(row[255], step);
                    tables.push(row);
                }
                FixedBase { inner: FixedInner::Word(tables) }
            }
            (_, other) => FixedBase { inner: FixedInner::Big(other.to_biguint()) },
        }
    }

    /// `prod base_i ^ e_i` over precomputed bases.
    pub fn multi_pow_fixed(&self, terms: &[(&FixedBase, &Scalar)]) -> Element {
        match &self.arith {
            Arith::Word { mont, .. } => {
                let mut acc = mont.one;
                for (base, e) in terms {
                    let (FixedInner::Word(table), Repr::Word(mut x)) = (&base.inner, &e.0) else {
                        unreachable!("value from a different group")
                    };
                    let mut w = 0;
                    while x != 0 {
                        let digit = (x & 0xff) as usize;
                        if digit != 0 {
                            acc = mont.mul(acc, table[w][digit]);
                        }
                        x >>= 8;
                        w += 1;
                    }
                }
                Element(Repr::Word(mont.leave_mont(acc)))
            }
            Arith::Big { p, .. } => {
                let mut acc = BigUint::one();
                for (base, e) in terms {
                    let FixedInner::Big(b) = &base.inner else { unreachable!("value from a different group") };
                    acc = (acc * b.modpow(&e.to_biguint(), p)) % p;
                }
                Element(Repr::Big(acc))
            }
        }
    }

    pub fn element_to_bytes(&self, a: &Element) -> Vec<u8> {
        fixed_width_be(&a.to_biguint(), self.element_bytes)
    }

    pub fn scalar_to_bytes(&self, a: &Scalar) -> Vec<u8> {
        fixed_width_be(&a.to_biguint(), self.scalar_bytes)
    }

    pub fn element_to_hex(&self, a: &Element) -> String {
        hexfmt::encode(&self.element_to_bytes(a))
    }

    pub fn scalar_to_hex(&self, a: &Scalar) -> String {
        hexfmt::encode(&self.scalar_to_bytes(a))
    }

    pub fn element_from_hex(&self, s: &str) -> Result<Element, CryptoError> {
        let bytes = hexfmt::decode_fixed(s, self.element_bytes).map_err(|e| CryptoError::Encoding(e.to_string()))?;
        self.element_from_biguint(&BigUint::from_bytes_be(&bytes))
    }

    /// Rejects encodings of values `>= q`.
    pub fn scalar_from_hex(&self, s: &str) -> Result<Scalar, CryptoError> {
        let bytes = hexfmt::decode_fixed(s, self.scalar_bytes).map_err(|e| CryptoError::Encoding(e.to_string()))?;
        let v = BigUint::from_bytes_be(&bytes);
        if v >= self.q() {
            return Err(CryptoError::Encoding("exponent out of range".into()));
        }
        Ok(self.scalar_from_biguint(&v))
    }

    /// Canonical byte description of `(p, q, g)`.
    pub fn describe(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for v in [self.p(), self.q(), self.generator().to_biguint()] {
            let bytes = v.to_bytes_be();
            out.extend_from_slice(&(bytes.len() as u32).to_be_bytes());
            out.extend_from_slice(&bytes);
        }
        out
    }
}

fn fixed_width_be(v: &BigUint, width: usize) -> Vec<u8> {
    let bytes = v.to_bytes_be();
    let mut out = vec![0u8; width.saturating_sub(bytes.len())];
    out.extend_from_slice(&bytes);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    #[test]
    fn presets_are_consistent() {
        for preset in [GroupPreset::Toy, GroupPreset::Sim64, GroupPreset::Modp2048] {
            let g = GroupParams::preset(preset);
            assert!(g.pow(&g.generator(), &g.scalar_from_biguint(&BigUint::zero())) == g.identity());
            assert_eq!(g.generator().to_biguint().modpow(&g.q(), &g.p()), BigUint::one());
            assert_eq!(GroupPreset::parse(preset.name()), Some(preset));
        }
        assert_eq!(GroupParams::preset(GroupPreset::Modp2048).element_bytes(), 256);
        assert_eq!(GroupParams::preset(GroupPreset::Sim64).p().bits(), 62);
    }

    #[test]
    fn rejects_bad_generators() {
        let p = BigUint::from(23u32);
        let q = BigUint::from(11u32);
        assert!(GroupParams::new(p.clone(), q.clone(), BigUint::one()).is_err());
        // 5 has order 22 mod 23
        assert!(GroupParams::new(p.clone(), q.clone(), BigUint::from(5u32)).is_err());
        assert!(GroupParams::new(p, BigUint::from(7u32), BigUint::from(2u32)).is_err());
    }

    #[test]
    fn fast_path_matches_modpow() {
        let g = GroupParams::preset(GroupPreset::Sim64);
        let mut rng = stream_rng(1, 0);
        let base = g.pow_g(&g.random_scalar(&mut rng));
        let table = g.fixed_base(&base);
        for _ in 0..500 {
            let e = g.random_scalar(&mut rng);
            let oracle = base.to_biguint().modpow(&e.to_biguint(), &g.p());
            assert_eq!(g.pow(&base, &e).to_biguint(), oracle);
            assert_eq!(g.multi_pow_fixed(&[(&table, &e)]).to_biguint(), oracle);
            let f = g.random_scalar(&mut rng);
            let both = g.multi_pow_fixed(&[(&table, &e), (&g.fixed_base(&g.generator()), &f)]);
            assert_eq!(both, g.mul(&g.pow(&base, &e), &g.pow_g(&f)));
        }
    }

    #[test]
    fn toy_powers_by_hand() {
        let g = GroupParams::preset(GroupPreset::Toy);
        let powers: Vec<u64> = (0..11).map(|e| g.pow_g(&g.scalar(e)).to_biguint().to_u64().unwrap()).collect();
        assert_eq!(powers, vec![1, 2, 4, 8, 16, 9, 18, 13, 3, 6, 12]);
        let x = g.pow_g(&g.scalar(7));
        assert_eq!(g.mul(&x, &g.inv(&x)), g.identity());
        assert!(g.is_member(&x));
        assert!(!g.is_member(&g.element_from_biguint(&BigUint::from(5u32)).unwrap()));
    }

    #[test]
    fn scalar_arithmetic() {
        let g = GroupParams::preset(GroupPreset::Toy);
        let (a, b) = (g.scalar(7), g.scalar(9));
        assert_eq!(g.scalar_add(&a, &b), g.scalar(5));
        assert_eq!(g.scalar_sub(&a, &b), g.scalar(9));
        assert_eq!(g.scalar_mul(&a, &b), g.scalar(8));
        assert_eq!(g.scalar_mul(&a, &g.scalar_inv(&a).unwrap()), g.scalar(1));
        assert!(g.scalar_inv(&g.scalar(0)).is_none());
    }

    #[test]
    fn hex_round_trip_and_widths() {
        let g = GroupParams::preset(GroupPreset::Sim64);
        let mut rng = stream_rng(2, 0);
        let e = g.random_scalar(&mut rng);
        let x = g.pow_g(&e);
        assert_eq!(g.element_to_hex(&x).len(), 16);
        assert_eq!(g.element_from_hex(&g.element_to_hex(&x)).unwrap(), x);
        assert_eq!(g.scalar_from_hex(&g.scalar_to_hex(&e)).unwrap(), e);
        assert!(g.element_from_hex(&"0".repeat(16)).is_err());
        assert!(g.scalar_from_hex(&hexfmt::encode(&g.q().to_bytes_be())).is_err());
    }

    #[test]
    fn big_group_exponent_laws() {
        let g = GroupParams::preset(GroupPreset::Modp2048);
        let mut rng = stream_rng(3, 0);
        let (a, b) = (g.random_scalar(&mut rng), g.random_scalar(&mut rng));
        let lhs = g.pow_g(&g.scalar_add(&a, &b));
        assert_eq!(lhs, g.mul(&g.pow_g(&a), &g.pow_g(&b)));
        let h = g.pow_g(&a);
        assert_eq!(g.pow(&h, &b), g.pow(&g.pow_g(&b), &a));
    }
}
