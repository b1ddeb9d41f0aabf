//! Dual-mode bit commitment `C = (g^r h^s, u^r v^s g^m)`.
//!
//! With `h = g^a`, `u = g^b`:
//! * binding keys set `v = h^b`, so `c2 / c1^b = g^m` reveals `m`;
//! * hiding keys set `v = g^d` with `d != ab`, so every commitment opens to
//!   both bits and the trapdoor `(a, b, d)` finds the second opening.

use std::sync::Arc;

use rand::RngCore;
use sha2::{Digest, Sha256};

use super::group::{Element, FixedBase, GroupParams, Scalar};
use super::CryptoError;

pub const COMMIT_TAG: &[u8] = b"qpake/commit/v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Hiding,
    Binding,
}

#[derive(Debug)]
struct Tables {
    g: FixedBase,
    h: FixedBase,
    u: FixedBase,
    v: FixedBase,
}

#[derive(Debug, Clone)]
pub struct CommitKey {
    group: Arc<GroupParams>,
    mode: Mode,
    g: Element,
    h: Element,
    u: Element,
    v: Element,
    tables: Arc<Tables>,
}

impl PartialEq for CommitKey {
    fn eq(&self, other: &Self) -> bool {
        self.group == other.group && self.elements() == other.elements()
    }
}

impl Eq for CommitKey {}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Trapdoor {
    Equivocation { alpha: Scalar, beta: Scalar, delta: Scalar },
    Extraction { beta: Scalar },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Commitment {
    pub c1: Element,
    pub c2: Element,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Opening {
    pub m: bool,
    pub r: Scalar,
    pub s: Scalar,
}

impl CommitKey {
    /// A key from raw elements. The mode is recorded as claimed; only the
    /// holder of the exponents can tell the two apart.
    pub fn from_elements(group: Arc<GroupParams>, mode: Mode, h: Element, u: Element, v: Element) -> Self {
        let g = group.generator();
        let tables = Arc::new(Tables {
            g: group.fixed_base(&g),
            h: group.fixed_base(&h),
            u: group.fixed_base(&u),
            v: group.fixed_base(&v),
        });
        Self { group, mode, g, h, u, v, tables }
    }

    pub fn group(&self) -> &Arc<GroupParams> {
        &self.group
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn elements(&self) -> [&Element; 4] {
        [&self.g, &self.h, &self.u, &self.v]
    }

    /// `(g, h, u, v)` as fixed-width hex; the same length in both modes.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.elements().iter().flat_map(|e| self.group.element_to_bytes(e)).collect()
    }

    pub fn fingerprint(&self) -> [u8; 32] {
        let mut hasher = Sha256::new();
        hasher.update(COMMIT_TAG);
        hasher.update(self.group.describe());
        hasher.update(self.to_bytes());
        hasher.finalize().into()
    }
}

/// Draws the exponents and builds a key of the requested mode.
/// `a` and `b` are uniform in `[1, q)`; a hiding `d` is redrawn until `d != ab`.
pub fn keygen<R: RngCore + ?Sized>(group: Arc<GroupParams>, mode: Mode, rng: &mut R) -> (CommitKey, Trapdoor) {
    let alpha = group.random_nonzero_scalar(rng);
    let beta = group.random_nonzero_scalar(rng);
    let delta = match mode {
        Mode::Binding => None,
        Mode::Hiding => {
            let ab = group.scalar_mul(&alpha, &beta);
            loop {
                let d = group.random_scalar(rng);
                if d != ab {
                    break Some(d);
                }
            }
        }
    };
    keygen_with(group, mode, &alpha, &beta, delta.as_ref()).expect("sampled exponents are valid")
}

/// Deterministic key generation from chosen exponents.
pub fn keygen_with(
    group: Arc<GroupParams>,
    mode: Mode,
    alpha: &Scalar,
    beta: &Scalar,
    delta: Option<&Scalar>,
) -> Result<(CommitKey, Trapdoor), CryptoError> {
    if alpha.is_zero() || beta.is_zero() {
        return Err(CryptoError::Mode("key exponents must be nonzero".into()));
    }
    let h = group.pow_g(alpha);
    let u = group.pow_g(beta);
    let (v, trapdoor) = match (mode, delta) {
        (Mode::Binding, None) => (group.pow(&h, beta), Trapdoor::Extraction { beta: beta.clone() }),
        (Mode::Hiding, Some(d)) => {
            if *d == group.scalar_mul(alpha, beta) {
                return Err(CryptoError::Mode("hiding key needs delta != alpha * beta".into()));
            }
            (
                group.pow_g(d),
                Trapdoor::Equivocation { alpha: alpha.clone(), beta: beta.clone(), delta: d.clone() },
            )
        }
        (Mode::Binding, Some(_)) => return Err(CryptoError::Mode("binding keys take no delta".into())),
        (Mode::Hiding, None) => return Err(CryptoError::Mode("hiding keys need delta".into())),
    };
    Ok((CommitKey::from_elements(group, mode, h, u, v), trapdoor))
}

pub fn commit<R: RngCore + ?Sized>(ck: &CommitKey, m: bool, rng: &mut R) -> (Commitment, Opening) {
    let r = ck.group.random_scalar(rng);
    let s = ck.group.random_scalar(rng);
    let c = commit_with(ck, m, &r, &s);
    (c, Opening { m, r, s })
}

pub fn commit_with(ck: &CommitKey, m: bool, r: &Scalar, s: &Scalar) -> Commitment {
    let g = &ck.group;
    let t = &ck.tables;
    let c1 = g.multi_pow_fixed(&[(&t.g, r), (&t.h, s)]);
    let mut c2 = g.multi_pow_fixed(&[(&t.u, r), (&t.v, s)]);
    if m {
        c2 = g.mul(&c2, &ck.g);
    }
    Commitment { c1, c2 }
}

pub fn verify_open(ck: &CommitKey, c: &Commitment, o: &Opening) -> bool {
    commit_with(ck, o.m, &o.r, &o.s) == *c
}

/// Second opening of `c` to `m2`, from an opening `o1` of the same commitment.
pub fn equivocate(ck: &CommitKey, tk: &Trapdoor, c: &Commitment, o1: &Opening, m2: bool) -> Result<Opening, CryptoError> {
    let Trapdoor::Equivocation { alpha, beta, delta } = tk else {
        return Err(CryptoError::Mode("equivocation needs a hiding trapdoor".into()));
    };
    if !verify_open(ck, c, o1) {
        return Err(CryptoError::Mode("opening does not match commitment".into()));
    }
    if o1.m == m2 {
        return Ok(o1.clone());
    }
    let g = &ck.group;
    // r2 + a s2 = A and b r2 + d s2 = B, solved by elimination.
    let a_sum = g.scalar_add(&o1.r, &g.scalar_mul(alpha, &o1.s));
    let shift = g.scalar_sub(&g.scalar(u64::from(o1.m)), &g.scalar(u64::from(m2)));
    let b_sum = g.scalar_add(&g.scalar_add(&g.scalar_mul(beta, &o1.r), &g.scalar_mul(delta, &o1.s)), &shift);
    let det = g.scalar_sub(delta, &g.scalar_mul(alpha, beta));
    let det_inv = g.scalar_inv(&det).ok_or_else(|| CryptoError::Mode("degenerate hiding trapdoor".into()))?;
    let s2 = g.scalar_mul(&g.scalar_sub(&b_sum, &g.scalar_mul(beta, &a_sum)), &det_inv);
    let r2 = g.scalar_sub(&a_sum, &g.scalar_mul(alpha, &s2));
    Ok(Opening { m: m2, r: r2, s: s2 })
}

/// The committed bit, or `Malformed` if `c2 g^-m` equals `c1^b` for neither bit.
pub fn extract(ck: &CommitKey, xk: &Trapdoor, c: &Commitment) -> Result<bool, CryptoError> {
    let Trapdoor::Extraction { beta } = xk else {
        return Err(CryptoError::Mode("extraction needs a binding trapdoor".into()));
    };
    let g = &ck.group;
    let target = g.pow(&c.c1, beta);
    if c.c2 == target {
        return Ok(false);
    }
    if g.mul(&target, &ck.g) == c.c2 {
        return Ok(true);
    }
    Err(CryptoError::Malformed)
}

impl Commitment {
    /// `c1 || c2` in fixed-width hex.
    pub fn to_hex(&self, group: &GroupParams) -> String {
        group.element_to_hex(&self.c1) + &group.element_to_hex(&self.c2)
    }

    pub fn from_hex(group: &GroupParams, s: &str) -> Result<Self, CryptoError> {
        let w = 2 * group.element_bytes();
        if s.len() != 2 * w || !s.is_char_boundary(w) {
            return Err(CryptoError::Encoding("commitment has the wrong width".into()));
        }
        Ok(Self { c1: group.element_from_hex(&s[..w])?, c2: group.element_from_hex(&s[w..])? })
    }
}

impl Opening {
    /// `m || r || s`, the bit as one byte.
    pub fn to_hex(&self, group: &GroupParams) -> String {
        format!("{:02x}{}{}", u8::from(self.m), group.scalar_to_hex(&self.r), group.scalar_to_hex(&self.s))
    }

    pub fn from_hex(group: &GroupParams, s: &str) -> Result<Self, CryptoError> {
        let w = 2 * group.scalar_bytes();
        if s.len() != 2 + 2 * w || !s.is_ascii() {
            return Err(CryptoError::Encoding("opening has the wrong width".into()));
        }
        let m = match &s[..2] {
            "00" => false,
            "01" => true,
            _ => return Err(CryptoError::Encoding("opening bit must be 00 or 01".into())),
        };
        Ok(Self { m, r: group.scalar_from_hex(&s[2..2 + w])?, s: group.scalar_from_hex(&s[2 + w..])? })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::group::GroupPreset;
    use crate::rng::stream_rng;
    use num_traits::ToPrimitive;
    use std::collections::HashMap;

    fn toy() -> Arc<GroupParams> {
        Arc::new(GroupParams::preset(GroupPreset::Toy))
    }

    /// Schoolbook `b^e mod 23`.
    fn pow23(b: u64, e: u64) -> u64 {
        (0..e).fold(1, |acc, _| acc * b % 23)
    }

    fn value(e: &Element) -> u64 {
        e.to_biguint().to_u64().unwrap()
    }

    fn all_scalars(g: &GroupParams) -> Vec<Scalar> {
        (0..11).map(|v| g.scalar(v)).collect()
    }

    #[test]
    fn worked_binding_key() {
        let g = toy();
        let (ck, xk) = keygen_with(g.clone(), Mode::Binding, &g.scalar(3), &g.scalar(5), None).unwrap();
        let elems: Vec<u64> = ck.elements().iter().map(|e| value(e)).collect();
        assert_eq!(elems, vec![2, pow23(2, 3), pow23(2, 5), pow23(pow23(2, 3), 5)]);
        assert_eq!(elems, vec![2, 8, 9, 16]);
        let c = commit_with(&ck, true, &g.scalar(2), &g.scalar(3));
        let c1 = pow23(2, 2) * pow23(8, 3) % 23;
        let c2 = pow23(9, 2) * pow23(16, 3) * 2 % 23;
        assert_eq!((value(&c.c1), value(&c.c2)), (c1, c2));
        assert_eq!((c1, c2), (1, 2));
        assert!(extract(&ck, &xk, &c).unwrap());
    }

    #[test]
    fn hiding_rejects_degenerate_delta() {
        let g = toy();
        let (a, b) = (g.scalar(3), g.scalar(5));
        assert!(keygen_with(g.clone(), Mode::Hiding, &a, &b, Some(&g.scalar(4))).is_err());
        assert!(keygen_with(g.clone(), Mode::Hiding, &a, &b, Some(&g.scalar(6))).is_ok());
    }

    #[test]
    fn emitted_keys_respect_mode_exhaustively() {
        let g = toy();
        let scalars = all_scalars(&g);
        for a in &scalars[1..] {
            for b in &scalars[1..] {
                let (ck, _) = keygen_with(g.clone(), Mode::Binding, a, b, None).unwrap();
                assert_eq!(*ck.elements()[3], g.pow(ck.elements()[1], b));
                for d in &scalars {
                    match keygen_with(g.clone(), Mode::Hiding, a, b, Some(d)) {
                        Ok((ck, _)) => {
                            assert_ne!(*d, g.scalar_mul(a, b));
                            assert_eq!(*ck.elements()[3], g.pow_g(d));
                        }
                        Err(_) => assert_eq!(*d, g.scalar_mul(a, b)),
                    }
                }
            }
        }
    }

    #[test]
    fn random_keys_from_rng() {
        let g = toy();
        let mut rng = stream_rng(1, 0);
        for _ in 0..200 {
            let (ck, tk) = keygen(g.clone(), Mode::Hiding, &mut rng);
            let Trapdoor::Equivocation { alpha, beta, delta } = tk else { panic!() };
            assert_ne!(delta, g.scalar_mul(&alpha, &beta));
            assert_eq!(ck.mode(), Mode::Hiding);
        }
    }

    #[test]
    fn verify_matches_recomputation_exhaustively() {
        let g = toy();
        let mut rng = stream_rng(2, 0);
        for mode in [Mode::Binding, Mode::Hiding] {
            let (ck, _) = keygen(g.clone(), mode, &mut rng);
            let [_, h, u, v] = ck.elements().map(value);
            for r in 0..11u64 {
                for s in 0..11u64 {
                    for m in [false, true] {
                        let o = Opening { m, r: g.scalar(r), s: g.scalar(s) };
                        let c = commit_with(&ck, m, &o.r, &o.s);
                        let c1 = pow23(2, r) * pow23(h, s) % 23;
                        let c2 = pow23(u, r) * pow23(v, s) % 23 * pow23(2, u64::from(m)) % 23;
                        assert_eq!((value(&c.c1), value(&c.c2)), (c1, c2));
                        assert!(verify_open(&ck, &c, &o));
                        assert!(!verify_open(&ck, &c, &Opening { m: !m, ..o.clone() }));
                    }
                }
            }
        }
    }

    #[test]
    fn binding_is_injective_and_hiding_is_perfect() {
        let g = toy();
        let mut rng = stream_rng(3, 0);
        let scalars = all_scalars(&g);
        let (bind, xk) = keygen(g.clone(), Mode::Binding, &mut rng);
        let (hide, tk) = keygen(g.clone(), Mode::Hiding, &mut rng);
        let mut seen_bind: HashMap<Commitment, bool> = HashMap::new();
        let mut hide_counts: [HashMap<Commitment, usize>; 2] = Default::default();
        for r in &scalars {
            for s in &scalars {
                for m in [false, true] {
                    let c = commit_with(&bind, m, r, s);
                    if let Some(prev) = seen_bind.insert(c.clone(), m) {
                        assert_eq!(prev, m, "binding violated");
                    }
                    assert_eq!(extract(&bind, &xk, &c).unwrap(), m);
                    let o = Opening { m, r: r.clone(), s: s.clone() };
                    let c = commit_with(&hide, m, r, s);
                    *hide_counts[usize::from(m)].entry(c.clone()).or_default() += 1;
                    let o2 = equivocate(&hide, &tk, &c, &o, !m).unwrap();
                    assert!(verify_open(&hide, &c, &o2));
                }
            }
        }
        assert_eq!(hide_counts[0], hide_counts[1]);
        assert!(hide_counts[0].values().all(|&n| n == 1));
    }

    #[test]
    fn mode_errors_and_identity_equivocation() {
        let g = toy();
        let mut rng = stream_rng(4, 0);
        let (bind, xk) = keygen(g.clone(), Mode::Binding, &mut rng);
        let (hide, tk) = keygen(g.clone(), Mode::Hiding, &mut rng);
        let (c, o) = commit(&hide, false, &mut rng);
        assert_eq!(equivocate(&hide, &tk, &c, &o, false).unwrap(), o);
        assert!(matches!(equivocate(&hide, &xk, &c, &o, true), Err(CryptoError::Mode(_))));
        assert!(matches!(extract(&bind, &tk, &c), Err(CryptoError::Mode(_))));
        let (c, _) = commit(&bind, true, &mut rng);
        let shifted = Commitment { c1: c.c1.clone(), c2: g.mul(&c.c2, &g.pow_g(&g.scalar(2))) };
        assert_eq!(extract(&bind, &xk, &shifted), Err(CryptoError::Malformed));
    }

    #[test]
    fn round_trip_randomized_sim64() {
        let g = Arc::new(GroupParams::preset(GroupPreset::Sim64));
        let mut rng = stream_rng(5, 0);
        let (bind, xk) = keygen(g.clone(), Mode::Binding, &mut rng);
        let (hide, tk) = keygen(g.clone(), Mode::Hiding, &mut rng);
        assert_eq!(bind.to_bytes().len(), hide.to_bytes().len());
        for i in 0..10_000u32 {
            let m = i % 2 == 0;
            let ck = if i % 3 == 0 { &hide } else { &bind };
            let (c, o) = commit(ck, m, &mut rng);
            assert!(verify_open(ck, &c, &o));
            assert_eq!(Commitment::from_hex(&g, &c.to_hex(&g)).unwrap(), c);
            assert_eq!(Opening::from_hex(&g, &o.to_hex(&g)).unwrap(), o);
            if ck.mode() == Mode::Binding {
                assert_eq!(extract(ck, &xk, &c).unwrap(), m);
            } else if i % 7 == 0 {
                assert!(verify_open(ck, &c, &equivocate(ck, &tk, &c, &o, !m).unwrap()));
            }
        }
    }
}
