use std::sync::Arc;

use rand::RngCore;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::PakeError;
use crate::crypto::{keygen, CommitKey, GroupParams, GroupPreset, Mode, Trapdoor};
use crate::gf2::{PasswordCode, SyndromeFamily};
use crate::rng::{stream_rng, streams};

/// The numeric public parameters. [`ProtocolParams::setup`] turns them into
/// the full public state (password code, syndrome family and CRS).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParamSet {
    /// Session-key length in bits.
    pub lambda: usize,
    /// Number of qubits.
    pub k: usize,
    /// Test fraction per round.
    pub alpha: f64,
    /// Error threshold; each test round accepts error rate up to `tau / 2`.
    pub tau: f64,
    /// Password-code distance rate.
    pub gamma: f64,
    /// Syndrome-code bias rate.
    pub beta: f64,
    pub dictionary_size: usize,
    pub group: GroupPreset,
    /// Seed of the trusted setup.
    pub setup_seed: u64,
}

impl Default for ParamSet {
    fn default() -> Self {
        Self {
            lambda: 16,
            k: 256,
            alpha: 0.25,
            tau: 0.1,
            gamma: 0.4,
            beta: 0.5,
            dictionary_size: 16,
            group: GroupPreset::Modp2048,
            setup_seed: 0,
        }
    }
}

impl ParamSet {
    /// `alpha * k`, which must be a whole number.
    pub fn test_size(&self) -> usize {
        (self.alpha * self.k as f64).round() as usize
    }

    /// `|T-bar| = k - 2 alpha k`.
    pub fn n(&self) -> usize {
        self.k.saturating_sub(2 * self.test_size())
    }

    /// Block length `ceil(n / 2)`.
    pub fn ell(&self) -> usize {
        self.n().div_ceil(2)
    }

    pub fn validate(&self) -> Result<(), PakeError> {
        let bad = |msg: String| Err(PakeError::Params(msg));
        if !(self.alpha > 0.0 && self.alpha < 0.5) {
            return bad(format!("alpha = {} must lie in (0, 1/2)", self.alpha));
        }
        let ak = self.alpha * self.k as f64;
        if (ak - ak.round()).abs() > 1e-9 {
            return bad(format!("alpha * k = {ak} must be an integer"));
        }
        if self.test_size() == 0 {
            return bad("alpha * k must be at least 1".into());
        }
        if self.n() == 0 {
            return bad("n = k - 2 alpha k must be at least 1".into());
        }
        if !(self.tau > 0.0 && self.tau < 0.5) {
            return bad(format!("tau = {} must lie in (0, 1/2)", self.tau));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad(format!("gamma = {} must lie in [0, 1]", self.gamma));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return bad(format!("beta = {} must be positive", self.beta));
        }
        if self.lambda == 0 || self.lambda > self.ell() {
            return bad(format!("lambda = {} must lie in 1..=ell = {}", self.lambda, self.ell()));
        }
        if self.dictionary_size == 0 || self.dictionary_size > u32::MAX as usize {
            return bad("dictionary size must be positive".into());
        }
        Ok(())
    }
}

/// The commitment keys `(ck, ck')` of the common reference string.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Crs {
    pub ck: CommitKey,
    pub ck_prime: CommitKey,
}

/// Trapdoors of the CRS keys. Honest parties never see these.
#[derive(Debug, Clone)]
pub struct CrsTrapdoors {
    pub tk: Trapdoor,
    pub xk: Trapdoor,
}

#[derive(Debug, Clone)]
pub struct ProtocolParams {
    pub set: ParamSet,
    pub group: Arc<GroupParams>,
    pub code: PasswordCode,
    pub family: SyndromeFamily,
    pub crs: Crs,
    fingerprint: String,
}

impl ProtocolParams {
    pub fn setup(set: ParamSet) -> Result<Self, PakeError> {
        Self::setup_with_trapdoors(set).map(|(p, _)| p)
    }

    /// Derives every public object from `set.setup_seed`: the password code,
    /// the syndrome family, a hiding `ck` and a binding `ck'`.
    pub fn setup_with_trapdoors(set: ParamSet) -> Result<(Self, CrsTrapdoors), PakeError> {
        set.validate()?;
        let mut rng = stream_rng(set.setup_seed, streams::SETUP);
        let code_seed = rng.next_u64();
        let family_seed = rng.next_u64();
        let code = PasswordCode::construct_random(set.dictionary_size, set.n(), set.gamma, code_seed)
            .map_err(|e| PakeError::Params(e.to_string()))?;
        let family =
            SyndromeFamily::for_block(set.ell(), set.tau, set.beta, family_seed).map_err(|e| PakeError::Params(e.to_string()))?;
        let group = Arc::new(GroupParams::preset(set.group));
        let (ck, tk) = keygen(group.clone(), Mode::Hiding, &mut rng);
        let (ck_prime, xk) = keygen(group.clone(), Mode::Binding, &mut rng);
        let mut params = Self { set, group, code, family, crs: Crs { ck, ck_prime }, fingerprint: String::new() };
        params.fingerprint = params.compute_fingerprint();
        Ok((params, CrsTrapdoors { tk, xk }))
    }

    fn compute_fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(serde_json::to_vec(&self.set).expect("params serialize"));
        hasher.update(self.crs.ck.fingerprint());
        hasher.update(self.crs.ck_prime.fingerprint());
        crate::hexfmt::encode(&hasher.finalize()[..16])
    }

    /// Hex digest binding the numeric parameters and the CRS.
    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn k(&self) -> usize {
        self.set.k
    }

    pub fn n(&self) -> usize {
        self.set.n()
    }

    pub fn ell(&self) -> usize {
        self.set.ell()
    }

    pub fn test_size(&self) -> usize {
        self.set.test_size()
    }

    pub fn check_password(&self, pw: u32) -> Result<(), PakeError> {
        if (pw as usize) < self.set.dictionary_size {
            Ok(())
        } else {
            Err(PakeError::Password(pw))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ParamSet {
        ParamSet { k: 32, lambda: 4, group: GroupPreset::Toy, ..ParamSet::default() }
    }

    #[test]
    fn derived_sizes() {
        let p = small();
        assert_eq!((p.test_size(), p.n(), p.ell()), (8, 16, 8));
        let p = ParamSet { k: 20, alpha: 0.1, ..small() };
        assert_eq!((p.test_size(), p.n(), p.ell()), (2, 16, 8));
        let p = ParamSet { k: 36, alpha: 0.25, ..small() };
        assert_eq!((p.n(), p.ell()), (18, 9));
    }

    #[test]
    fn invariants_are_enforced() {
        assert!(small().validate().is_ok());
        let err = ParamSet { k: 30, ..small() }.validate().unwrap_err();
        assert!(err.to_string().contains("alpha * k"), "{err}");
        assert!(ParamSet { alpha: 0.5, ..small() }.validate().is_err());
        assert!(ParamSet { tau: 0.0, ..small() }.validate().is_err());
        assert!(ParamSet { lambda: 9, ..small() }.validate().is_err());
        assert!(ParamSet { dictionary_size: 0, ..small() }.validate().is_err());
    }

    #[test]
    fn setup_is_deterministic() {
        let a = ProtocolParams::setup(small()).unwrap();
        let b = ProtocolParams::setup(small()).unwrap();
        assert_eq!(a.fingerprint(), b.fingerprint());
        assert_eq!(a.code, b.code);
        assert_eq!(a.crs, b.crs);
        assert_eq!(a.code.codeword_len(), a.n());
        assert_eq!(a.family.block_len, a.ell());
        let c = ProtocolParams::setup(ParamSet { setup_seed: 1, ..small() }).unwrap();
        assert_ne!(a.fingerprint(), c.fingerprint());
        assert!(a.check_password(15).is_ok());
        assert!(a.check_password(16).is_err());
    }
}
