//! Closed-form security bounds and parameter planning.
//!
//! All quantities are in bits. The smoothing parameter `epsilon` enters both
//! the entropy estimate, through `h(tau + epsilon)`, and the additive `2 eps`
//! term of privacy amplification. Every error bound is reported raw and
//! clamped to [0, 1]; raw values above 1 are vacuous but show how far a
//! parameter set is from giving a guarantee.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::GroupPreset;
use crate::pake::ParamSet;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BoundsError {
    #[error("out of range: {0}")]
    Range(String),
    #[error("no n <= {n_max} reaches eps_sec <= {target}; best was {best:e} at n = {best_n}")]
    Infeasible { target: f64, n_max: u64, best: f64, best_n: u64 },
}

/// `h(mu) = -mu log2 mu - (1 - mu) log2 (1 - mu)`, with `0 log 0 = 0`.
pub fn binary_entropy(mu: f64) -> Result<f64, BoundsError> {
    if !(0.0..=1.0).contains(&mu) {
        return Err(BoundsError::Range(format!("binary entropy of {mu}")));
    }
    let term = |p: f64| if p == 0.0 { 0.0 } else { -p * p.log2() };
    Ok(term(mu) + term(1.0 - mu))
}

/// Largest squared overlap between a state of one BB84 basis and a state of
/// the other, from the 2x2 amplitudes.
pub fn bb84_overlap() -> f64 {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let computational = [[1.0, 0.0], [0.0, 1.0]];
    let hadamard = [[s, s], [s, -s]];
    let mut best: f64 = 0.0;
    for a in &computational {
        for b in &hadamard {
            let amp: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            best = best.max(amp * amp);
        }
    }
    best
}

/// `g(eps) = (log2(1/cbar) - h(tau + eps) - 1/2) n`.
pub fn g_eps(n: f64, tau: f64, eps: f64, cbar: f64) -> Result<f64, BoundsError> {
    if tau + eps >= 0.5 {
        return Err(BoundsError::Range(format!("tau + eps = {} must stay below 1/2", tau + eps)));
    }
    Ok(((1.0 / cbar).log2() - binary_entropy(tau + eps)? - 0.5) * n)
}

/// Privacy amplification: `2 eps + 2^(-(hmin - ell_out) / 2)`.
pub fn pa_bound(hmin: f64, ell_out: f64, eps: f64) -> f64 {
    2.0 * eps + (-(hmin - ell_out) / 2.0).exp2()
}

/// Syndrome leakage through a `delta`-biased family: `delta 2^(-(hmin - block_n) / 2)`.
pub fn ecc_bound(delta: f64, hmin: f64, block_n: f64) -> f64 {
    delta * (-(hmin - block_n) / 2.0).exp2()
}

/// Pass-through of a decoding-failure probability, which bounds the chance
/// that both parties output different keys.
pub fn eps_cor(code_failure_prob: f64) -> Result<f64, BoundsError> {
    if !(0.0..=1.0).contains(&code_failure_prob) {
        return Err(BoundsError::Range(format!("probability {code_failure_prob}")));
    }
    Ok(code_failure_prob)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundsInput {
    pub n: f64,
    pub k: f64,
    pub alpha: f64,
    pub tau: f64,
    /// Smoothing parameter.
    pub epsilon: f64,
    pub lambda: f64,
    pub gamma: f64,
    pub beta: f64,
    /// Bias of the syndrome family.
    pub delta: f64,
    /// Overlap constant of the two measurement bases.
    pub cbar: f64,
}

impl BoundsInput {
    /// Defaults: `cbar = 1/2`, `eps = n^(-1/3)`, `alpha = 1/4`, `gamma = 0.4`,
    /// `beta = 0.5` and `delta = 2^(-beta n / 4)`.
    pub fn new(n: f64, tau: f64, lambda: f64) -> Self {
        let alpha = 0.25;
        let beta = 0.5;
        Self {
            n,
            k: n / (1.0 - 2.0 * alpha),
            alpha,
            tau,
            epsilon: if n > 0.0 { n.powf(-1.0 / 3.0) } else { 0.0 },
            lambda,
            gamma: 0.4,
            beta,
            delta: (-beta * n / 4.0).exp2(),
            cbar: 0.5,
        }
    }

    pub fn from_params(set: &ParamSet) -> Self {
        let n = set.n() as f64;
        Self {
            k: set.k as f64,
            alpha: set.alpha,
            gamma: set.gamma,
            beta: set.beta,
            delta: (-set.beta * n / 4.0).exp2(),
            ..Self::new(n, set.tau, set.lambda as f64)
        }
    }

    pub fn validate(&self) -> Result<(), BoundsError> {
        let bad = |m: String| Err(BoundsError::Range(m));
        if !(self.cbar > 0.0 && self.cbar < 1.0) {
            return bad(format!("cbar = {} must lie in (0, 1)", self.cbar));
        }
        if !(self.n >= 0.0 && self.lambda >= 0.0) {
            return bad("n and lambda must be nonnegative".into());
        }
        if !(self.tau >= 0.0 && self.epsilon >= 0.0 && self.tau + self.epsilon < 0.5) {
            return bad(format!("need tau, eps >= 0 and tau + eps < 1/2, got {} + {}", self.tau, self.epsilon));
        }
        if !(0.0..=1.0).contains(&self.gamma) || self.beta < 0.0 || !(0.0..=1.0).contains(&self.delta) {
            return bad("gamma in [0, 1], beta >= 0 and delta in [0, 1] required".into());
        }
        Ok(())
    }

    fn h(&self) -> f64 {
        binary_entropy(self.tau + self.epsilon).expect("validated")
    }
}

/// `(eps_ec, eps_pa, eps_sec)` for an honest pair:
/// `eps_ec = 2^(-(g + beta n / 2) / 2)`, `eps_pa = 2 eps + 2^(-(g - lambda) / 2)`.
pub fn eps_sec_components(input: &BoundsInput) -> Result<(f64, f64, f64), BoundsError> {
    input.validate()?;
    let g = g_eps(input.n, input.tau, input.epsilon, input.cbar)?;
    let ec = (-(g + input.beta * input.n / 2.0) / 2.0).exp2();
    let pa = 2.0 * input.epsilon + (-(g - input.lambda) / 2.0).exp2();
    Ok((ec, pa, ec + pa))
}

/// Smooth min-entropy of the honest client's raw key given the adversary
/// and the syndrome: `n (log2(1/cbar) - h(tau + eps)) - n/2`.
pub fn min_entropy_honest(input: &BoundsInput) -> Result<f64, BoundsError> {
    input.validate()?;
    Ok(input.n * ((1.0 / input.cbar).log2() - input.h()) - input.n / 2.0)
}

/// Smooth max-entropy bound `h(tau + eps) n`; valid up to `tau + eps = 1/2`.
pub fn max_entropy_bound(input: &BoundsInput) -> Result<f64, BoundsError> {
    let mu = input.tau + input.epsilon;
    if !(input.tau >= 0.0 && input.epsilon >= 0.0 && mu <= 0.5) {
        return Err(BoundsError::Range(format!("tau + eps = {mu} must lie in [0, 1/2]")));
    }
    Ok(binary_entropy(mu)? * input.n)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorruptedClient {
    pub hmin: f64,
    pub eps_pa: f64,
    pub eps_ec: f64,
    pub mu: f64,
}

/// Bounds for a dishonest client who does not know the password:
/// `hmin = (gamma/2 - eps - 2 h(tau + eps)) n`,
/// `eps_ec = 2^(-(beta/2 + gamma/2 - eps - 2 h(tau + eps) - 1/2) n / 2)`,
/// `eps_pa = pa_bound(hmin, lambda, eps)` and `mu = eps_pa + eps_ec`.
pub fn corrupted_client_mu(input: &BoundsInput) -> Result<CorruptedClient, BoundsError> {
    input.validate()?;
    let (g, e, h, n) = (input.gamma, input.epsilon, input.h(), input.n);
    let hmin = (g / 2.0 - e - 2.0 * h) * n;
    let eps_ec = (-(input.beta / 2.0 + g / 2.0 - e - 2.0 * h - 0.5) * n / 2.0).exp2();
    let eps_pa = pa_bound(hmin, input.lambda, e);
    Ok(CorruptedClient { hmin, eps_pa, eps_ec, mu: eps_pa + eps_ec })
}

/// An error bound, raw and clamped to [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bound {
    pub raw: f64,
    pub clamped: f64,
}

impl Bound {
    pub fn new(raw: f64) -> Self {
        Self { raw, clamped: raw.clamp(0.0, 1.0) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    pub input: BoundsInput,
    /// `h(tau + eps)`.
    pub h_tau: f64,
    pub g_eps: f64,
    pub eps_cor: Bound,
    pub eps_ec: Bound,
    pub eps_pa: Bound,
    pub eps_sec: Bound,
    pub hmin_honest: f64,
    pub hmin_corrupted_client: f64,
    pub mu_corrupted: Bound,
}

/// All bounds for one input; `code_failure_prob` feeds `eps_cor`.
pub fn report(input: &BoundsInput, code_failure_prob: f64) -> Result<BoundsReport, BoundsError> {
    let (ec, pa, sec) = eps_sec_components(input)?;
    let corrupted = corrupted_client_mu(input)?;
    Ok(BoundsReport {
        input: *input,
        h_tau: input.h(),
        g_eps: g_eps(input.n, input.tau, input.epsilon, input.cbar)?,
        eps_cor: Bound::new(eps_cor(code_failure_prob)?),
        eps_ec: Bound::new(ec),
        eps_pa: Bound::new(pa),
        eps_sec: Bound::new(sec),
        hmin_honest: min_entropy_honest(input)?,
        hmin_corrupted_client: corrupted.hmin,
        mu_corrupted: Bound::new(corrupted.mu),
    })
}

pub const PLAN_STEP: u64 = 64;
pub const PLAN_MAX_N: u64 = 1 << 24;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub n: u64,
    pub params: ParamSet,
    pub report: BoundsReport,
}

/// Smallest `n` (a multiple of 64) whose honest-pair `eps_sec` meets
/// `target`, with `cbar = 1/2`, `eps = n^(-1/3)` and default rates.
///
/// The scan is linear: while `g(eps)` is still negative, `eps_sec` can grow
/// with `n`, so bisection could skip the first feasible `n`.
pub fn plan_parameters(target: f64, lambda: usize, tau: f64, dictionary_size: usize) -> Result<Plan, BoundsError> {
    if !(target > 0.0 && target < 1.0) {
        return Err(BoundsError::Range(format!("target {target} must lie in (0, 1)")));
    }
    let mut best = (f64::INFINITY, 0);
    let mut n = PLAN_STEP;
    while n <= PLAN_MAX_N {
        let input = BoundsInput::new(n as f64, tau, lambda as f64);
        if let Ok((_, _, sec)) = eps_sec_components(&input) {
            if sec < best.0 {
                best = (sec, n);
            }
            if sec <= target && (lambda as u64) <= n / 2 {
                let params = ParamSet {
                    lambda,
                    k: 2 * n as usize,
                    alpha: input.alpha,
                    tau,
                    gamma: input.gamma,
                    beta: input.beta,
                    dictionary_size,
                    group: GroupPreset::Modp2048,
                    setup_seed: 0,
                };
                params.validate().map_err(|e| BoundsError::Range(e.to_string()))?;
                return Ok(Plan { n, params, report: report(&input, 0.0)? });
            }
        }
        n += PLAN_STEP;
    }
    Err(BoundsError::Infeasible { target, n_max: PLAN_MAX_N, best: best.0, best_n: best.1 })
}
