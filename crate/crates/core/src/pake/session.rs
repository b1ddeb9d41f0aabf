//! Client (qubit sender) and server (receiver) state machines.
//!
//! Each call to `advance` performs one protocol step and returns the flow to
//! send, if any. The client needs two activations: one to start and one,
//! after its mask flow, to send the syndrome.

use std::fmt;
use std::sync::Arc;

use rand::seq::index::sample;
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::flow::{CommitPair, Flow, FlowTag, OpeningPair};
use super::{relative_hamming, sift_indices, PakeError, ProtocolParams};
use crate::crypto::{commit, verify_open, CommitKey};
use crate::gf2::{sample_two_universal, BitString};
use crate::qchannel::{encode_bb84, measure};
use crate::rng::{stream_rng, streams, SimRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Client,
    Server,
}

impl Role {
    pub fn peer(self) -> Role {
        match self {
            Role::Client => Role::Server,
            Role::Server => Role::Client,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AbortReason {
    CommitmentVerification,
    ErrorRate,
    OutOfOrder(FlowTag),
    Malformed(String),
    Timeout,
    Link(String),
}

impl AbortReason {
    /// The reason without its free-text detail.
    pub fn kind(&self) -> &'static str {
        match self {
            AbortReason::CommitmentVerification => "commitment_verification",
            AbortReason::ErrorRate => "error_rate",
            AbortReason::OutOfOrder(_) => "out_of_order",
            AbortReason::Malformed(_) => "malformed",
            AbortReason::Timeout => "timeout",
            AbortReason::Link(_) => "link",
        }
    }
}

impl fmt::Display for AbortReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AbortReason::CommitmentVerification => f.write_str("commitment verification"),
            AbortReason::ErrorRate => f.write_str("error rate"),
            AbortReason::OutOfOrder(tag) => write!(f, "unexpected flow {tag}"),
            AbortReason::Malformed(msg) => write!(f, "malformed payload: {msg}"),
            AbortReason::Timeout => f.write_str("timeout"),
            AbortReason::Link(msg) => write!(f, "link: {msg}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SessionKey(pub BitString);

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Pending,
    Key(SessionKey),
    Abort(AbortReason),
}

impl Outcome {
    pub fn key(&self) -> Option<&SessionKey> {
        match self {
            Outcome::Key(k) => Some(k),
            _ => None,
        }
    }

    pub fn is_abort(&self) -> bool {
        matches!(self, Outcome::Abort(_))
    }

    pub fn is_pending(&self) -> bool {
        matches!(self, Outcome::Pending)
    }
}

#[derive(Debug)]
pub enum Input {
    Activate,
    Flow(Flow),
}

/// Result of a parameter-estimation round on the matched test positions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TestCheck {
    pub matched: usize,
    pub errors: usize,
}

impl TestCheck {
    /// `errors / matched <= tau / 2`; an empty matched set passes.
    pub fn passes(&self, tau: f64) -> bool {
        2.0 * self.errors as f64 <= tau * self.matched as f64 + 1e-9
    }

    pub fn rate(&self) -> f64 {
        relative_hamming_rate(self.errors, self.matched)
    }
}

fn relative_hamming_rate(errors: usize, len: usize) -> f64 {
    if len == 0 {
        0.0
    } else {
        errors as f64 / len as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClientPhase {
    AwaitActivation,
    AwaitOne1,
    AwaitOne3,
    AwaitTwo2,
    AwaitThree1,
    ReadyFour,
    AwaitFive,
    Done,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ServerPhase {
    AwaitZero,
    AwaitOne2,
    AwaitTwo1,
    AwaitTwo3,
    AwaitThree2,
    AwaitFour,
    Done,
}

fn random_bits(rng: &mut SimRng, len: usize) -> BitString {
    BitString::random(rng, len)
}

/// `amount` positions drawn without replacement from `pool`, sorted.
fn sample_subset(rng: &mut SimRng, pool: &[usize], amount: usize) -> Vec<usize> {
    let mut picked: Vec<usize> = sample(rng, pool.len(), amount).into_iter().map(|i| pool[i]).collect();
    picked.sort_unstable();
    picked
}

fn commit_pairs(ck: &CommitKey, x: &BitString, theta: &BitString, positions: &[usize], rng: &mut SimRng) -> (Vec<CommitPair>, Vec<OpeningPair>) {
    positions
        .iter()
        .map(|&i| {
            let (cv, ov) = commit(ck, x.get(i), rng);
            let (cb, ob) = commit(ck, theta.get(i), rng);
            (CommitPair { value: cv, basis: cb }, OpeningPair { value: ov, basis: ob })
        })
        .unzip()
}

fn is_strict_subset_of(set: &[usize], pool: &[usize]) -> bool {
    set.windows(2).all(|w| w[0] < w[1]) && set.iter().all(|i| pool.binary_search(i).is_ok())
}

fn complement(k: usize, removed: &[usize]) -> Vec<usize> {
    let mut mark = vec![false; k];
    for &i in removed {
        mark[i] = true;
    }
    (0..k).filter(|&i| !mark[i]).collect()
}

/// Checks openings against commitments and tallies matched-basis errors
/// against the local `(values, bases)`.
fn check_openings(
    ck: &CommitKey,
    positions: &[usize],
    commitments: impl Fn(usize) -> CommitPair,
    openings: &[OpeningPair],
    values: &BitString,
    bases: &BitString,
) -> Result<TestCheck, AbortReason> {
    if openings.len() != positions.len() {
        return Err(AbortReason::Malformed(format!("expected {} openings, found {}", positions.len(), openings.len())));
    }
    let mut check = TestCheck::default();
    for (&i, o) in positions.iter().zip(openings) {
        let c = commitments(i);
        if !verify_open(ck, &c.value, &o.value) || !verify_open(ck, &c.basis, &o.basis) {
            return Err(AbortReason::CommitmentVerification);
        }
        if o.basis.m == bases.get(i) {
            check.matched += 1;
            if o.value.m != values.get(i) {
                check.errors += 1;
            }
        }
    }
    Ok(check)
}

/// `pad(x|_{T-bar}|_{I_w})`: the sifted block at the fixed width `ell`.
fn sifted_block(x: &BitString, t_bar: &[usize], iw: &[usize], ell: usize) -> BitString {
    let positions: Vec<usize> = iw.iter().map(|&w| t_bar[w]).collect();
    x.restrict(&positions).fit_to(ell)
}

pub struct ClientSession {
    params: Arc<ProtocolParams>,
    pw: u32,
    rng: SimRng,
    phase: ClientPhase,
    outcome: Outcome,
    x: BitString,
    theta: BitString,
    server_commitments: Vec<CommitPair>,
    t1: Vec<usize>,
    t1_check: Option<TestCheck>,
    rest: Vec<usize>,
    own_openings: Vec<OpeningPair>,
    t2: Vec<usize>,
    t_bar: Vec<usize>,
    phi: Option<BitString>,
    phi_hat: Option<BitString>,
    iw: Option<Vec<usize>>,
    block: Option<BitString>,
}

impl ClientSession {
    pub fn new(params: Arc<ProtocolParams>, pw: u32, seed: u64) -> Result<Self, PakeError> {
        params.check_password(pw)?;
        Ok(Self {
            params,
            pw,
            rng: stream_rng(seed, streams::CLIENT),
            phase: ClientPhase::AwaitActivation,
            outcome: Outcome::Pending,
            x: BitString::zeros(0),
            theta: BitString::zeros(0),
            server_commitments: Vec::new(),
            t1: Vec::new(),
            t1_check: None,
            rest: Vec::new(),
            own_openings: Vec::new(),
            t2: Vec::new(),
            t_bar: Vec::new(),
            phi: None,
            phi_hat: None,
            iw: None,
            block: None,
        })
    }

    pub fn phase(&self) -> ClientPhase {
        self.phase
    }

    pub fn outcome(&self) -> &Outcome {
        &self.outcome
    }

    pub fn wants_activation(&self) -> bool {
        self.outcome.is_pending() && matches!(self.phase, ClientPhase::AwaitActivation | ClientPhase::ReadyFour)
    }

    /// Matched-basis error tally on `T1`, once the first test has run.
    pub fn t1_check(&self) -> Option<TestCheck> {
        self.t1_check
    }

    pub fn sifted_positions(&self) -> Option<&[usize]> {
        self.iw.as_deref()
    }

    pub fn block(&self) -> Option<&BitString> {
        self.block.as_ref()
    }

    /// Data and bases of the prepared qubits.
    pub fn prepared(&self) -> (&BitString, &BitString) {
        (&self.x, &self.theta)
    }

    pub fn abort(&mut self, reason: AbortReason) {
        if self.outcome.is_pending() {
            self.outcome = Outcome::Abort(reason);
            self.phase = ClientPhase::Done;
        }
    }

    pub fn advance(&mut self, input: Input) -> Option<Flow> {
        if !self.outcome.is_pending() {
            return None;
        }
        match self.step(input) {
            Ok(out) => out,
            Err(reason) => {
                self.abort(reason);
                None
            }
        }
    }

    fn step(&mut self, input: Input) -> Result<Option<Flow>, AbortReason> {
        let p = self.params.clone();
        let k = p.k();
        match (self.phase, input) {
            (ClientPhase::AwaitActivation, Input::Activate) => {
                self.x = random_bits(&mut self.rng, k);
                self.theta = random_bits(&mut self.rng, k);
                let reg = encode_bb84(&self.x, &self.theta).map_err(|e| AbortReason::Malformed(e.to_string()))?;
                self.phase = ClientPhase::AwaitOne1;
                Ok(Some(Flow::Zero(reg)))
            }
            (ClientPhase::AwaitOne1, Input::Flow(Flow::One1(list))) => {
                if list.len() != k {
                    return Err(AbortReason::Malformed(format!("expected {k} commitment pairs")));
                }
                self.server_commitments = list;
                let all: Vec<usize> = (0..k).collect();
                self.t1 = sample_subset(&mut self.rng, &all, p.test_size());
                self.phase = ClientPhase::AwaitOne3;
                Ok(Some(Flow::One2(self.t1.clone())))
            }
            (ClientPhase::AwaitOne3, Input::Flow(Flow::One3(openings))) => {
                let commitments = &self.server_commitments;
                let check = check_openings(&p.crs.ck, &self.t1, |i| commitments[i].clone(), &openings, &self.x, &self.theta)?;
                self.t1_check = Some(check);
                if !check.passes(p.set.tau) {
                    return Err(AbortReason::ErrorRate);
                }
                self.rest = complement(k, &self.t1);
                let (commitments, openings) = commit_pairs(&p.crs.ck_prime, &self.x, &self.theta, &self.rest, &mut self.rng);
                self.own_openings = openings;
                self.phase = ClientPhase::AwaitTwo2;
                Ok(Some(Flow::Two1 { indices: self.rest.clone(), commitments }))
            }
            (ClientPhase::AwaitTwo2, Input::Flow(Flow::Two2(t2))) => {
                if t2.len() != p.test_size() || !is_strict_subset_of(&t2, &self.rest) {
                    return Err(AbortReason::Malformed("T2 must be a test-sized subset outside T1".into()));
                }
                let openings = t2
                    .iter()
                    .map(|i| self.own_openings[self.rest.binary_search(i).expect("checked subset")].clone())
                    .collect();
                self.t_bar = self.rest.iter().copied().filter(|i| t2.binary_search(i).is_err()).collect();
                self.t2 = t2;
                self.phase = ClientPhase::AwaitThree1;
                Ok(Some(Flow::Two3(openings)))
            }
            (ClientPhase::AwaitThree1, Input::Flow(Flow::Three1(phi_hat))) => {
                if phi_hat.len() != p.n() {
                    return Err(AbortReason::Malformed("mask has the wrong length".into()));
                }
                let codeword = p.code.encode(self.pw).expect("password checked at creation");
                let phi = self.theta.restrict(&self.t_bar).xor(codeword);
                self.phi_hat = Some(phi_hat);
                self.phi = Some(phi.clone());
                self.phase = ClientPhase::ReadyFour;
                Ok(Some(Flow::Three2(phi)))
            }
            (ClientPhase::ReadyFour, Input::Activate) => {
                let (phi, phi_hat) = (self.phi.as_ref().expect("set"), self.phi_hat.as_ref().expect("set"));
                let iw = sift_indices(phi, phi_hat).expect("equal lengths");
                let block = sifted_block(&self.x, &self.t_bar, &iw, p.ell());
                let j = self.rng.gen_range(0..p.family.index_count);
                let code = p.family.code(j).map_err(|e| AbortReason::Malformed(e.to_string()))?;
                let syndrome = code.syndrome(&block).expect("block has width ell");
                self.iw = Some(iw);
                self.block = Some(block);
                self.phase = ClientPhase::AwaitFive;
                Ok(Some(Flow::Four { j, syndrome }))
            }
            (ClientPhase::AwaitFive, Input::Flow(Flow::Five(f))) => {
                if f.input_len != p.ell() || f.output_len != p.set.lambda {
                    return Err(AbortReason::Malformed("hash dimensions".into()));
                }
                let h = f.instantiate().map_err(|e| AbortReason::Malformed(e.to_string()))?;
                let key = h.eval(self.block.as_ref().expect("set")).expect("width ell");
                self.outcome = Outcome::Key(SessionKey(key));
                self.phase = ClientPhase::Done;
                Ok(None)
            }
            (_, Input::Flow(flow)) => Err(AbortReason::OutOfOrder(flow.tag())),
            (_, Input::Activate) => Ok(None),
        }
    }
}

pub struct ServerSession {
    params: Arc<ProtocolParams>,
    pw: u32,
    rng: SimRng,
    phase: ServerPhase,
    outcome: Outcome,
    x_hat: BitString,
    theta_hat: BitString,
    own_openings: Vec<OpeningPair>,
    t1: Vec<usize>,
    rest: Vec<usize>,
    client_commitments: Vec<CommitPair>,
    t2: Vec<usize>,
    t2_check: Option<TestCheck>,
    t_bar: Vec<usize>,
    phi_hat: Option<BitString>,
    iw: Option<Vec<usize>>,
    block: Option<BitString>,
    decode_failed: bool,
}

impl ServerSession {
    pub fn new(params: Arc<ProtocolParams>, pw: u32, seed: u64) -> Result<Self, PakeError> {
        params.check_password(pw)?;
        Ok(Self {
            params,
            pw,
            rng: stream_rng(seed, streams::SERVER),
            phase: ServerPhase::AwaitZero,
            outcome: Outcome::Pending,
            x_hat: BitString::zeros(0),
            theta_hat: BitString::zeros(0),
            own_openings: Vec::new(),
            t1: Vec::new(),
            rest: Vec::new(),
            client_commitments: Vec::new(),
            t2: Vec::new(),
            t2_check: None,
            t_bar: Vec::new(),
            phi_hat: None,
            iw: None,
            block: None,
            decode_failed: false,
        })
    }

    pub fn phase(&self) -> ServerPhase {
        self.phase
    }

    pub fn outcome(&self) -> &Outcome {
        &self.outcome
    }

    pub fn t2_check(&self) -> Option<TestCheck> {
        self.t2_check
    }

    pub fn block(&self) -> Option<&BitString> {
        self.block.as_ref()
    }

    pub fn sifted_positions(&self) -> Option<&[usize]> {
        self.iw.as_deref()
    }

    /// Whether the syndrome decoder found no candidate within its radius; the
    /// key is then derived from the uncorrected block.
    pub fn decode_failed(&self) -> bool {
        self.decode_failed
    }

    pub fn measured(&self) -> (&BitString, &BitString) {
        (&self.x_hat, &self.theta_hat)
    }

    pub fn abort(&mut self, reason: AbortReason) {
        if self.outcome.is_pending() {
            self.outcome = Outcome::Abort(reason);
            self.phase = ServerPhase::Done;
        }
    }

    pub fn advance(&mut self, input: Input) -> Option<Flow> {
        if !self.outcome.is_pending() {
            return None;
        }
        match self.step(input) {
            Ok(out) => out,
            Err(reason) => {
                self.abort(reason);
                None
            }
        }
    }

    fn step(&mut self, input: Input) -> Result<Option<Flow>, AbortReason> {
        let p = self.params.clone();
        let k = p.k();
        match (self.phase, input) {
            (ServerPhase::AwaitZero, Input::Flow(Flow::Zero(reg))) => {
                if reg.len() != k {
                    return Err(AbortReason::Malformed(format!("expected {k} qubits")));
                }
                self.theta_hat = random_bits(&mut self.rng, k);
                self.x_hat = measure(reg, &self.theta_hat, &mut self.rng).map_err(|e| AbortReason::Malformed(e.to_string()))?;
                let all: Vec<usize> = (0..k).collect();
                let (commitments, openings) = commit_pairs(&p.crs.ck, &self.x_hat, &self.theta_hat, &all, &mut self.rng);
                self.own_openings = openings;
                self.phase = ServerPhase::AwaitOne2;
                Ok(Some(Flow::One1(commitments)))
            }
            (ServerPhase::AwaitOne2, Input::Flow(Flow::One2(t1))) => {
                let all: Vec<usize> = (0..k).collect();
                if t1.len() != p.test_size() || !is_strict_subset_of(&t1, &all) {
                    return Err(AbortReason::Malformed("T1 must be a test-sized set of positions".into()));
                }
                let openings = t1.iter().map(|&i| self.own_openings[i].clone()).collect();
                self.rest = complement(k, &t1);
                self.t1 = t1;
                self.phase = ServerPhase::AwaitTwo1;
                Ok(Some(Flow::One3(openings)))
            }
            (ServerPhase::AwaitTwo1, Input::Flow(Flow::Two1 { indices, commitments })) => {
                if indices != self.rest || commitments.len() != indices.len() {
                    return Err(AbortReason::Malformed("commitments must cover exactly the positions outside T1".into()));
                }
                self.client_commitments = commitments;
                self.t2 = sample_subset(&mut self.rng, &self.rest, p.test_size());
                self.phase = ServerPhase::AwaitTwo3;
                Ok(Some(Flow::Two2(self.t2.clone())))
            }
            (ServerPhase::AwaitTwo3, Input::Flow(Flow::Two3(openings))) => {
                let (rest, commitments) = (&self.rest, &self.client_commitments);
                let lookup = |i: usize| commitments[rest.binary_search(&i).expect("T2 inside rest")].clone();
                let check = check_openings(&p.crs.ck_prime, &self.t2, lookup, &openings, &self.x_hat, &self.theta_hat)?;
                self.t2_check = Some(check);
                if !check.passes(p.set.tau) {
                    return Err(AbortReason::ErrorRate);
                }
                self.t_bar = self.rest.iter().copied().filter(|i| self.t2.binary_search(i).is_err()).collect();
                let codeword = p.code.encode(self.pw).expect("password checked at creation");
                let phi_hat = self.theta_hat.restrict(&self.t_bar).xor(codeword);
                self.phi_hat = Some(phi_hat.clone());
                self.phase = ServerPhase::AwaitThree2;
                Ok(Some(Flow::Three1(phi_hat)))
            }
            (ServerPhase::AwaitThree2, Input::Flow(Flow::Three2(phi))) => {
                if phi.len() != p.n() {
                    return Err(AbortReason::Malformed("mask has the wrong length".into()));
                }
                let iw = sift_indices(&phi, self.phi_hat.as_ref().expect("set")).expect("equal lengths");
                self.block = Some(sifted_block(&self.x_hat, &self.t_bar, &iw, p.ell()));
                self.iw = Some(iw);
                self.phase = ServerPhase::AwaitFour;
                Ok(None)
            }
            (ServerPhase::AwaitFour, Input::Flow(Flow::Four { j, syndrome })) => {
                if j >= p.family.index_count || syndrome.len() != p.family.syndrome_len {
                    return Err(AbortReason::Malformed("code index or syndrome length".into()));
                }
                let code = p.family.code(j).map_err(|e| AbortReason::Malformed(e.to_string()))?;
                let block = self.block.as_ref().expect("set");
                let corrected = match code.decode(&syndrome, block) {
                    Ok(x) => x,
                    Err(_) => {
                        self.decode_failed = true;
                        block.clone()
                    }
                };
                let seed = self.rng.next_u64();
                let h = sample_two_universal(seed, p.ell(), p.set.lambda).expect("dimensions validated");
                let key = h.eval(&corrected).expect("width ell");
                self.outcome = Outcome::Key(SessionKey(key));
                self.phase = ServerPhase::Done;
                Ok(Some(Flow::Five(h.descriptor().expect("sampled from seed"))))
            }
            (_, Input::Flow(flow)) => Err(AbortReason::OutOfOrder(flow.tag())),
            (_, Input::Activate) => Ok(None),
        }
    }
}

/// Either party's state machine.
pub enum SessionState {
    Client(ClientSession),
    Server(ServerSession),
}

impl SessionState {
    pub fn role(&self) -> Role {
        match self {
            SessionState::Client(_) => Role::Client,
            SessionState::Server(_) => Role::Server,
        }
    }

    pub fn advance(&mut self, input: Input) -> Option<Flow> {
        match self {
            SessionState::Client(c) => c.advance(input),
            SessionState::Server(s) => s.advance(input),
        }
    }

    pub fn outcome(&self) -> &Outcome {
        match self {
            SessionState::Client(c) => c.outcome(),
            SessionState::Server(s) => s.outcome(),
        }
    }

    pub fn abort(&mut self, reason: AbortReason) {
        match self {
            SessionState::Client(c) => c.abort(reason),
            SessionState::Server(s) => s.abort(reason),
        }
    }

    pub fn wants_activation(&self) -> bool {
        match self {
            SessionState::Client(c) => c.wants_activation(),
            SessionState::Server(_) => false,
        }
    }
}

pub fn new_session(params: Arc<ProtocolParams>, role: Role, pw: u32, seed: u64) -> Result<SessionState, PakeError> {
    Ok(match role {
        Role::Client => SessionState::Client(ClientSession::new(params, pw, seed)?),
        Role::Server => SessionState::Server(ServerSession::new(params, pw, seed)?),
    })
}

/// `r_H` on the matched positions of a test set, for callers holding both
/// sides' data.
pub fn matched_error(x: &BitString, x_hat: &BitString, theta: &BitString, theta_hat: &BitString, set: &[usize]) -> TestCheck {
    let matched: Vec<usize> = set.iter().copied().filter(|&i| theta.get(i) == theta_hat.get(i)).collect();
    let rate = relative_hamming(&x.restrict(&matched), &x_hat.restrict(&matched)).expect("equal lengths");
    TestCheck { matched: rate.len, errors: rate.errors }
}
