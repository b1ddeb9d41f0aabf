//! The ideal password-based key-exchange functionality for one session id.

use std::collections::{BTreeMap, BTreeSet};

use crate::gf2::BitString;
use crate::pake::Role;
use crate::rng::SimRng;
use crate::splitauth::PartyId;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FpwkeQuery {
    NewSession { party: PartyId, peer: PartyId, pw: u32, role: Role },
    TestPwd { party: PartyId, guess: u32 },
    NewKey { party: PartyId, sk: BitString },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FpwkeResponse {
    /// Forwarded to the adversary on every `NewSession`.
    SessionNotice { party: PartyId, peer: PartyId, role: Role },
    CorrectGuess,
    WrongGuess,
    KeyOutput { party: PartyId, key: BitString },
    /// The query had no effect.
    NoOp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum RecordStatus {
    Fresh,
    Compromised,
    Interrupted,
    Completed,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PwRecord {
    pub peer: PartyId,
    pub pw: u32,
    pub status: RecordStatus,
    pub key: Option<BitString>,
    /// Whether the record was fresh when its key was issued.
    pub fresh_when_keyed: bool,
}

pub struct FpwkeState {
    lambda: usize,
    new_sessions: usize,
    records: BTreeMap<PartyId, PwRecord>,
    corrupted: BTreeSet<PartyId>,
    rng: SimRng,
}

impl FpwkeState {
    pub fn new(lambda: usize, rng: SimRng) -> Self {
        Self { lambda, new_sessions: 0, records: BTreeMap::new(), corrupted: BTreeSet::new(), rng }
    }

    pub fn corrupt(&mut self, party: PartyId) {
        self.corrupted.insert(party);
    }

    pub fn record(&self, party: PartyId) -> Option<&PwRecord> {
        self.records.get(&party)
    }

    pub fn step(&mut self, query: FpwkeQuery) -> FpwkeResponse {
        match query {
            FpwkeQuery::NewSession { party, peer, pw, role } => {
                self.new_sessions += 1;
                let first = self.new_sessions == 1;
                // a record never pairs with itself
                let second_matching = self.new_sessions == 2
                    && peer != party
                    && self.records.get(&peer).is_some_and(|r| r.peer == party);
                if first || second_matching {
                    let record = PwRecord { peer, pw, status: RecordStatus::Fresh, key: None, fresh_when_keyed: false };
                    self.records.insert(party, record);
                }
                FpwkeResponse::SessionNotice { party, peer, role }
            }
            FpwkeQuery::TestPwd { party, guess } => match self.records.get_mut(&party) {
                Some(r) if r.status == RecordStatus::Fresh => {
                    if r.pw == guess {
                        r.status = RecordStatus::Compromised;
                        FpwkeResponse::CorrectGuess
                    } else {
                        r.status = RecordStatus::Interrupted;
                        FpwkeResponse::WrongGuess
                    }
                }
                _ => FpwkeResponse::NoOp,
            },
            FpwkeQuery::NewKey { party, sk } => {
                if sk.len() != self.lambda {
                    return FpwkeResponse::NoOp;
                }
                let Some(r) = self.records.get(&party) else {
                    return FpwkeResponse::NoOp;
                };
                if r.status == RecordStatus::Completed {
                    return FpwkeResponse::NoOp;
                }
                let key = if r.status == RecordStatus::Compromised
                    || self.corrupted.contains(&party)
                    || self.corrupted.contains(&r.peer)
                {
                    sk
                } else {
                    let peer_key = self
                        .records
                        .get(&r.peer)
                        .filter(|p| p.peer == party && p.pw == r.pw && p.fresh_when_keyed)
                        .and_then(|p| p.key.clone());
                    match peer_key {
                        Some(k) if r.status == RecordStatus::Fresh => k,
                        _ => BitString::random(&mut self.rng, self.lambda),
                    }
                };
                let r = self.records.get_mut(&party).expect("record exists");
                r.fresh_when_keyed = r.status == RecordStatus::Fresh;
                r.status = RecordStatus::Completed;
                r.key = Some(key.clone());
                FpwkeResponse::KeyOutput { party, key }
            }
        }
    }
}
