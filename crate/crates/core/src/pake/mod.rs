//! The password-authenticated key exchange as two state machines.
//!
//! The client prepares `k` BB84 qubits; the server measures them and commits
//! to what it saw. Two rounds of cut-and-choose estimate the channel error
//! on random test sets, each side committing before the other reveals which
//! positions it will check. On the remaining `n` positions both parties
//! exchange their bases masked by the password codeword; positions where the
//! masks agree form the sifted set `I_w`. The client sends a syndrome of its
//! sifted block, the server corrects its own block, and both hash the result
//! into a `lambda`-bit key.
//!
//! Mismatched passwords make the sifted sets unrelated to the true basis
//! agreement, so the blocks differ and the keys are independent.

mod flow;
mod params;
mod runner;
mod session;

use thiserror::Error;

pub use flow::{index_bitmap, parse_index_bitmap, CommitPair, Flow, FlowTag, OpeningPair, WireRecord};
pub use params::{Crs, CrsTrapdoors, ParamSet, ProtocolParams};
pub use runner::{
    decode_delivery, outcome_summary, run_session, run_session_over, Delivery, Diagnostics, Direction, LinkResult,
    PlainRunner, PlainTransport, SessionOptions, SessionResult, SessionRunner, Transcript, TranscriptEntry,
    TranscriptHeader, Transport, WireContext, WireTamper,
};
pub use session::{
    matched_error, new_session, AbortReason, ClientPhase, ClientSession, Input, Outcome, Role, ServerPhase,
    ServerSession, SessionKey, SessionState, TestCheck,
};

use crate::gf2::BitString;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PakeError {
    #[error("invalid parameters: {0}")]
    Params(String),
    #[error("password {0} is outside the dictionary")]
    Password(u32),
    #[error("wire format: {0}")]
    Wire(String),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
}

/// Positions (0-based) where the two masks agree.
pub fn sift_indices(phi: &BitString, phi_hat: &BitString) -> Result<Vec<usize>, PakeError> {
    if phi.len() != phi_hat.len() {
        return Err(PakeError::LengthMismatch(phi.len(), phi_hat.len()));
    }
    let mut agree = phi.xor(phi_hat);
    for w in 0..phi.len() {
        agree.flip(w);
    }
    Ok(agree.ones_positions())
}

/// An exact relative Hamming distance `errors / len`; zero for empty strings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rate {
    pub errors: usize,
    pub len: usize,
}

impl Rate {
    pub fn value(&self) -> f64 {
        if self.len == 0 {
            0.0
        } else {
            self.errors as f64 / self.len as f64
        }
    }
}

pub fn relative_hamming(a: &BitString, b: &BitString) -> Result<Rate, PakeError> {
    let errors = a.hamming_distance(b).map_err(|_| PakeError::LengthMismatch(a.len(), b.len()))?;
    Ok(Rate { errors, len: a.len() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::GroupPreset;
    use crate::qchannel::ChannelModel;
    use proptest::prelude::*;
    use std::sync::Arc;

    fn params(k: usize, lambda: usize) -> Arc<ProtocolParams> {
        let set = ParamSet { k, lambda, group: GroupPreset::Sim64, ..ParamSet::default() };
        Arc::new(ProtocolParams::setup(set).unwrap())
    }

    fn bits(s: &str) -> BitString {
        BitString::parse(s).unwrap()
    }

    fn recorded() -> SessionOptions {
        SessionOptions { record_transcript: true }
    }

    #[test]
    fn sifting_examples() {
        let iw = sift_indices(&bits("0101"), &bits("0110")).unwrap();
        assert_eq!(iw.iter().map(|i| i + 1).collect::<Vec<_>>(), vec![1, 2]);
        assert_eq!(sift_indices(&bits("0110"), &bits("0110")).unwrap(), vec![0, 1, 2, 3]);
        assert!(sift_indices(&bits("0110"), &bits("1001")).unwrap().is_empty());
        assert!(sift_indices(&bits("01"), &bits("011")).is_err());
    }

    #[test]
    fn relative_hamming_examples() {
        assert_eq!(relative_hamming(&bits("0000"), &bits("0000")).unwrap().value(), 0.0);
        assert_eq!(relative_hamming(&bits("0000"), &bits("1111")).unwrap().value(), 1.0);
        assert_eq!(relative_hamming(&bits("0011"), &bits("0010")).unwrap(), Rate { errors: 1, len: 4 });
        assert_eq!(relative_hamming(&BitString::zeros(0), &BitString::zeros(0)).unwrap().value(), 0.0);
        assert!(relative_hamming(&bits("0"), &bits("00")).is_err());
    }

    #[test]
    fn threshold_rule() {
        // tau = 0.1 allows 5% errors on the matched positions
        assert!(TestCheck { matched: 20, errors: 1 }.passes(0.1));
        assert!(!TestCheck { matched: 10, errors: 1 }.passes(0.1));
        assert!(TestCheck { matched: 0, errors: 0 }.passes(0.1));
    }

    #[test]
    fn new_session_checks() {
        let p = params(32, 4);
        let s = new_session(p.clone(), Role::Client, 3, 1).unwrap();
        let SessionState::Client(c) = &s else { panic!() };
        assert_eq!(c.phase(), ClientPhase::AwaitActivation);
        assert!(matches!(new_session(p.clone(), Role::Server, 16, 1), Err(PakeError::Password(16))));
        let first = |seed| {
            let mut s = new_session(p.clone(), Role::Client, 3, seed).unwrap();
            s.advance(Input::Activate).unwrap().to_wire(seed, &p)
        };
        assert_eq!(first(5), first(5));
        assert_ne!(first(5), first(6));
    }

    #[test]
    fn honest_trace_agrees() {
        let p = params(32, 4);
        for seed in 0..20 {
            let r = run_session(&p, 7, 7, &ChannelModel::Ideal, None, seed, recorded());
            assert!(r.keys_agree(), "seed {seed}: {:?} {:?}", r.client, r.server);
            let t = r.transcript.unwrap();
            let tags: Vec<FlowTag> = t.entries.iter().map(|e| e.record.tag).collect();
            assert_eq!(tags, FlowTag::ALL.to_vec());
            assert_eq!(r.diagnostics.block_errors, Some(0));
        }
    }

    #[test]
    fn wrong_password_keys_differ_mostly() {
        let p = params(64, 8);
        let agree = (0..50).filter(|&seed| run_session(&p, 1, 2, &ChannelModel::Ideal, None, seed, Default::default()).keys_agree()).count();
        assert!(agree <= 3, "{agree} of 50 agreed");
    }

    #[test]
    fn corrupted_opening_aborts() {
        let p = params(32, 4);
        let mut client = ClientSession::new(p.clone(), 0, 9).unwrap();
        let mut server = ServerSession::new(p.clone(), 0, 9).unwrap();
        let zero = client.advance(Input::Activate).unwrap();
        let one1 = server.advance(Input::Flow(zero)).unwrap();
        let one2 = client.advance(Input::Flow(one1)).unwrap();
        let Flow::One3(mut openings) = server.advance(Input::Flow(one2)).unwrap() else { panic!() };
        openings[0].value.m = !openings[0].value.m;
        assert!(client.advance(Input::Flow(Flow::One3(openings))).is_none());
        assert_eq!(client.outcome(), &Outcome::Abort(AbortReason::CommitmentVerification));
        // terminal outcomes stay put
        assert!(client.advance(Input::Activate).is_none());
        assert!(client.outcome().is_abort());
    }

    #[test]
    fn out_of_order_flow_aborts() {
        let p = params(32, 4);
        let mut server = ServerSession::new(p, 0, 1).unwrap();
        server.advance(Input::Flow(Flow::Three2(BitString::zeros(16))));
        assert_eq!(server.outcome(), &Outcome::Abort(AbortReason::OutOfOrder(FlowTag::Three2)));
    }

    #[test]
    fn flipped_channel_trips_error_rate() {
        let p = params(32, 4);
        let r = run_session(&p, 0, 0, &ChannelModel::BitFlip(1.0), None, 3, Default::default());
        assert_eq!(r.client, Outcome::Abort(AbortReason::ErrorRate));
        assert_eq!(r.server, Outcome::Abort(AbortReason::Timeout));
    }

    #[test]
    fn wire_round_trip_of_every_flow() {
        struct Echo;
        impl WireTamper for Echo {
            fn tamper(&mut self, _: Role, _: FlowTag, bytes: Vec<u8>) -> Option<Vec<u8>> {
                Some(bytes)
            }
        }
        let p = params(32, 4);
        for seed in 0..5 {
            let plain = run_session(&p, 2, 2, &ChannelModel::Ideal, None, seed, recorded());
            let wired = run_session(&p, 2, 2, &ChannelModel::Ideal, Some(&mut Echo), seed, recorded());
            assert_eq!(plain.transcript, wired.transcript);
            assert!(wired.keys_agree());
        }
    }

    #[test]
    fn transcripts_are_deterministic_and_serializable() {
        let p = params(32, 4);
        let a = run_session(&p, 1, 1, &ChannelModel::BitFlip(0.02), None, 11, recorded()).transcript.unwrap();
        let b = run_session(&p, 1, 1, &ChannelModel::BitFlip(0.02), None, 11, recorded()).transcript.unwrap();
        assert_eq!(a.to_jsonl(), b.to_jsonl());
        let jsonl = a.to_jsonl();
        let lines: Vec<&str> = jsonl.lines().collect();
        assert_eq!(lines.len(), a.entries.len() + 2);
        let first: TranscriptEntry = serde_json::from_str(lines[1]).unwrap();
        assert_eq!(first, a.entries[0]);
    }

    #[test]
    fn aborts_ignore_the_password() {
        let p = params(32, 4);
        for seed in 0..10 {
            let runs: Vec<SessionResult> =
                [0, 5, 9].iter().map(|&pw| run_session(&p, pw, pw, &ChannelModel::BitFlip(0.03), None, seed, recorded())).collect();
            let prefix = |r: &SessionResult| r.transcript.as_ref().unwrap().before_masks().to_vec();
            for r in &runs[1..] {
                assert_eq!(prefix(r), prefix(&runs[0]));
                assert_eq!(r.any_abort(), runs[0].any_abort());
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn completed_runs_have_eleven_flows_and_correct_keys(seed in any::<u64>(), flip in 0.0f64..0.04) {
            let p = params(64, 8);
            let r = run_session(&p, 3, 3, &ChannelModel::BitFlip(flip), None, seed, recorded());
            let t = r.transcript.as_ref().unwrap();
            let tags: Vec<FlowTag> = t.entries.iter().map(|e| e.record.tag).collect();
            prop_assert!(tags.windows(2).all(|w| w[0] < w[1]));
            if r.both_keys().is_some() {
                prop_assert_eq!(tags.len(), 11);
                if r.diagnostics.block_errors.unwrap() <= p.family.radius() {
                    prop_assert!(r.keys_agree());
                }
            }
        }
    }
}
