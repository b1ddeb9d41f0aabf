//! Protocol messages and their wire records.
//!
//! A wire record is one JSON object `{session_id, tag, payload}`. Integers
//! are fixed-width big-endian hex, bit strings and index sets are MSB-first
//! hex bitmaps, commitments are `c1 || c2` and openings `m || r || s`.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::{PakeError, ProtocolParams};
use crate::crypto::{Commitment, GroupParams, Opening};
use crate::gf2::{BitString, HashDescriptor};
use crate::hexfmt;
use crate::qchannel::QuantumRegister;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FlowTag {
    Zero,
    One1,
    One2,
    One3,
    Two1,
    Two2,
    Two3,
    Three1,
    Three2,
    Four,
    Five,
}

impl FlowTag {
    pub const ALL: [FlowTag; 11] = [
        FlowTag::Zero,
        FlowTag::One1,
        FlowTag::One2,
        FlowTag::One3,
        FlowTag::Two1,
        FlowTag::Two2,
        FlowTag::Two3,
        FlowTag::Three1,
        FlowTag::Three2,
        FlowTag::Four,
        FlowTag::Five,
    ];

    /// The ten flows that carry classical data.
    pub fn classical() -> impl Iterator<Item = FlowTag> {
        Self::ALL.into_iter().skip(1)
    }

    pub fn name(self) -> &'static str {
        match self {
            FlowTag::Zero => "zero",
            FlowTag::One1 => "one1",
            FlowTag::One2 => "one2",
            FlowTag::One3 => "one3",
            FlowTag::Two1 => "two1",
            FlowTag::Two2 => "two2",
            FlowTag::Two3 => "two3",
            FlowTag::Three1 => "three1",
            FlowTag::Three2 => "three2",
            FlowTag::Four => "four",
            FlowTag::Five => "five",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.name() == s)
    }

    /// Flows three1 and later follow the test rounds.
    pub fn after_tests(self) -> bool {
        self >= FlowTag::Three1
    }
}

impl fmt::Display for FlowTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Commitments to `(value_i, basis_i)` for one position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommitPair {
    pub value: Commitment,
    pub basis: Commitment,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OpeningPair {
    pub value: Opening,
    pub basis: Opening,
}

#[derive(Debug, PartialEq)]
pub enum Flow {
    /// The BB84 qubits.
    Zero(QuantumRegister),
    /// Server commitments to `(x-hat_i, theta-hat_i)` for every position.
    One1(Vec<CommitPair>),
    /// The first test set `T1`.
    One2(Vec<usize>),
    /// Openings of the server commitments on `T1`, in `T1` order.
    One3(Vec<OpeningPair>),
    /// Client commitments to `(x_i, theta_i)` on the listed positions.
    Two1 { indices: Vec<usize>, commitments: Vec<CommitPair> },
    /// The second test set `T2`.
    Two2(Vec<usize>),
    /// Openings of the client commitments on `T2`, in `T2` order.
    Two3(Vec<OpeningPair>),
    /// Server mask `phi-hat = theta-hat|T-bar xor c(pw)`.
    Three1(BitString),
    /// Client mask `phi = theta|T-bar xor c(pw)`.
    Three2(BitString),
    /// Code index and syndrome.
    Four { j: u64, syndrome: BitString },
    /// The privacy-amplification hash.
    Five(HashDescriptor),
}

impl Flow {
    pub fn tag(&self) -> FlowTag {
        match self {
            Flow::Zero(_) => FlowTag::Zero,
            Flow::One1(_) => FlowTag::One1,
            Flow::One2(_) => FlowTag::One2,
            Flow::One3(_) => FlowTag::One3,
            Flow::Two1 { .. } => FlowTag::Two1,
            Flow::Two2(_) => FlowTag::Two2,
            Flow::Two3(_) => FlowTag::Two3,
            Flow::Three1(_) => FlowTag::Three1,
            Flow::Three2(_) => FlowTag::Three2,
            Flow::Four { .. } => FlowTag::Four,
            Flow::Five(_) => FlowTag::Five,
        }
    }

    pub fn to_wire(&self, session_id: u64, params: &ProtocolParams) -> WireRecord {
        let g = &params.group;
        let k = params.k();
        let payload = match self {
            Flow::Zero(reg) => serde_json::json!({ "qubits": reg.to_hex() }),
            Flow::One1(list) => serde_json::json!({ "commitments": commit_list(g, list) }),
            Flow::One2(set) | Flow::Two2(set) => serde_json::json!({ "set": index_bitmap(set, k) }),
            Flow::One3(list) | Flow::Two3(list) => serde_json::json!({ "openings": opening_list(g, list) }),
            Flow::Two1 { indices, commitments } => serde_json::json!({
                "indices": index_bitmap(indices, k),
                "commitments": commit_list(g, commitments),
            }),
            Flow::Three1(mask) | Flow::Three2(mask) => serde_json::json!({ "mask": mask.to_hex() }),
            Flow::Four { j, syndrome } => serde_json::json!({
                "j": hexfmt::encode_u64(*j),
                "syndrome": syndrome.to_hex(),
            }),
            Flow::Five(f) => serde_json::json!({ "seed": hexfmt::encode_u64(f.seed) }),
        };
        WireRecord { session_id: hexfmt::encode_u64(session_id), tag: self.tag(), payload }
    }

    /// Parses a record, checking every width against `params`. Semantic
    /// checks (set sizes, disjointness) are left to the receiving session.
    pub fn from_wire(record: &WireRecord, params: &ProtocolParams) -> Result<Flow, PakeError> {
        let g = &params.group;
        let k = params.k();
        let p = record.payload.clone();
        let wire = |e: serde_json::Error| PakeError::Wire(format!("{} payload: {e}", record.tag));
        Ok(match record.tag {
            FlowTag::Zero => {
                let w: ZeroWire = serde_json::from_value(p).map_err(wire)?;
                Flow::Zero(QuantumRegister::from_hex(&w.qubits, k).map_err(|e| PakeError::Wire(e.to_string()))?)
            }
            FlowTag::One1 => {
                let w: CommitListWire = serde_json::from_value(p).map_err(wire)?;
                Flow::One1(parse_commit_list(g, &w.commitments)?)
            }
            FlowTag::One2 | FlowTag::Two2 => {
                let w: SetWire = serde_json::from_value(p).map_err(wire)?;
                let set = parse_index_bitmap(&w.set, k)?;
                if record.tag == FlowTag::One2 {
                    Flow::One2(set)
                } else {
                    Flow::Two2(set)
                }
            }
            FlowTag::One3 | FlowTag::Two3 => {
                let w: OpeningListWire = serde_json::from_value(p).map_err(wire)?;
                let list = parse_opening_list(g, &w.openings)?;
                if record.tag == FlowTag::One3 {
                    Flow::One3(list)
                } else {
                    Flow::Two3(list)
                }
            }
            FlowTag::Two1 => {
                let w: Two1Wire = serde_json::from_value(p).map_err(wire)?;
                Flow::Two1 {
                    indices: parse_index_bitmap(&w.indices, k)?,
                    commitments: parse_commit_list(g, &w.commitments)?,
                }
            }
            FlowTag::Three1 | FlowTag::Three2 => {
                let w: MaskWire = serde_json::from_value(p).map_err(wire)?;
                let mask = BitString::from_hex(&w.mask, params.n()).map_err(|e| PakeError::Wire(e.to_string()))?;
                if record.tag == FlowTag::Three1 {
                    Flow::Three1(mask)
                } else {
                    Flow::Three2(mask)
                }
            }
            FlowTag::Four => {
                let w: FourWire = serde_json::from_value(p).map_err(wire)?;
                let j = hexfmt::decode_u64(&w.j).map_err(|e| PakeError::Wire(e.to_string()))?;
                let syndrome = BitString::from_hex(&w.syndrome, params.family.syndrome_len)
                    .map_err(|e| PakeError::Wire(e.to_string()))?;
                Flow::Four { j, syndrome }
            }
            FlowTag::Five => {
                let w: FiveWire = serde_json::from_value(p).map_err(wire)?;
                let seed = hexfmt::decode_u64(&w.seed).map_err(|e| PakeError::Wire(e.to_string()))?;
                Flow::Five(HashDescriptor { seed, input_len: params.ell(), output_len: params.set.lambda })
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WireRecord {
    pub session_id: String,
    pub tag: FlowTag,
    pub payload: serde_json::Value,
}

impl WireRecord {
    pub fn to_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("wire records serialize")
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, PakeError> {
        let record: WireRecord = serde_json::from_slice(bytes).map_err(|e| PakeError::Wire(e.to_string()))?;
        hexfmt::decode_u64(&record.session_id).map_err(|e| PakeError::Wire(format!("session id: {e}")))?;
        Ok(record)
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ZeroWire {
    qubits: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CommitListWire {
    commitments: Vec<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SetWire {
    set: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct OpeningListWire {
    openings: Vec<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Two1Wire {
    indices: String,
    commitments: Vec<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MaskWire {
    mask: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FourWire {
    j: String,
    syndrome: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FiveWire {
    seed: String,
}

pub fn index_bitmap(set: &[usize], k: usize) -> String {
    let mut bits = BitString::zeros(k);
    for &i in set {
        bits.set(i, true);
    }
    bits.to_hex()
}

pub fn parse_index_bitmap(s: &str, k: usize) -> Result<Vec<usize>, PakeError> {
    Ok(BitString::from_hex(s, k).map_err(|e| PakeError::Wire(e.to_string()))?.ones_positions())
}

fn commit_list(g: &GroupParams, list: &[CommitPair]) -> Vec<String> {
    list.iter().map(|c| c.value.to_hex(g) + &c.basis.to_hex(g)).collect()
}

fn opening_list(g: &GroupParams, list: &[OpeningPair]) -> Vec<String> {
    list.iter().map(|o| o.value.to_hex(g) + &o.basis.to_hex(g)).collect()
}

fn split_half(s: &str) -> Result<(&str, &str), PakeError> {
    let half = s.len() / 2;
    if !s.len().is_multiple_of(2) || !s.is_char_boundary(half) {
        return Err(PakeError::Wire("pair entry has odd width".into()));
    }
    Ok(s.split_at(half))
}

fn parse_commit_list(g: &GroupParams, list: &[String]) -> Result<Vec<CommitPair>, PakeError> {
    list.iter()
        .map(|s| {
            let (a, b) = split_half(s)?;
            let err = |e: crate::crypto::CryptoError| PakeError::Wire(e.to_string());
            Ok(CommitPair { value: Commitment::from_hex(g, a).map_err(err)?, basis: Commitment::from_hex(g, b).map_err(err)? })
        })
        .collect()
}

fn parse_opening_list(g: &GroupParams, list: &[String]) -> Result<Vec<OpeningPair>, PakeError> {
    list.iter()
        .map(|s| {
            let (a, b) = split_half(s)?;
            let err = |e: crate::crypto::CryptoError| PakeError::Wire(e.to_string());
            Ok(OpeningPair { value: Opening::from_hex(g, a).map_err(err)?, basis: Opening::from_hex(g, b).map_err(err)? })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tag_names_round_trip() {
        for tag in FlowTag::ALL {
            assert_eq!(FlowTag::parse(tag.name()), Some(tag));
            assert_eq!(serde_json::to_string(&tag).unwrap(), format!("\"{}\"", tag.name()));
        }
        assert_eq!(FlowTag::classical().count(), 10);
    }

    #[test]
    fn bitmaps() {
        assert_eq!(index_bitmap(&[0, 9], 10), "8040");
        assert_eq!(parse_index_bitmap("8040", 10).unwrap(), vec![0, 9]);
        assert!(parse_index_bitmap("8041", 10).is_err());
        assert!(parse_index_bitmap("80", 10).is_err());
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let bad = br#"{"session_id":"0000000000000001","tag":"five","payload":{},"extra":1}"#;
        assert!(WireRecord::from_bytes(bad).is_err());
        let bad_id = br#"{"session_id":"01","tag":"five","payload":{}}"#;
        assert!(WireRecord::from_bytes(bad_id).is_err());
        let bad_tag = br#"{"session_id":"0000000000000001","tag":"six","payload":{}}"#;
        assert!(WireRecord::from_bytes(bad_tag).is_err());
    }
}
