//! Scripted adversaries: a quantum channel attack, byte-level rules for
//! classical flows, and an optional online password guess.

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::pake::{FlowTag, ProtocolParams, Role, WireTamper};
use crate::qchannel::ChannelModel;

mod hex_bytes {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&crate::hexfmt::encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        crate::hexfmt::decode(&s).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mutation {
    Drop,
    /// XOR `mask` into the bytes starting at `offset`, wrapping around the end.
    FlipBits {
        offset: usize,
        #[serde(with = "hex_bytes")]
        mask: Vec<u8>,
    },
    Replace(#[serde(with = "hex_bytes")] Vec<u8>),
    Passthrough,
}

impl Mutation {
    pub fn apply(&self, mut bytes: Vec<u8>) -> Option<Vec<u8>> {
        match self {
            Mutation::Drop => None,
            Mutation::FlipBits { offset, mask } => {
                if !bytes.is_empty() {
                    let len = bytes.len();
                    for (i, m) in mask.iter().enumerate() {
                        bytes[(offset + i) % len] ^= m;
                    }
                }
                Some(bytes)
            }
            Mutation::Replace(new) => Some(new.clone()),
            Mutation::Passthrough => Some(bytes),
        }
    }

    /// Whether the rule can change what the receiver sees.
    pub fn interferes(&self) -> bool {
        match self {
            Mutation::Passthrough => false,
            Mutation::FlipBits { mask, .. } => mask.iter().any(|&m| m != 0),
            Mutation::Drop | Mutation::Replace(_) => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassicalRule {
    pub tag: FlowTag,
    pub mutation: Mutation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdversaryScript {
    #[serde(default = "ideal")]
    pub quantum: ChannelModel,
    #[serde(default)]
    pub classical: Vec<ClassicalRule>,
    /// Password the adversary tries by running the client side itself.
    #[serde(default)]
    pub password_guess: Option<u32>,
}

fn ideal() -> ChannelModel {
    ChannelModel::Ideal
}

impl Default for AdversaryScript {
    fn default() -> Self {
        Self::passive(ChannelModel::Ideal)
    }
}

impl AdversaryScript {
    pub fn passive(quantum: ChannelModel) -> Self {
        Self { quantum, classical: Vec::new(), password_guess: None }
    }

    pub fn validate(&self, params: &ProtocolParams) -> Result<(), HarnessError> {
        self.quantum.validate().map_err(|e| HarnessError::Script(e.to_string()))?;
        if let Some(rule) = self.classical.iter().find(|r| r.tag == FlowTag::Zero) {
            return Err(HarnessError::Script(format!("flow {} is quantum and cannot carry a byte mutation", rule.tag)));
        }
        if let Some(g) = self.password_guess {
            params.check_password(g).map_err(|e| HarnessError::Script(e.to_string()))?;
        }
        Ok(())
    }

    pub fn tampers(&self) -> bool {
        self.classical.iter().any(|r| r.mutation.interferes())
    }

    pub fn tamper(&self) -> ScriptTamper<'_> {
        ScriptTamper { rules: &self.classical }
    }
}

/// Applies every rule for a flow's tag, in order.
pub struct ScriptTamper<'a> {
    rules: &'a [ClassicalRule],
}

impl WireTamper for ScriptTamper<'_> {
    fn tamper(&mut self, _from: Role, tag: FlowTag, bytes: Vec<u8>) -> Option<Vec<u8>> {
        self.rules.iter().filter(|r| r.tag == tag).try_fold(bytes, |b, r| r.mutation.apply(b))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mutations() {
        let b = vec![0u8, 1, 2];
        assert_eq!(Mutation::Drop.apply(b.clone()), None);
        assert_eq!(Mutation::Passthrough.apply(b.clone()), Some(b.clone()));
        assert_eq!(Mutation::Replace(vec![9]).apply(b.clone()), Some(vec![9]));
        let flip = Mutation::FlipBits { offset: 2, mask: vec![0x80, 0x01] };
        assert_eq!(flip.apply(b.clone()), Some(vec![1, 1, 0x82]));
        assert_eq!(flip.apply(vec![]), Some(vec![]));
        assert!(!Mutation::FlipBits { offset: 0, mask: vec![0] }.interferes());
    }

    #[test]
    fn rules_chain_per_tag() {
        let script = AdversaryScript {
            classical: vec![
                ClassicalRule { tag: FlowTag::Four, mutation: Mutation::FlipBits { offset: 0, mask: vec![1] } },
                ClassicalRule { tag: FlowTag::Four, mutation: Mutation::FlipBits { offset: 0, mask: vec![2] } },
                ClassicalRule { tag: FlowTag::Five, mutation: Mutation::Drop },
            ],
            ..AdversaryScript::default()
        };
        let mut t = script.tamper();
        assert_eq!(t.tamper(Role::Client, FlowTag::Four, vec![0]), Some(vec![3]));
        assert_eq!(t.tamper(Role::Client, FlowTag::Five, vec![0]), None);
        assert_eq!(t.tamper(Role::Server, FlowTag::One1, vec![0]), Some(vec![0]));
        assert!(script.tampers());
    }

    #[test]
    fn script_serde() {
        let json = r#"{"quantum":{"intercept_resend":"random_basis"},
            "classical":[{"tag":"four","mutation":{"flip_bits":{"offset":3,"mask":"ff"}}},
                         {"tag":"one2","mutation":"drop"}],
            "password_guess":3}"#;
        let s: AdversaryScript = serde_json::from_str(json).unwrap();
        assert_eq!(s.classical[0].mutation, Mutation::FlipBits { offset: 3, mask: vec![0xff] });
        assert_eq!(s.password_guess, Some(3));
        let back: AdversaryScript = serde_json::from_str(&serde_json::to_string(&s).unwrap()).unwrap();
        assert_eq!(back, s);
        assert!(serde_json::from_str::<AdversaryScript>(r#"{"classical":[{"tag":"six","mutation":"drop"}]}"#).is_err());
        assert_eq!(serde_json::from_str::<AdversaryScript>("{}").unwrap(), AdversaryScript::default());
    }
}
