//! Split authentication: signed envelopes around every classical flow.
//!
//! Each party generates a signature key, the parties swap verification keys,
//! and both derive a session id from the two `(party, vk)` pairs. A signed
//! confirmation of that id closes link initialization. Afterwards every
//! classical message travels as an envelope signed over
//! `sid || m || recipient || counter`, and a receiver accepts each counter
//! at most once.
//!
//! A man in the middle who substitutes keys ends up with two separate links,
//! one to each party, and can never make the parties share a link with each
//! other. The quantum flow is not signed; tampering with it shows up in the
//! error-rate tests instead.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::{sig_keygen, sign, verify_sig, Element, GroupParams, SigKeyPair, Signature};
use crate::hexfmt;
use crate::pake::{
    decode_delivery, AbortReason, Delivery, Flow, FlowTag, LinkResult, ProtocolParams, Role,
    SessionOptions, SessionResult, SessionRunner, Transport, WireContext, WireTamper,
};
use crate::qchannel::ChannelModel;
use crate::rng::{stream_rng, streams, SimRng};

/// Counter value reserved for the link confirmation signature.
const CONFIRM_COUNTER: u64 = u64::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PartyId(pub u8);

impl From<Role> for PartyId {
    fn from(role: Role) -> Self {
        match role {
            Role::Client => PartyId(0),
            Role::Server => PartyId(1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LinkStep {
    Key,
    Confirm,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LinkError {
    #[error("malformed link message: {0}")]
    Malformed(String),
    #[error("message claims sender {found:?}, expected {expected:?}")]
    WrongSender { expected: PartyId, found: PartyId },
    #[error("session ids differ")]
    SidMismatch,
    #[error("signature does not verify")]
    BadSignature,
    #[error("counter {0} was already accepted")]
    Replay(u64),
    #[error("counter {0} is reserved")]
    ReservedCounter(u64),
    #[error("peer never answered")]
    Timeout,
}

fn put_len_prefixed(out: &mut Vec<u8>, bytes: &[u8]) {
    out.extend_from_slice(&(bytes.len() as u32).to_be_bytes());
    out.extend_from_slice(bytes);
}

/// Canonical session id: the two `(party, vk)` pairs in ascending order,
/// each field length-prefixed.
pub fn session_id(group: &GroupParams, a: (PartyId, &Element), b: (PartyId, &Element)) -> Vec<u8> {
    let mut pairs = [(a.0, group.element_to_bytes(a.1)), (b.0, group.element_to_bytes(b.1))];
    pairs.sort();
    let mut sid = Vec::new();
    for (id, vk) in &pairs {
        put_len_prefixed(&mut sid, &[id.0]);
        put_len_prefixed(&mut sid, vk);
    }
    sid
}

/// The byte string covered by an envelope signature.
pub fn signed_tuple(sid: &[u8], m: &[u8], recipient: PartyId, counter: u64) -> Vec<u8> {
    let mut out = Vec::with_capacity(sid.len() + m.len() + 25);
    put_len_prefixed(&mut out, sid);
    put_len_prefixed(&mut out, m);
    put_len_prefixed(&mut out, &[recipient.0]);
    put_len_prefixed(&mut out, &counter.to_be_bytes());
    out
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct KeyMessage {
    sender: PartyId,
    vk: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfirmMessage {
    sender: PartyId,
    sid: String,
    sig: String,
}

fn parse_json<'a, T: Deserialize<'a>>(bytes: &'a [u8]) -> Result<T, LinkError> {
    serde_json::from_slice(bytes).map_err(|e| LinkError::Malformed(e.to_string()))
}

fn check_sender(expected: PartyId, found: PartyId) -> Result<(), LinkError> {
    if expected == found {
        Ok(())
    } else {
        Err(LinkError::WrongSender { expected, found })
    }
}

/// First stage of link initialization: own key generated, peer key pending.
pub struct LinkInit {
    id: PartyId,
    group: Arc<GroupParams>,
    keys: SigKeyPair,
    rng: SimRng,
}

impl LinkInit {
    pub fn new(id: PartyId, group: Arc<GroupParams>, mut rng: SimRng) -> Self {
        let keys = sig_keygen(&group, &mut rng);
        Self { id, group, keys, rng }
    }

    fn peer(&self) -> PartyId {
        PartyId(1 - self.id.0)
    }

    pub fn vk(&self) -> &Element {
        &self.keys.vk
    }

    pub fn key_message(&self) -> Vec<u8> {
        let msg = KeyMessage { sender: self.id, vk: self.group.element_to_hex(&self.keys.vk) };
        serde_json::to_vec(&msg).expect("key message serializes")
    }

    pub fn receive_key(self, bytes: &[u8]) -> Result<LinkPending, LinkError> {
        let msg: KeyMessage = parse_json(bytes)?;
        check_sender(self.peer(), msg.sender)?;
        let peer_vk = self.group.element_from_hex(&msg.vk).map_err(|e| LinkError::Malformed(e.to_string()))?;
        let sid = session_id(&self.group, (self.id, &self.keys.vk), (self.peer(), &peer_vk));
        Ok(LinkPending { init: self, peer_vk, sid })
    }
}

/// Second stage: session id formed, waiting for the peer's confirmation.
pub struct LinkPending {
    init: LinkInit,
    peer_vk: Element,
    sid: Vec<u8>,
}

impl LinkPending {
    pub fn sid(&self) -> &[u8] {
        &self.sid
    }

    /// Signs the session id for the peer.
    pub fn confirm_message(&mut self) -> Vec<u8> {
        let init = &mut self.init;
        let tuple = signed_tuple(&self.sid, &[], init.peer(), CONFIRM_COUNTER);
        let sig = sign(&init.group, &init.keys, &tuple, &mut init.rng);
        let msg = ConfirmMessage { sender: init.id, sid: hexfmt::encode(&self.sid), sig: sig.to_hex(&init.group) };
        serde_json::to_vec(&msg).expect("confirm message serializes")
    }

    pub fn receive_confirm(self, bytes: &[u8]) -> Result<LinkState, LinkError> {
        let init = self.init;
        let msg: ConfirmMessage = parse_json(bytes)?;
        check_sender(init.peer(), msg.sender)?;
        let their_sid = hexfmt::decode(&msg.sid).map_err(|e| LinkError::Malformed(e.to_string()))?;
        if their_sid != self.sid {
            return Err(LinkError::SidMismatch);
        }
        let sig = Signature::from_hex(&init.group, &msg.sig).map_err(|e| LinkError::Malformed(e.to_string()))?;
        let tuple = signed_tuple(&self.sid, &[], init.id, CONFIRM_COUNTER);
        if !verify_sig(&init.group, &self.peer_vk, &tuple, &sig) {
            return Err(LinkError::BadSignature);
        }
        Ok(LinkState {
            id: init.id,
            group: init.group,
            keys: init.keys,
            rng: init.rng,
            peer_vk: self.peer_vk,
            sid: self.sid,
            send_counter: 0,
            seen: BTreeSet::new(),
        })
    }
}

/// An established link as seen by one endpoint.
pub struct LinkState {
    id: PartyId,
    group: Arc<GroupParams>,
    keys: SigKeyPair,
    rng: SimRng,
    peer_vk: Element,
    sid: Vec<u8>,
    send_counter: u64,
    seen: BTreeSet<u64>,
}

impl LinkState {
    pub fn id(&self) -> PartyId {
        self.id
    }

    pub fn peer(&self) -> PartyId {
        PartyId(1 - self.id.0)
    }

    pub fn sid(&self) -> &[u8] {
        &self.sid
    }

    pub fn vk(&self) -> &Element {
        &self.keys.vk
    }

    pub fn send_counter(&self) -> u64 {
        self.send_counter
    }

    pub fn wrap(&mut self, m: &[u8]) -> SignedEnvelope {
        let counter = self.send_counter;
        self.send_counter += 1;
        let tuple = signed_tuple(&self.sid, m, self.peer(), counter);
        let sig = sign(&self.group, &self.keys, &tuple, &mut self.rng);
        SignedEnvelope { sender: self.id, counter, m: m.to_vec(), sig: sig.to_hex(&self.group) }
    }

    /// Accepts an envelope iff its counter is fresh and the signature covers
    /// this link's sid, the payload, this party as recipient and the counter.
    pub fn unwrap(&mut self, env: &SignedEnvelope) -> Result<Vec<u8>, LinkError> {
        check_sender(self.peer(), env.sender)?;
        if env.counter == CONFIRM_COUNTER {
            return Err(LinkError::ReservedCounter(env.counter));
        }
        if self.seen.contains(&env.counter) {
            return Err(LinkError::Replay(env.counter));
        }
        let sig = Signature::from_hex(&self.group, &env.sig).map_err(|e| LinkError::Malformed(e.to_string()))?;
        let tuple = signed_tuple(&self.sid, &env.m, self.id, env.counter);
        if !verify_sig(&self.group, &self.peer_vk, &tuple, &sig) {
            return Err(LinkError::BadSignature);
        }
        self.seen.insert(env.counter);
        Ok(env.m.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignedEnvelope {
    pub sender: PartyId,
    pub counter: u64,
    pub m: Vec<u8>,
    /// Hex-encoded signature.
    pub sig: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EnvelopeWire {
    sender: PartyId,
    counter: String,
    m: String,
    sig: String,
}

impl SignedEnvelope {
    /// `{"sender", "counter" (16 hex digits, big-endian), "m" (hex), "sig" (hex)}`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let wire = EnvelopeWire {
            sender: self.sender,
            counter: hexfmt::encode_u64(self.counter),
            m: hexfmt::encode(&self.m),
            sig: self.sig.clone(),
        };
        serde_json::to_vec(&wire).expect("envelope serializes")
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, LinkError> {
        let wire: EnvelopeWire = parse_json(bytes)?;
        let bad = |e: hexfmt::HexError| LinkError::Malformed(e.to_string());
        Ok(Self {
            sender: wire.sender,
            counter: hexfmt::decode_u64(&wire.counter).map_err(bad)?,
            m: hexfmt::decode(&wire.m).map_err(bad)?,
            sig: wire.sig,
        })
    }
}

/// Runs link initialization between both parties, passing each message
/// through `tamper`. Returns the client's and the server's result.
pub fn link_init_pair(
    group: &Arc<GroupParams>,
    seed: u64,
    mut tamper: Option<&mut dyn WireTamper>,
) -> (Result<LinkState, LinkError>, Result<LinkState, LinkError>) {
    let roles = [Role::Client, Role::Server];
    let streams = [streams::LINK_CLIENT, streams::LINK_SERVER];
    let inits = roles.map(|r| LinkInit::new(r.into(), group.clone(), stream_rng(seed, streams[r as usize])));
    let mut relay = |from: Role, step: LinkStep, bytes: Vec<u8>| match tamper.as_deref_mut() {
        Some(t) => t.tamper_link(from, step, bytes),
        None => Some(bytes),
    };

    let key_msgs = inits.each_ref().map(|i| i.key_message());
    let [client_key, server_key] = key_msgs;
    let to_server = relay(Role::Client, LinkStep::Key, client_key);
    let to_client = relay(Role::Server, LinkStep::Key, server_key);
    let [client_init, server_init] = inits;
    let receive = |init: LinkInit, msg: Option<Vec<u8>>| match msg {
        Some(bytes) => init.receive_key(&bytes),
        None => Err(LinkError::Timeout),
    };
    let mut pending = [receive(client_init, to_client), receive(server_init, to_server)];

    let confirms = pending.each_mut().map(|p| p.as_mut().ok().map(LinkPending::confirm_message));
    let [client_confirm, server_confirm] = confirms;
    let to_server = client_confirm.and_then(|b| relay(Role::Client, LinkStep::Confirm, b));
    let to_client = server_confirm.and_then(|b| relay(Role::Server, LinkStep::Confirm, b));
    let finish = |p: Result<LinkPending, LinkError>, msg: Option<Vec<u8>>| {
        let p = p?;
        match msg {
            Some(bytes) => p.receive_confirm(&bytes),
            None => Err(LinkError::Timeout),
        }
    };
    let [client_pending, server_pending] = pending;
    (finish(client_pending, to_client), finish(server_pending, to_server))
}

/// Carries classical flows as signed envelopes. An optional inner transport
/// sees the flows first, as the network would; whatever it delivers is put
/// into the envelope in place of the original payload, so any change fails
/// verification. The tamper, if any, then acts on the envelope bytes.
pub struct CompiledTransport<'a> {
    net: Option<&'a mut dyn Transport>,
    tamper: Option<&'a mut dyn WireTamper>,
    links: [Option<LinkState>; 2],
    sent: BTreeMap<(PartyId, u64), Vec<u8>>,
    forgeries: usize,
}

impl<'a> CompiledTransport<'a> {
    pub fn new(net: Option<&'a mut dyn Transport>, tamper: Option<&'a mut dyn WireTamper>) -> Self {
        Self { net, tamper, links: [None, None], sent: BTreeMap::new(), forgeries: 0 }
    }

    /// Accepted envelopes whose payload differs from what the sender wrapped.
    pub fn forgeries(&self) -> usize {
        self.forgeries
    }

    fn link(&mut self, role: Role) -> Option<&mut LinkState> {
        self.links[role as usize].as_mut()
    }
}

impl Transport for CompiledTransport<'_> {
    fn begin(&mut self, ctx: &WireContext<'_>) -> LinkResult {
        let mut result = match self.net.as_deref_mut() {
            Some(net) => net.begin(ctx),
            None => LinkResult::default(),
        };
        let tamper = self.tamper.as_mut().map(|t| &mut **t as &mut dyn WireTamper);
        let (client, server) = link_init_pair(&ctx.params.group, ctx.seed, tamper);
        let settle = |link: Result<LinkState, LinkError>, slot: &mut Option<AbortReason>| match link {
            Ok(state) => Some(state),
            Err(e) => {
                slot.get_or_insert(AbortReason::Link(e.to_string()));
                None
            }
        };
        self.links = [settle(client, &mut result.client_abort), settle(server, &mut result.server_abort)];
        result
    }

    fn deliver(&mut self, ctx: &WireContext<'_>, from: Role, flow: Flow) -> Delivery {
        let tag = flow.tag();
        if tag == FlowTag::Zero {
            return match self.net.as_deref_mut() {
                Some(net) => net.deliver(ctx, from, flow),
                None => Delivery::Flow(flow),
            };
        }
        let payload = flow.to_wire(ctx.session_id, ctx.params).to_bytes();
        let Some(sender) = self.link(from) else {
            return Delivery::Dropped;
        };
        let mut env = sender.wrap(&payload);
        self.sent.insert((env.sender, env.counter), payload);

        if let Some(net) = self.net.as_deref_mut() {
            match net.deliver(ctx, from, flow) {
                Delivery::Flow(delivered) => env.m = delivered.to_wire(ctx.session_id, ctx.params).to_bytes(),
                other => return other,
            }
        }
        let mut bytes = env.to_bytes();
        if let Some(t) = self.tamper.as_deref_mut() {
            match t.tamper(from, tag, bytes) {
                Some(b) => bytes = b,
                None => return Delivery::Dropped,
            }
        }

        let received = SignedEnvelope::from_bytes(&bytes);
        let Some(receiver) = self.link(from.peer()) else {
            return Delivery::Dropped;
        };
        let accepted = received.and_then(|env| receiver.unwrap(&env).map(|m| (env.sender, env.counter, m)));
        match accepted {
            Ok((sender, counter, m)) => {
                if self.sent.get(&(sender, counter)) != Some(&m) {
                    self.forgeries += 1;
                }
                decode_delivery(ctx, &m)
            }
            Err(e) => Delivery::Rejected(AbortReason::Link(e.to_string())),
        }
    }
}

/// A session runner whose classical flows are carried by [`CompiledTransport`].
#[derive(Debug, Clone, Copy, Default)]
pub struct CompiledRunner<R> {
    inner: R,
}

pub fn compile<R: SessionRunner>(inner: R) -> CompiledRunner<R> {
    CompiledRunner { inner }
}

impl<R: SessionRunner> CompiledRunner<R> {
    fn run_compiled(
        &self,
        params: &Arc<ProtocolParams>,
        pw: (u32, u32),
        channel: &ChannelModel,
        mut transport: CompiledTransport<'_>,
        seed: u64,
        opts: SessionOptions,
    ) -> SessionResult {
        let mut result = self.inner.run_over(params, pw.0, pw.1, channel, &mut transport, seed, opts);
        result.diagnostics.accepted_forgeries += transport.forgeries();
        result
    }
}

impl<R: SessionRunner> SessionRunner for CompiledRunner<R> {
    fn run_over(
        &self,
        params: &Arc<ProtocolParams>,
        pw_client: u32,
        pw_server: u32,
        channel: &ChannelModel,
        transport: &mut dyn Transport,
        seed: u64,
        opts: SessionOptions,
    ) -> SessionResult {
        let compiled = CompiledTransport::new(Some(transport), None);
        self.run_compiled(params, (pw_client, pw_server), channel, compiled, seed, opts)
    }

    fn run(
        &self,
        params: &Arc<ProtocolParams>,
        pw_client: u32,
        pw_server: u32,
        channel: &ChannelModel,
        tamper: Option<&mut dyn WireTamper>,
        seed: u64,
        opts: SessionOptions,
    ) -> SessionResult {
        let compiled = CompiledTransport::new(None, tamper);
        self.run_compiled(params, (pw_client, pw_server), channel, compiled, seed, opts)
    }

    fn is_compiled(&self) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::GroupPreset;
    use crate::pake::{run_session, Outcome, ParamSet, PlainRunner, WireRecord};
    use crate::qchannel::InterceptStrategy;
    use rand::{Rng, SeedableRng};

    fn group() -> Arc<GroupParams> {
        Arc::new(GroupParams::preset(GroupPreset::Sim64))
    }

    fn params() -> Arc<ProtocolParams> {
        let set = ParamSet { k: 64, lambda: 8, group: GroupPreset::Sim64, ..ParamSet::default() };
        Arc::new(ProtocolParams::setup(set).unwrap())
    }

    fn honest_links(seed: u64) -> (LinkState, LinkState) {
        let (a, b) = link_init_pair(&group(), seed, None);
        (a.unwrap(), b.unwrap())
    }

    /// Applies `f` to link messages of one step and direction.
    struct LinkEdit<F: FnMut(Vec<u8>) -> Option<Vec<u8>>> {
        from: Role,
        step: LinkStep,
        f: F,
    }

    impl<F: FnMut(Vec<u8>) -> Option<Vec<u8>>> WireTamper for LinkEdit<F> {
        fn tamper(&mut self, _: Role, _: FlowTag, bytes: Vec<u8>) -> Option<Vec<u8>> {
            Some(bytes)
        }

        fn tamper_link(&mut self, from: Role, step: LinkStep, bytes: Vec<u8>) -> Option<Vec<u8>> {
            if from == self.from && step == self.step {
                (self.f)(bytes)
            } else {
                Some(bytes)
            }
        }
    }

    #[test]
    fn honest_links_share_a_sid() {
        for seed in 0..5 {
            let (a, b) = honest_links(seed);
            assert_eq!(a.sid(), b.sid());
            assert_eq!((a.id(), b.id()), (PartyId(0), PartyId(1)));
        }
    }

    #[test]
    fn sid_is_canonical() {
        let g = group();
        let mut rng = stream_rng(1, 0);
        let (x, y) = (sig_keygen(&g, &mut rng).vk, sig_keygen(&g, &mut rng).vk);
        assert_eq!(session_id(&g, (PartyId(0), &x), (PartyId(1), &y)), session_id(&g, (PartyId(1), &y), (PartyId(0), &x)));
        assert_ne!(session_id(&g, (PartyId(0), &x), (PartyId(1), &y)), session_id(&g, (PartyId(0), &y), (PartyId(1), &x)));
    }

    #[test]
    fn substituted_key_aborts_link() {
        let g = group();
        let fake = g.element_to_hex(&sig_keygen(&g, &mut stream_rng(99, 0)).vk);
        for from in [Role::Client, Role::Server] {
            let id = PartyId::from(from).0;
            let mut edit = LinkEdit {
                from,
                step: LinkStep::Key,
                f: |_| Some(format!(r#"{{"sender":{id},"vk":"{fake}"}}"#).into_bytes()),
            };
            let (a, b) = link_init_pair(&g, 3, Some(&mut edit));
            assert!(a.is_err() || b.is_err());
        }
    }

    fn relabel(msg: Vec<u8>) -> Vec<u8> {
        String::from_utf8(msg).unwrap().replace(r#""sender":0"#, r#""sender":1"#).into_bytes()
    }

    #[test]
    fn reflected_confirmation_aborts() {
        let g = group();
        let b_key = LinkInit::new(PartyId(1), g.clone(), stream_rng(1, 6)).key_message();
        let pending = || LinkInit::new(PartyId(0), g.clone(), stream_rng(1, 5)).receive_key(&b_key).unwrap();
        let mut pa = pending();
        let own = pa.confirm_message();
        assert!(matches!(pa.receive_confirm(&own), Err(LinkError::WrongSender { .. })));
        // relabeled so the sender check passes; the signature still names B as recipient
        let mut pa = pending();
        let own = relabel(pa.confirm_message());
        assert_eq!(pa.receive_confirm(&own).err(), Some(LinkError::BadSignature));
    }

    #[test]
    fn reflected_key_and_confirmation_abort() {
        // the adversary also bounces A's key back, so both sid entries carry A's key
        let g = group();
        let init = LinkInit::new(PartyId(0), g.clone(), stream_rng(4, 5));
        let fake_key = relabel(init.key_message());
        let mut pending = init.receive_key(&fake_key).unwrap();
        let own = relabel(pending.confirm_message());
        assert_eq!(pending.receive_confirm(&own).err(), Some(LinkError::BadSignature));
    }

    #[test]
    fn counters_and_round_trip() {
        let (mut a, mut b) = honest_links(7);
        let envs: Vec<SignedEnvelope> = (0..3).map(|i| a.wrap(&[i])).collect();
        assert_eq!(envs.iter().map(|e| e.counter).collect::<Vec<_>>(), vec![0, 1, 2]);
        for (i, env) in envs.iter().enumerate() {
            let parsed = SignedEnvelope::from_bytes(&env.to_bytes()).unwrap();
            assert_eq!(&parsed, env);
            assert_eq!(b.unwrap(&parsed).unwrap(), vec![i as u8]);
        }
        assert_eq!(b.unwrap(&envs[1]), Err(LinkError::Replay(1)));
        let (mut a2, _) = honest_links(7);
        assert_eq!(a2.wrap(&[0]), envs[0]);
    }

    #[test]
    fn envelope_wire_format() {
        let (mut a, _) = honest_links(1);
        let env = a.wrap(b"hi");
        let v: serde_json::Value = serde_json::from_slice(&env.to_bytes()).unwrap();
        assert_eq!(v["sender"], 0);
        assert_eq!(v["counter"], "0000000000000000");
        assert_eq!(v["m"], "6869");
        assert!(SignedEnvelope::from_bytes(br#"{"sender":0,"counter":"00","m":"","sig":""}"#).is_err());
        assert!(SignedEnvelope::from_bytes(br#"{"sender":0,"counter":"0000000000000000","m":"","sig":"","x":1}"#).is_err());
    }

    #[test]
    fn recipient_binding() {
        let (mut a, mut b) = honest_links(2);
        let to_b = a.wrap(b"m");
        // delivered back to its sender
        assert!(matches!(a.unwrap(&to_b), Err(LinkError::WrongSender { .. })));
        // relabeled as if B had sent it to A
        let forged = SignedEnvelope { sender: PartyId(1), ..to_b.clone() };
        assert_eq!(a.unwrap(&forged), Err(LinkError::BadSignature));
        assert_eq!(b.unwrap(&to_b).unwrap(), b"m");
        let reserved = SignedEnvelope { counter: CONFIRM_COUNTER, ..a.wrap(b"m") };
        assert_eq!(b.unwrap(&reserved), Err(LinkError::ReservedCounter(CONFIRM_COUNTER)));
    }

    #[test]
    fn random_mutations_are_rejected() {
        let (mut a, mut b) = honest_links(11);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        for trial in 0..1000 {
            let m: Vec<u8> = (0..rng.gen_range(1..40)).map(|_| rng.gen()).collect();
            let env = a.wrap(&m);
            let mut bad = env.clone();
            let bit = rng.gen_range(0..8 * m.len());
            bad.m[bit / 8] ^= 1 << (bit % 8);
            assert!(b.unwrap(&bad).is_err(), "payload mutation {trial}");
            let mut bytes = env.to_bytes();
            let bit = rng.gen_range(0..8 * bytes.len());
            bytes[bit / 8] ^= 1 << (bit % 8);
            let accepted = SignedEnvelope::from_bytes(&bytes).and_then(|e| b.unwrap(&e));
            assert!(accepted.is_err(), "byte mutation {trial}");
            assert_eq!(b.unwrap(&env).unwrap(), m);
        }
    }

    #[test]
    fn compiled_honest_runs_match_plain() {
        let p = params();
        let compiled = compile(PlainRunner);
        for seed in 0..10 {
            let opts = SessionOptions { record_transcript: true };
            let plain = run_session(&p, 4, 4, &ChannelModel::BitFlip(0.01), None, seed, opts);
            let comp = compiled.run(&p, 4, 4, &ChannelModel::BitFlip(0.01), None, seed, opts);
            assert_eq!(plain.client, comp.client);
            assert_eq!(plain.server, comp.server);
            assert_eq!(plain.transcript, comp.transcript);
            assert_eq!(comp.diagnostics.accepted_forgeries, 0);
        }
        assert!(compiled.is_compiled());
    }

    /// Shifts the syndrome by that of a weight-one error, so the receiver
    /// decodes to a block one bit away from the sender's.
    fn shift_syndrome(p: &ProtocolParams, record: &[u8]) -> Vec<u8> {
        let rec = WireRecord::from_bytes(record).unwrap();
        let Flow::Four { j, syndrome } = Flow::from_wire(&rec, p).unwrap() else { panic!() };
        let mut e = crate::gf2::BitString::zeros(p.ell());
        e.set(0, true);
        let shift = p.family.code(j).unwrap().syndrome(&e).unwrap();
        let sid = hexfmt::decode_u64(&rec.session_id).unwrap();
        Flow::Four { j, syndrome: syndrome.xor(&shift) }.to_wire(sid, p).to_bytes()
    }

    struct ShiftFour {
        params: Arc<ProtocolParams>,
        compiled: bool,
    }

    impl WireTamper for ShiftFour {
        fn tamper(&mut self, _: Role, tag: FlowTag, bytes: Vec<u8>) -> Option<Vec<u8>> {
            if tag != FlowTag::Four {
                return Some(bytes);
            }
            if !self.compiled {
                return Some(shift_syndrome(&self.params, &bytes));
            }
            let mut env = SignedEnvelope::from_bytes(&bytes).unwrap();
            env.m = shift_syndrome(&self.params, &env.m);
            Some(env.to_bytes())
        }
    }

    #[test]
    fn syndrome_tamper_is_caught_only_when_compiled() {
        let p = params();
        assert!(p.family.radius() >= 1);
        let mut diverged = 0;
        for seed in 0..10 {
            let mut plain_tamper = ShiftFour { params: p.clone(), compiled: false };
            let plain = run_session(&p, 1, 1, &ChannelModel::Ideal, Some(&mut plain_tamper), seed, Default::default());
            if plain.both_keys().is_some() && !plain.keys_agree() {
                diverged += 1;
            }
            let mut tamper = ShiftFour { params: p.clone(), compiled: true };
            let comp = compile(PlainRunner).run(&p, 1, 1, &ChannelModel::Ideal, Some(&mut tamper), seed, Default::default());
            assert!(comp.server.is_abort(), "seed {seed}: {:?}", comp.server);
            assert_eq!(comp.diagnostics.accepted_forgeries, 0);
        }
        assert!(diverged > 0);
    }

    /// A network that rewrites flows below the envelope layer.
    struct FlowRewrite;

    impl Transport for FlowRewrite {
        fn deliver(&mut self, _: &WireContext<'_>, _: Role, flow: Flow) -> Delivery {
            match flow {
                Flow::Three1(mask) => Delivery::Flow(Flow::Three1(mask.xor(&crate::gf2::BitString::ones(mask.len())))),
                other => Delivery::Flow(other),
            }
        }
    }

    #[test]
    fn network_rewrites_fail_verification() {
        let p = params();
        let r = compile(PlainRunner).run_over(&p, 0, 0, &ChannelModel::Ideal, &mut FlowRewrite, 5, Default::default());
        let link_abort = |o: &Outcome| matches!(o, Outcome::Abort(AbortReason::Link(_)));
        assert!(link_abort(&r.client) || link_abort(&r.server), "{:?} {:?}", r.client, r.server);
        assert!(r.both_keys().is_none());
    }

    #[test]
    fn quantum_attacks_pass_through_unchanged() {
        let p = params();
        let eve = ChannelModel::InterceptResend(InterceptStrategy::RandomBasis);
        for seed in 0..30 {
            let plain = run_session(&p, 2, 2, &eve, None, seed, Default::default());
            let comp = compile(PlainRunner).run(&p, 2, 2, &eve, None, seed, Default::default());
            assert_eq!(plain.client, comp.client);
            assert_eq!(plain.server, comp.server);
        }
    }

    #[test]
    fn dropped_link_message_times_out() {
        let p = params();
        let mut edit = LinkEdit { from: Role::Server, step: LinkStep::Confirm, f: |_| None };
        let r = compile(PlainRunner).run(&p, 0, 0, &ChannelModel::Ideal, Some(&mut edit), 1, Default::default());
        assert_eq!(r.client, Outcome::Abort(AbortReason::Link(LinkError::Timeout.to_string())));
        assert!(r.server.is_abort());
    }
}
