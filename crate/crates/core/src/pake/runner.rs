//! Drives a client and a server to termination over a transport.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::flow::{Flow, FlowTag, WireRecord};
use super::session::{AbortReason, ClientSession, Input, Outcome, Role, ServerSession, TestCheck};
use super::ProtocolParams;
use crate::qchannel::{apply_channel, ChannelModel};
use crate::rng::{stream_rng, streams};
use crate::splitauth::LinkStep;

/// What the network did with a flow.
pub enum Delivery {
    Flow(Flow),
    /// Never arrives; the waiting party eventually times out.
    Dropped,
    /// Arrives but is rejected by the receiver's transport layer.
    Rejected(AbortReason),
}

/// Everything a transport needs to serialize flows.
pub struct WireContext<'a> {
    pub params: &'a ProtocolParams,
    pub session_id: u64,
    pub seed: u64,
}

/// Outcome of link initialization, before the first flow.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LinkResult {
    pub client_abort: Option<AbortReason>,
    pub server_abort: Option<AbortReason>,
}

pub trait Transport {
    /// Runs once before the first flow.
    fn begin(&mut self, _ctx: &WireContext<'_>) -> LinkResult {
        LinkResult::default()
    }

    fn deliver(&mut self, ctx: &WireContext<'_>, from: Role, flow: Flow) -> Delivery;
}

/// Byte-level interference with classical flows. Returning `None` drops the
/// message.
pub trait WireTamper {
    fn tamper(&mut self, from: Role, tag: FlowTag, bytes: Vec<u8>) -> Option<Vec<u8>>;

    /// Link-initialization messages of the compiled protocol.
    fn tamper_link(&mut self, _from: Role, _step: LinkStep, bytes: Vec<u8>) -> Option<Vec<u8>> {
        Some(bytes)
    }
}

/// Delivers flows unchanged, or routes classical flows through a
/// [`WireTamper`] as serialized records.
pub struct PlainTransport<'t> {
    tamper: Option<&'t mut dyn WireTamper>,
}

impl<'t> PlainTransport<'t> {
    pub fn new(tamper: Option<&'t mut dyn WireTamper>) -> Self {
        Self { tamper }
    }
}

impl Transport for PlainTransport<'_> {
    fn deliver(&mut self, ctx: &WireContext<'_>, from: Role, flow: Flow) -> Delivery {
        let Some(tamper) = self.tamper.as_deref_mut() else {
            return Delivery::Flow(flow);
        };
        let tag = flow.tag();
        if tag == FlowTag::Zero {
            return Delivery::Flow(flow);
        }
        let bytes = flow.to_wire(ctx.session_id, ctx.params).to_bytes();
        match tamper.tamper(from, tag, bytes) {
            None => Delivery::Dropped,
            Some(bytes) => decode_delivery(ctx, &bytes),
        }
    }
}

/// Parses received bytes; unparseable input reaches the receiver as an abort.
pub fn decode_delivery(ctx: &WireContext<'_>, bytes: &[u8]) -> Delivery {
    let parsed = WireRecord::from_bytes(bytes).and_then(|r| Flow::from_wire(&r, ctx.params));
    match parsed {
        Ok(flow) => Delivery::Flow(flow),
        Err(e) => Delivery::Rejected(AbortReason::Malformed(e.to_string())),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    ClientToServer,
    ServerToClient,
}

impl From<Role> for Direction {
    fn from(sender: Role) -> Self {
        match sender {
            Role::Client => Direction::ClientToServer,
            Role::Server => Direction::ServerToClient,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub direction: Direction,
    pub step: usize,
    pub record: WireRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptHeader {
    pub params: super::ParamSet,
    pub params_fingerprint: String,
    pub seed: u64,
    pub session_id: String,
    pub pw_client: u32,
    pub pw_server: u32,
}

/// Flows as sent, in order, with both final outcomes.
#[derive(Debug, Clone, PartialEq)]
pub struct Transcript {
    pub header: TranscriptHeader,
    pub entries: Vec<TranscriptEntry>,
    pub client: Outcome,
    pub server: Outcome,
}

impl Transcript {
    /// Entries whose tag precedes the mask exchange.
    pub fn before_masks(&self) -> &[TranscriptEntry] {
        let cut = self.entries.iter().position(|e| e.record.tag.after_tests()).unwrap_or(self.entries.len());
        &self.entries[..cut]
    }

    /// Line-delimited JSON: the header, one line per flow, then the outcomes.
    pub fn to_jsonl(&self) -> String {
        let mut out = serde_json::json!({ "header": self.header }).to_string();
        out.push('\n');
        for e in &self.entries {
            out.push_str(&serde_json::to_string(e).expect("entries serialize"));
            out.push('\n');
        }
        let outcome = serde_json::json!({
            "client": outcome_summary(&self.client),
            "server": outcome_summary(&self.server),
        });
        out.push_str(&outcome.to_string());
        out.push('\n');
        out
    }
}

pub fn outcome_summary(o: &Outcome) -> serde_json::Value {
    match o {
        Outcome::Pending => serde_json::json!({ "pending": true }),
        Outcome::Key(k) => serde_json::json!({ "key": k.0.to_hex() }),
        Outcome::Abort(r) => serde_json::json!({ "abort": r.to_string() }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SessionOptions {
    pub record_transcript: bool,
}

/// Side information gathered from both parties after the run.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Diagnostics {
    pub t1: Option<TestCheck>,
    pub t2: Option<TestCheck>,
    pub sifted_len: Option<usize>,
    /// Hamming distance between the two parties' padded blocks.
    pub block_errors: Option<usize>,
    pub decode_failed: bool,
    pub flows_delivered: usize,
    /// Envelopes accepted whose payload the peer never sent.
    pub accepted_forgeries: usize,
}

#[derive(Debug, Clone)]
pub struct SessionResult {
    pub client: Outcome,
    pub server: Outcome,
    pub transcript: Option<Transcript>,
    pub diagnostics: Diagnostics,
}

impl SessionResult {
    pub fn any_abort(&self) -> bool {
        self.client.is_abort() || self.server.is_abort()
    }

    pub fn both_keys(&self) -> Option<(&super::SessionKey, &super::SessionKey)> {
        Some((self.client.key()?, self.server.key()?))
    }

    pub fn keys_agree(&self) -> bool {
        self.both_keys().is_some_and(|(a, b)| a == b)
    }
}

/// Anything that can execute one protocol session. [`PlainRunner`] sends
/// classical flows as they are; the split-authentication compiler wraps a
/// runner in signed envelopes.
pub trait SessionRunner: Sync {
    #[allow(clippy::too_many_arguments)]
    fn run_over(
        &self,
        params: &Arc<ProtocolParams>,
        pw_client: u32,
        pw_server: u32,
        channel: &ChannelModel,
        transport: &mut dyn Transport,
        seed: u64,
        opts: SessionOptions,
    ) -> SessionResult;

    #[allow(clippy::too_many_arguments)]
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
        let mut transport = PlainTransport::new(tamper);
        self.run_over(params, pw_client, pw_server, channel, &mut transport, seed, opts)
    }

    fn is_compiled(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct PlainRunner;

impl SessionRunner for PlainRunner {
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
        run_session_over(params, pw_client, pw_server, channel, transport, seed, opts)
    }
}

/// One session over the plain transport with an optional classical tamper.
pub fn run_session(
    params: &Arc<ProtocolParams>,
    pw_client: u32,
    pw_server: u32,
    channel: &ChannelModel,
    tamper: Option<&mut dyn WireTamper>,
    seed: u64,
    opts: SessionOptions,
) -> SessionResult {
    PlainRunner.run(params, pw_client, pw_server, channel, tamper, seed, opts)
}

/// Upper bound on deliveries; an honest run needs 11.
const MAX_DELIVERIES: usize = 32;

pub fn run_session_over(
    params: &Arc<ProtocolParams>,
    pw_client: u32,
    pw_server: u32,
    channel: &ChannelModel,
    transport: &mut dyn Transport,
    seed: u64,
    opts: SessionOptions,
) -> SessionResult {
    let mut client = ClientSession::new(params.clone(), pw_client, seed).expect("client password checked by caller");
    let mut server = ServerSession::new(params.clone(), pw_server, seed).expect("server password checked by caller");
    let mut channel_rng = stream_rng(seed, streams::QUANTUM_CHANNEL);
    let ctx = WireContext { params, session_id: seed, seed };
    let mut entries = Vec::new();
    let mut delivered = 0;

    let link = transport.begin(&ctx);
    if let Some(r) = link.client_abort {
        client.abort(r);
    }
    if let Some(r) = link.server_abort {
        server.abort(r);
    }

    let mut in_flight: Option<(Role, Flow)> = None;
    let mut steps = 0;
    while steps < MAX_DELIVERIES {
        steps += 1;
        let (from, flow) = match in_flight.take() {
            Some(next) => next,
            None if client.wants_activation() => match client.advance(Input::Activate) {
                Some(flow) => (Role::Client, flow),
                None => break,
            },
            None => break,
        };
        if opts.record_transcript {
            entries.push(TranscriptEntry {
                direction: from.into(),
                step: steps,
                record: flow.to_wire(seed, params),
            });
        }
        let flow = match flow {
            Flow::Zero(reg) => match apply_channel(reg, channel, &mut channel_rng) {
                Ok(reg) => Flow::Zero(reg),
                Err(e) => {
                    server.abort(AbortReason::Malformed(e.to_string()));
                    break;
                }
            },
            other => other,
        };
        match transport.deliver(&ctx, from, flow) {
            Delivery::Flow(flow) => {
                delivered += 1;
                let reply = match from.peer() {
                    Role::Client => client.advance(Input::Flow(flow)),
                    Role::Server => server.advance(Input::Flow(flow)),
                };
                in_flight = reply.map(|f| (from.peer(), f));
            }
            Delivery::Dropped => break,
            Delivery::Rejected(reason) => {
                match from.peer() {
                    Role::Client => client.abort(reason),
                    Role::Server => server.abort(reason),
                }
                break;
            }
        }
    }
    client.abort(AbortReason::Timeout);
    server.abort(AbortReason::Timeout);

    let block_errors = match (client.block(), server.block()) {
        (Some(a), Some(b)) => a.hamming_distance(b).ok(),
        _ => None,
    };
    let diagnostics = Diagnostics {
        t1: client.t1_check(),
        t2: server.t2_check(),
        sifted_len: client.sifted_positions().or(server.sifted_positions()).map(<[usize]>::len),
        block_errors,
        decode_failed: server.decode_failed(),
        flows_delivered: delivered,
        accepted_forgeries: 0,
    };
    let transcript = opts.record_transcript.then(|| Transcript {
        header: TranscriptHeader {
            params: params.set.clone(),
            params_fingerprint: params.fingerprint().to_string(),
            seed,
            session_id: crate::hexfmt::encode_u64(seed),
            pw_client,
            pw_server,
        },
        entries,
        client: client.outcome().clone(),
        server: server.outcome().clone(),
    });
    SessionResult { client: client.outcome().clone(), server: server.outcome().clone(), transcript, diagnostics }
}
