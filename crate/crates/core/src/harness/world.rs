//! The simulated world: one MNO, the shops' terminals and the customers'
//! devices, joined by an NFC link and a backhaul link, driven by a FIFO
//! event queue over a simulated clock.
//!
//! Every frame belongs to a flow: an honest purchase, or an attack attempt
//! opened by the adversary. Aborts, settlements and ledger entries are
//! attributed to the flow of the frame that caused them, and the first
//! terminal event of a flow is its verdict. Replies to injected frames go
//! back to the adversary instead of to the honest party.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::sync::Arc;

use sha2::{Digest, Sha256};

use super::adversary::{Action, Adversary, Hook, Observed};
use super::outcome::{Assertion, ScenarioOutcome, SessionReport, Verdict};
use super::HarnessError;
use crate::codec::{self, Message, TransactionResult};
use crate::crypto::{Crypto, CryptoSuite, HashSuite, KeyKind, Probe, SimRng, SubscriberKey};
use crate::mno::{Mno, MnoPolicy, SessionId, TxRejection};
use crate::mobile::{
    ConfirmOutcome, Mobile, OfferOutcome, ReceiptVerdict, SettlementReceipt, SimState, TrustAnchors, UserResponse,
};
use crate::pos::{Dispute, MnoEndpoint, Pos, PosError, PosPhase, Settlement, TimeWindowPolicy};
use crate::store::config::{Consent, Resolved, ScenarioConfig};
use crate::store::transcript::{RecordBody, Transcript};
use crate::types::{Hop, Lai, Link, Millis, Party, Pence, Step, TxnSerial};

pub type FlowId = usize;

const MNO_STREAM: u64 = 1;
const DEVICE_STREAM: u64 = 100;
const CLONE_STREAM: u64 = 1_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowKind {
    Purchase { purchase: usize, pos: usize },
    Attack,
}

/// Something a party did or refused, kept for reports.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartyEvent {
    pub time_ms: Millis,
    pub party: Party,
    pub step: Step,
    pub what: String,
}

#[derive(Debug, Clone)]
pub struct Flow {
    pub label: String,
    pub kind: FlowKind,
    pub price: Option<Pence>,
    pub verdict: Option<Verdict>,
    pub ledger: Vec<TxnSerial>,
    pub mno_session: Option<SessionId>,
    pub events: Vec<PartyEvent>,
}

/// One call into the MNO's transaction handler, with the crypto work it did.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TxCall {
    pub flow: FlowId,
    /// `None` when the transaction executed.
    pub rejection: Option<String>,
    pub mac_verifies: u64,
    pub decrypts: u64,
    pub decrypts_with_k_c: u64,
}

#[derive(Debug, Clone)]
struct Frame {
    hop: Hop,
    pos: usize,
    channel: u64,
    bytes: Vec<u8>,
    flow: FlowId,
    injected: bool,
    to_adversary: bool,
    deliver: bool,
    label: Option<String>,
    /// What the honest sender emitted, when the adversary changed it.
    original: Option<Vec<u8>>,
}

#[derive(Debug)]
enum Event {
    Deliver(Frame),
    PinEntry { pos: usize, device: usize, flow: FlowId },
    Tap { pos: usize, flow: FlowId },
}

#[derive(Debug)]
struct Device {
    mobile: Mobile,
    subscriber: usize,
    pins: VecDeque<UserResponse>,
}

#[derive(Debug)]
struct Terminal {
    pos: Pos,
    nfc_device: Option<usize>,
    flow: Option<FlowId>,
    channel: Option<u64>,
}

#[derive(Debug, Clone, Copy)]
struct Channel {
    pos: usize,
    session: Option<SessionId>,
}

pub struct World {
    scenario: String,
    seed: u64,
    config: Resolved,
    suite: Arc<dyn CryptoSuite>,
    probe: Probe,
    clock: Millis,
    mno: Mno,
    terminals: Vec<Terminal>,
    devices: Vec<Device>,
    channels: BTreeMap<u64, Channel>,
    next_channel: u64,
    queue: VecDeque<Event>,
    nfc_up: bool,
    deferred: Vec<Frame>,
    adversary: Adversary,
    flows: Vec<Flow>,
    transcript: Transcript,
    receipts: Vec<(FlowId, SettlementReceipt)>,
    disputes: Vec<(FlowId, Dispute)>,
    tx_calls: Vec<TxCall>,
    relay_mismatches: u64,
    initial_balances: BTreeMap<String, Pence>,
}

impl std::fmt::Debug for World {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("World")
            .field("scenario", &self.scenario)
            .field("seed", &self.seed)
            .field("clock", &self.clock)
            .field("flows", &self.flows.len())
            .finish_non_exhaustive()
    }
}

/// A finished run.
#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub outcome: ScenarioOutcome,
    pub transcript: Transcript,
}

fn step_of(bytes: &[u8]) -> Option<Step> {
    bytes
        .first()
        .and_then(|t| codec::MessageKind::from_tag(*t))
        .map(|k| k.step())
}

impl World {
    pub fn new(config: &ScenarioConfig, scenario: &str, seed: u64) -> Result<Self, HarnessError> {
        let resolved = config.resolve()?;
        let suite: Arc<dyn CryptoSuite> = Arc::new(HashSuite);
        let probe = Probe::default();
        let crypto = |party| Crypto::new(Arc::clone(&suite), probe.clone(), party);
        let policy = &resolved.policy;

        let mno_keys = crypto(Party::Mno).keypair_from_seed(&resolved.mno_signing_seed);
        let mno_vk = mno_keys.verifying_key().clone();
        let mut mno = Mno::new(
            crypto(Party::Mno),
            SimRng::stream(seed, MNO_STREAM),
            mno_keys,
            MnoPolicy {
                cap: policy.cap,
                ts_window_ms: policy.ts_window_ms,
                rotate_tmsi_on_settle: policy.rotate_tmsi,
            },
        );

        let window = TimeWindowPolicy::new(policy.pos_window_ms.unwrap_or(policy.ts_window_ms))?;
        let mut terminals = Vec::new();
        for shop in &resolved.shops {
            let pos_crypto = crypto(Party::Pos);
            let keys = pos_crypto.keypair_from_seed(&shop.signing_seed);
            let reg = mno.register_shop(shop.shop_id, shop.bank_ref.clone(), keys.verifying_key().clone())?;
            let mut pos = Pos::new(pos_crypto, shop.shop_id, reg.k_p, keys, window);
            pos.register_mno(
                resolved.plmn,
                MnoEndpoint {
                    name: resolved.mno_name.clone(),
                    verifying_key: mno_vk.clone(),
                },
            );
            terminals.push(Terminal {
                pos,
                nfc_device: None,
                flow: None,
                channel: None,
            });
        }
        let trust = TrustAnchors {
            mno: mno_vk,
            pos: terminals.iter().map(|t| t.pos.verifying_key().clone()).collect(),
        };

        let lai = Lai {
            plmn: resolved.plmn,
            lac: resolved.lac,
        };
        let mut devices = Vec::new();
        let mut initial_balances = BTreeMap::new();
        for (i, sub) in resolved.subscribers.iter().enumerate() {
            let record = mno.register_subscriber(sub.imsi, SubscriberKey::new(sub.k_i), sub.balance)?;
            let sim = SimState::new(sub.imsi, record.tmsi, lai, SubscriberKey::new(sub.k_i), sub.pin.clone())?
                .with_retry_limit(policy.pin_retries)?;
            devices.push(Device {
                mobile: Mobile::new(
                    crypto(Party::Mobile),
                    SimRng::stream(seed, DEVICE_STREAM + i as u64),
                    sim,
                    trust.clone(),
                ),
                subscriber: i,
                pins: VecDeque::new(),
            });
            initial_balances.insert(sub.imsi.to_string(), sub.balance);
        }

        let mut transcript = Transcript::new();
        transcript.push(RecordBody::Header {
            scenario: scenario.to_owned(),
            seed,
            suite: suite.name().to_owned(),
            config_digest: hex::encode(Sha256::digest(config.to_toml().as_bytes())),
        });

        Ok(Self {
            scenario: scenario.to_owned(),
            seed,
            config: resolved,
            suite,
            probe,
            clock: 0,
            mno,
            terminals,
            devices,
            channels: BTreeMap::new(),
            next_channel: 1,
            queue: VecDeque::new(),
            nfc_up: true,
            deferred: Vec::new(),
            adversary: Adversary::default(),
            flows: Vec::new(),
            transcript,
            receipts: Vec::new(),
            disputes: Vec::new(),
            tx_calls: Vec::new(),
            relay_mismatches: 0,
            initial_balances,
        })
    }

    // ---- accessors ----

    pub fn now(&self) -> Millis {
        self.clock
    }

    pub fn config(&self) -> &Resolved {
        &self.config
    }

    pub fn probe(&self) -> &Probe {
        &self.probe
    }

    pub fn crypto(&self, party: Party) -> Crypto {
        Crypto::new(Arc::clone(&self.suite), Probe::default(), party)
    }

    pub fn mno(&self) -> &Mno {
        &self.mno
    }

    pub fn pos(&self, i: usize) -> &Pos {
        &self.terminals[i].pos
    }

    pub fn mobile(&self, device: usize) -> &Mobile {
        &self.devices[device].mobile
    }

    pub fn mobile_mut(&mut self, device: usize) -> &mut Mobile {
        &mut self.devices[device].mobile
    }

    pub fn adversary(&self) -> &Adversary {
        &self.adversary
    }

    pub fn flows(&self) -> &[Flow] {
        &self.flows
    }

    pub fn flow(&self, id: FlowId) -> &Flow {
        &self.flows[id]
    }

    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }

    pub fn receipts(&self) -> &[(FlowId, SettlementReceipt)] {
        &self.receipts
    }

    pub fn disputes(&self) -> &[(FlowId, Dispute)] {
        &self.disputes
    }

    pub fn tx_calls(&self) -> &[TxCall] {
        &self.tx_calls
    }

    pub fn is_idle(&self) -> bool {
        self.queue.is_empty()
    }

    pub fn device_of(&self, subscriber: usize) -> usize {
        self.devices
            .iter()
            .position(|d| d.subscriber == subscriber)
            .expect("every subscriber has a device")
    }

    // ---- adversary and environment controls ----

    pub fn add_hook(&mut self, hook: Hook) {
        self.adversary.add_hook(hook);
    }

    pub fn clear_hooks(&mut self) {
        self.adversary.clear_hooks();
    }

    pub fn advance_clock(&mut self, ms: Millis) {
        self.clock += ms;
    }

    pub fn link_down(&mut self) {
        self.nfc_up = false;
        self.transcript.push(RecordBody::LinkState {
            time_ms: self.clock,
            link: Link::Nfc,
            up: false,
        });
    }

    /// Restores the NFC link; held frames go out first, in order.
    pub fn link_up(&mut self) {
        self.nfc_up = true;
        self.transcript.push(RecordBody::LinkState {
            time_ms: self.clock,
            link: Link::Nfc,
            up: true,
        });
        for frame in self.deferred.drain(..).rev() {
            self.queue.push_front(Event::Deliver(frame));
        }
    }

    /// A second handset carrying a copy of this device's SIM.
    pub fn add_clone(&mut self, of: usize) -> Result<usize, HarnessError> {
        let subscriber = self.devices[of].subscriber;
        let sub = &self.config.subscribers[subscriber];
        let original = self.devices[of].mobile.sim();
        let sim = SimState::new(
            sub.imsi,
            original.tmsi,
            original.lai,
            SubscriberKey::new(sub.k_i),
            sub.pin.clone(),
        )?
        .with_retry_limit(self.config.policy.pin_retries)?;
        let trust = TrustAnchors {
            mno: self.mno.verifying_key().clone(),
            pos: self.terminals.iter().map(|t| t.pos.verifying_key().clone()).collect(),
        };
        let index = self.devices.len();
        self.devices.push(Device {
            mobile: Mobile::new(
                Crypto::new(Arc::clone(&self.suite), self.probe.clone(), Party::Mobile),
                SimRng::stream(self.seed, CLONE_STREAM + index as u64),
                sim,
                trust,
            ),
            subscriber,
            pins: VecDeque::new(),
        });
        Ok(index)
    }

    /// Puts another device at a terminal's NFC reader.
    pub fn swap_device(&mut self, pos: usize, device: usize) {
        self.terminals[pos].nfc_device = Some(device);
    }

    pub fn cancel_pos_session(&mut self, pos: usize) {
        self.terminals[pos].pos.cancel_session();
    }

    fn new_flow(&mut self, label: &str, kind: FlowKind, price: Option<Pence>) -> FlowId {
        self.flows.push(Flow {
            label: label.to_owned(),
            kind,
            price,
            verdict: None,
            ledger: Vec::new(),
            mno_session: None,
            events: Vec::new(),
        });
        self.flows.len() - 1
    }

    pub fn attack_flow(&mut self, label: &str) -> FlowId {
        self.new_flow(label, FlowKind::Attack, None)
    }

    /// The channel the terminal's current session uses on the backhaul.
    pub fn terminal_channel(&self, pos: usize) -> Option<u64> {
        self.terminals[pos].channel
    }

    /// Sends adversary-made bytes. `channel: None` opens a fresh backhaul
    /// channel, returned for follow-up injections.
    pub fn inject(&mut self, flow: FlowId, hop: Hop, pos: usize, channel: Option<u64>, bytes: Vec<u8>) -> u64 {
        let channel = match (hop.link(), channel) {
            (Link::Nfc, _) => 0,
            (Link::Backhaul, Some(c)) => c,
            (Link::Backhaul, None) => self.open_channel(pos),
        };
        self.queue.push_back(Event::Deliver(Frame {
            hop,
            pos,
            channel,
            bytes,
            flow,
            injected: true,
            to_adversary: false,
            deliver: true,
            label: Some("inject".to_owned()),
            original: None,
        }));
        channel
    }

    /// Delivers a frame the adversary held back, late but otherwise as the
    /// honest sender sent it; replies go to the honest parties.
    pub fn release(&mut self, flow: FlowId, held: &Observed, pos: usize) {
        self.release_frame(flow, held, pos, held.bytes.clone());
    }

    /// Like [`World::release`], but delivers `bytes` in place of the held frame.
    pub fn release_edited(&mut self, flow: FlowId, held: &Observed, pos: usize, bytes: Vec<u8>) {
        self.release_frame(flow, held, pos, bytes);
    }

    fn release_frame(&mut self, flow: FlowId, held: &Observed, pos: usize, bytes: Vec<u8>) {
        let edited = bytes != held.bytes;
        self.queue.push_back(Event::Deliver(Frame {
            hop: held.hop,
            pos,
            channel: held.channel,
            original: edited.then(|| held.bytes.clone()),
            bytes,
            flow,
            injected: false,
            to_adversary: false,
            deliver: true,
            label: Some(if edited { "tamper" } else { "release" }.to_owned()),
        }));
    }

    fn open_channel(&mut self, pos: usize) -> u64 {
        let c = self.next_channel;
        self.next_channel += 1;
        self.channels.insert(c, Channel { pos, session: None });
        c
    }

    // ---- running ----

    /// Starts configured purchase `index` with the subscriber's own device.
    pub fn start_purchase(&mut self, index: usize, label: &str) -> Result<FlowId, HarnessError> {
        let p = self
            .config
            .purchases
            .get(index)
            .cloned()
            .ok_or_else(|| HarnessError::Scenario(format!("no purchase {index} in config")))?;
        let device = self.device_of(p.subscriber);
        let flow = self.new_flow(
            label,
            FlowKind::Purchase {
                purchase: index,
                pos: p.shop,
            },
            Some(p.details.total),
        );
        self.devices[device].pins = match p.consent {
            Consent::Decline => VecDeque::from([UserResponse::Decline]),
            Consent::Agree => p.pin_attempts.iter().cloned().map(UserResponse::Pin).collect(),
        };
        let msg = self.terminals[p.shop].pos.start_session(p.details.clone())?;
        let t = &mut self.terminals[p.shop];
        t.nfc_device = Some(device);
        t.flow = Some(flow);
        t.channel = None;
        self.send(Frame {
            hop: Hop::PosToMobile,
            pos: p.shop,
            channel: 0,
            bytes: codec::encode(&msg),
            flow,
            injected: false,
            to_adversary: false,
            deliver: true,
            label: None,
            original: None,
        });
        Ok(flow)
    }

    /// Overrides the scripted PIN entries of a device.
    pub fn script_pins(&mut self, device: usize, responses: Vec<UserResponse>) {
        self.devices[device].pins = responses.into();
    }

    fn send(&mut self, mut frame: Frame) {
        if !frame.injected && !frame.to_adversary {
            let sent = frame.bytes.clone();
            let (action, bytes) = self.adversary.intercept(frame.hop, frame.channel, frame.bytes);
            if bytes != sent {
                frame.original = Some(sent);
            }
            frame.bytes = bytes;
            frame.label = action.label().map(str::to_owned);
            match action {
                Action::Drop => frame.deliver = false,
                Action::SubstituteParty(d) => self.swap_device(frame.pos, d),
                _ => {}
            }
        }
        self.queue.push_back(Event::Deliver(frame));
    }

    fn reply(&mut self, to: &Frame, msg: &Message) {
        let mut hop = to.hop.reverse();
        let mut pos = to.pos;
        if to.hop == Hop::PosToMno {
            hop = Hop::MnoToPos;
            pos = self.channels.get(&to.channel).map_or(to.pos, |c| c.pos);
        }
        self.send(Frame {
            hop,
            pos,
            channel: to.channel,
            bytes: codec::encode(msg),
            flow: to.flow,
            injected: false,
            to_adversary: to.injected,
            deliver: true,
            label: to.injected.then(|| "to-adversary".to_owned()),
            original: None,
        });
    }

    fn forward(&mut self, from: &Frame, hop: Hop, channel: u64, msg: &Message) {
        self.send(Frame {
            hop,
            pos: from.pos,
            channel,
            bytes: codec::encode(msg),
            flow: from.flow,
            injected: false,
            to_adversary: from.injected,
            deliver: true,
            label: from.injected.then(|| "to-adversary".to_owned()),
            original: None,
        });
    }

    pub fn run(&mut self) {
        while self.step() {}
    }

    /// Runs until `pred` holds (checked before every event) or the queue empties.
    pub fn run_until(&mut self, mut pred: impl FnMut(&World) -> bool) -> bool {
        loop {
            if pred(self) {
                return true;
            }
            if !self.step() {
                return pred(self);
            }
        }
    }

    pub fn step(&mut self) -> bool {
        let Some(event) = self.queue.pop_front() else {
            return false;
        };
        match event {
            Event::Deliver(frame) => self.deliver(frame),
            Event::PinEntry { pos, device, flow } => self.pin_entry(pos, device, flow),
            Event::Tap { pos, flow } => self.tap(pos, flow),
        }
        true
    }

    fn note(&mut self, flow: FlowId, party: Party, step: Step, what: impl Into<String>) {
        let time_ms = self.clock;
        self.flows[flow].events.push(PartyEvent {
            time_ms,
            party,
            step,
            what: what.into(),
        });
    }

    fn abort(&mut self, flow: FlowId, party: Party, step: Step, reason: &str) {
        self.note(flow, party, step, format!("abort: {reason}"));
        self.flows[flow].verdict.get_or_insert(Verdict::Aborted {
            step,
            reason: reason.to_owned(),
        });
    }

    fn conclude(&mut self, flow: FlowId, verdict: Verdict) {
        self.flows[flow].verdict.get_or_insert(verdict);
    }

    fn pos_failure(&mut self, flow: FlowId, step: Step, err: PosError) {
        match err {
            PosError::Aborted { step, reason } => self.abort(flow, Party::Pos, step, &reason),
            other => self.note(flow, Party::Pos, step, format!("ignored: {other}")),
        }
    }

    fn deliver(&mut self, frame: Frame) {
        if frame.hop.link() == Link::Nfc && !self.nfc_up {
            self.deferred.push(frame);
            return;
        }
        self.clock += self.config.policy.hop_ms;
        self.adversary.observe(Observed {
            hop: frame.hop,
            channel: frame.channel,
            bytes: frame.bytes.clone(),
        });
        let decoded = codec::decode(&frame.bytes);
        let summary = match &decoded {
            Ok(m) => m.summary(),
            Err(e) => format!("undecodable: {e}"),
        };
        let label = if frame.to_adversary {
            Some("to-adversary".to_owned())
        } else {
            frame.label.clone()
        };
        self.transcript.push(RecordBody::Message {
            time_ms: self.clock,
            link: frame.hop.link(),
            direction: frame.hop,
            channel: frame.channel,
            step: step_of(&frame.bytes),
            raw: hex::encode(&frame.bytes),
            summary,
            adversary: label,
            original: frame.original.as_ref().map(hex::encode),
        });
        if !frame.deliver || frame.to_adversary {
            return;
        }
        let msg = match decoded {
            Ok(m) => m,
            Err(e) => {
                let step = step_of(&frame.bytes).unwrap_or(Step::IdRequest);
                self.note(
                    frame.flow,
                    frame.hop.destination(),
                    step,
                    format!("discarded malformed frame: {e}"),
                );
                return;
            }
        };
        match frame.hop {
            Hop::PosToMobile => self.at_mobile(&frame, msg),
            Hop::MobileToPos => self.at_pos_from_mobile(&frame, msg),
            Hop::PosToMno => self.at_mno(&frame, msg),
            Hop::MnoToPos => self.at_pos_from_mno(&frame, msg),
        }
    }

    fn at_mobile(&mut self, frame: &Frame, msg: Message) {
        let flow = frame.flow;
        let Some(device) = self.terminals[frame.pos].nfc_device else {
            return self.note(flow, Party::Mobile, msg.step(), "no device at the reader");
        };
        let step = msg.step();
        let mobile = &mut self.devices[device].mobile;
        match msg {
            Message::IdRequest => {
                let (tmsi, lai) = mobile.handle_id_request();
                self.reply(frame, &Message::IdResponse { tmsi, lai });
            }
            Message::Challenge { r } => match mobile.handle_challenge(r.as_bytes()) {
                Ok(ciphertext) => self.reply(frame, &Message::AuthResponse { ciphertext }),
                Err(e) => self.note(flow, Party::Mobile, step, format!("ignored: {e}")),
            },
            Message::AuthConfirm { ciphertext } => match mobile.handle_auth_confirm(&ciphertext) {
                Ok(ConfirmOutcome::Success) => self.reply(frame, &Message::AuthSuccess),
                Ok(ConfirmOutcome::Abort(reason)) => self.abort(flow, Party::Mobile, Step::MobileVerify, &reason),
                Err(e) => self.note(flow, Party::Mobile, step, format!("ignored: {e}")),
            },
            Message::PriceOffer { ciphertext } => match mobile.receive_price_offer(&ciphertext) {
                Ok(Some(_)) => self.queue.push_back(Event::PinEntry {
                    pos: frame.pos,
                    device,
                    flow,
                }),
                Ok(None) => self.abort(flow, Party::Mobile, Step::PriceOffer, "offer-undecryptable"),
                Err(e) => self.note(flow, Party::Mobile, step, format!("ignored: {e}")),
            },
            Message::SettlementBundle(bundle) => match mobile.verify_settlement(&bundle) {
                Ok(receipt) => {
                    match &receipt.verdict {
                        ReceiptVerdict::Accepted => self.conclude(flow, Verdict::Settled),
                        ReceiptVerdict::Rejected(reason) => {
                            let reason = reason.clone();
                            self.abort(flow, Party::Mobile, Step::CustomerVerify, &reason);
                        }
                    }
                    self.receipts.push((flow, receipt));
                }
                Err(e) => self.note(flow, Party::Mobile, step, format!("ignored: {e}")),
            },
            other => self.note(flow, Party::Mobile, step, format!("unexpected {}", other.summary())),
        }
    }

    fn pin_entry(&mut self, pos: usize, device: usize, flow: FlowId) {
        self.clock += self.config.policy.user_delay_ms;
        let d = &mut self.devices[device];
        let response = d.pins.pop_front().unwrap_or(UserResponse::Decline);
        match d.mobile.enter_pin(response) {
            Ok(OfferOutcome::Proceed(_)) => self.queue.push_back(Event::Tap { pos, flow }),
            Ok(OfferOutcome::PinFail { retries_left }) => {
                self.note(
                    flow,
                    Party::Mobile,
                    Step::PinEntry,
                    format!("wrong pin, {retries_left} left"),
                );
                self.queue.push_back(Event::PinEntry { pos, device, flow });
            }
            Ok(OfferOutcome::Declined) => self.abort(flow, Party::Mobile, Step::PinEntry, "user-declined"),
            Ok(OfferOutcome::Aborted(reason)) => self.abort(flow, Party::Mobile, Step::PinEntry, &reason),
            Err(e) => self.note(flow, Party::Mobile, Step::PinEntry, format!("ignored: {e}")),
        }
    }

    /// The device at the reader sends its payment message.
    fn tap(&mut self, pos: usize, flow: FlowId) {
        let Some(device) = self.terminals[pos].nfc_device else {
            return self.note(flow, Party::Mobile, Step::Payment, "no device at the reader");
        };
        let now = self.clock;
        match self.devices[device].mobile.build_payment_message(now) {
            Ok(pm) => self.send(Frame {
                hop: Hop::MobileToPos,
                pos,
                channel: 0,
                bytes: codec::encode(&Message::PaymentMessage(pm)),
                flow,
                injected: false,
                to_adversary: false,
                deliver: true,
                label: None,
                original: None,
            }),
            Err(e) => self.note(flow, Party::Mobile, Step::Payment, format!("ignored: {e}")),
        }
    }

    fn at_pos_from_mobile(&mut self, frame: &Frame, msg: Message) {
        let flow = frame.flow;
        let step = msg.step();
        let pos = frame.pos;
        match msg {
            Message::IdResponse { tmsi, lai } => match self.terminals[pos].pos.route_by_lai(tmsi, lai) {
                Ok((_, fwd)) => {
                    let channel = self.open_channel(pos);
                    self.terminals[pos].channel = Some(channel);
                    self.forward(frame, Hop::PosToMno, channel, &fwd);
                }
                Err(e) => self.pos_failure(flow, step, e),
            },
            Message::AuthResponse { .. } | Message::AuthSuccess => {
                let relayed = self.terminals[pos].pos.relay_from_mobile(&msg);
                match (relayed, self.terminals[pos].channel) {
                    (Ok(m), Some(channel)) => self.forward(frame, Hop::PosToMno, channel, &m),
                    (Ok(_), None) => self.note(flow, Party::Pos, step, "no backhaul channel"),
                    (Err(e), _) => self.pos_failure(flow, step, e),
                }
            }
            Message::PaymentMessage(pm) => {
                let now = self.clock;
                match self.terminals[pos].pos.verify_payment_message(&pm, now) {
                    Ok(fwd) => {
                        if fwd.enc_trm != pm.enc_trm || fwd.mac != pm.mac {
                            self.relay_mismatches += 1;
                        }
                        let channel = self.terminals[pos].channel.unwrap_or(0);
                        self.forward(frame, Hop::PosToMno, channel, &Message::TransactionForward(fwd));
                    }
                    Err(e) => self.pos_failure(flow, step, e),
                }
            }
            other => self.note(flow, Party::Pos, step, format!("unexpected {}", other.summary())),
        }
    }

    fn at_mno(&mut self, frame: &Frame, msg: Message) {
        let flow = frame.flow;
        let step = msg.step();
        let session = self.channels.get(&frame.channel).and_then(|c| c.session);
        match msg {
            Message::AuthForward { tmsi, lai, shop_id } => match self.mno.handle_auth_request(tmsi, lai, shop_id) {
                Ok(crate::mno::AuthOutcome::Challenge { session, r }) => {
                    self.channels
                        .entry(frame.channel)
                        .or_insert(Channel {
                            pos: frame.pos,
                            session: None,
                        })
                        .session = Some(session);
                    self.flows[flow].mno_session.get_or_insert(session);
                    self.reply(frame, &Message::Challenge { r });
                }
                Ok(crate::mno::AuthOutcome::Declined) => {
                    self.abort(flow, Party::Mno, Step::Declined, "declined");
                    self.reply(frame, &Message::Declined);
                }
                Err(e) => self.abort(flow, Party::Mno, step, &e.to_string()),
            },
            Message::AuthResponse { ciphertext } => {
                let Some(session) = session else {
                    return self.note(flow, Party::Mno, step, "no session on channel");
                };
                match self.mno.handle_auth_response(session, &ciphertext) {
                    Ok(crate::mno::AuthReply::Confirm(ciphertext)) => {
                        self.reply(frame, &Message::AuthConfirm { ciphertext })
                    }
                    Ok(crate::mno::AuthReply::Stop) => {
                        self.abort(flow, Party::Mno, Step::MnoVerify, "stop");
                        self.reply(frame, &Message::Stop);
                    }
                    Err(e) => self.note(flow, Party::Mno, step, format!("ignored: {e}")),
                }
            }
            Message::AuthSuccess => {
                let Some(session) = session else {
                    return self.note(flow, Party::Mno, step, "no session on channel");
                };
                let shop = self.mno.session(session).map(|s| s.shop_id);
                let delivered = self
                    .mno
                    .handle_auth_success(session)
                    .and_then(|()| self.mno.deliver_pos_key(session, shop.expect("session exists")));
                match delivered {
                    Ok(ciphertext) => self.reply(frame, &Message::KeyDelivery { ciphertext }),
                    Err(e) => self.note(flow, Party::Mno, step, format!("ignored: {e}")),
                }
            }
            Message::TransactionForward(fwd) => {
                let Some(session) = session else {
                    self.abort(flow, Party::Mno, Step::Execute, "no-session");
                    return self.reply(frame, &Message::TransactionResult(TransactionResult::Failed));
                };
                let before = self.probe.counters();
                let now = self.clock;
                let result = self.mno.handle_transaction(session, &fwd, now);
                let after = self.probe.counters();
                self.tx_calls.push(TxCall {
                    flow,
                    rejection: result.as_ref().err().map(TxRejection::code),
                    mac_verifies: after.verifies_by(Party::Mno) - before.verifies_by(Party::Mno),
                    decrypts: after.decrypts_by(Party::Mno) - before.decrypts_by(Party::Mno),
                    decrypts_with_k_c: after.decrypts_with(Party::Mno, KeyKind::SessionKey)
                        - before.decrypts_with(Party::Mno, KeyKind::SessionKey),
                });
                match result {
                    Ok(exec) => {
                        self.flows[flow].ledger.push(exec.entry.txn_serial);
                        if let Some(tmsi) = exec.rotated_tmsi {
                            let imsi = exec.entry.debit_account;
                            for d in self.devices.iter_mut().filter(|d| d.mobile.sim().imsi == imsi) {
                                d.mobile.set_tmsi(tmsi);
                            }
                        }
                        self.reply(
                            frame,
                            &Message::TransactionResult(TransactionResult::Executed(exec.result)),
                        );
                    }
                    Err(rejection) => {
                        self.abort(flow, Party::Mno, Step::Execute, &rejection.code());
                        self.reply(frame, &Message::TransactionResult(TransactionResult::Failed));
                    }
                }
            }
            other => self.note(flow, Party::Mno, step, format!("unexpected {}", other.summary())),
        }
    }

    fn at_pos_from_mno(&mut self, frame: &Frame, msg: Message) {
        let flow = frame.flow;
        let step = msg.step();
        let pos = frame.pos;
        if self.terminals[pos].channel != Some(frame.channel) {
            return self.note(flow, Party::Pos, step, "no session on this channel");
        }
        match msg {
            Message::Challenge { .. } | Message::AuthConfirm { .. } | Message::Declined | Message::Stop => {
                match self.terminals[pos].pos.relay_from_mno(&msg) {
                    Ok(m) => self.forward(frame, Hop::PosToMobile, 0, &m),
                    Err(e) => self.pos_failure(flow, step, e),
                }
            }
            Message::KeyDelivery { ciphertext } => match self.terminals[pos].pos.accept_key_delivery(&ciphertext) {
                Ok(offer) => self.forward(frame, Hop::PosToMobile, 0, &offer),
                Err(e) => self.pos_failure(flow, step, e),
            },
            Message::TransactionResult(result) => match self.terminals[pos].pos.settle(&result) {
                Ok(Settlement::Bundle(bundle)) => {
                    self.forward(frame, Hop::PosToMobile, 0, &Message::SettlementBundle(bundle))
                }
                Ok(Settlement::Dispute(d)) => {
                    self.note(
                        flow,
                        Party::Pos,
                        Step::Settle,
                        "dispute: executed amount differs from price",
                    );
                    self.conclude(flow, Verdict::Dispute { step: Step::Settle });
                    self.disputes.push((flow, d));
                }
                Err(e) => self.pos_failure(flow, step, e),
            },
            other => self.note(flow, Party::Pos, step, format!("unexpected {}", other.summary())),
        }
    }

    // ---- finishing ----

    /// Ends open terminal sessions, appends ledger and balances to the
    /// transcript, and checks the invariants every run must satisfy.
    pub fn finish(mut self, mut assertions: Vec<Assertion>) -> ScenarioRun {
        for i in 0..self.terminals.len() {
            let t = &self.terminals[i];
            if let (Some(flow), Some(session)) = (t.flow, t.pos.session()) {
                if !session.phase.is_finished() {
                    let step = match session.phase {
                        PosPhase::AwaitingId => Step::IdResponse,
                        PosPhase::Authenticating => Step::AuthForward,
                        PosPhase::OfferSent => Step::Payment,
                        // Waiting on the MNO: either the request or its result went missing.
                        _ if self.flows[flow].ledger.is_empty() => Step::Execute,
                        _ => Step::Result,
                    };
                    self.abort(flow, Party::Pos, step, "no-response");
                    self.terminals[i].pos.cancel_session();
                }
            }
        }
        // The terminal finished but the handset never saw the bundle.
        for flow in 0..self.flows.len() {
            if matches!(self.flows[flow].kind, FlowKind::Purchase { .. }) && self.flows[flow].verdict.is_none() {
                self.abort(flow, Party::Mobile, Step::CustomerVerify, "no-response");
            }
        }

        for e in self.mno.ledger().entries() {
            self.transcript.push(RecordBody::Ledger {
                txn_serial: e.txn_serial.0,
                debit: e.debit_account.to_string(),
                credit: e.credit_account.clone(),
                amount: e.amount,
                ts_tr: e.ts_tr,
            });
        }
        let balances: BTreeMap<String, Pence> = self
            .mno
            .subscribers()
            .map(|s| (s.imsi.to_string(), s.balance))
            .collect();
        let credits: BTreeMap<String, Pence> = self
            .mno
            .shops()
            .map(|s| (s.bank_ref.clone(), self.mno.credited(&s.bank_ref)))
            .collect();
        self.transcript.push(RecordBody::Balances {
            subscribers: balances.clone(),
            credits: credits.clone(),
        });

        let mut common = self.invariants(&balances, &credits);
        common.append(&mut assertions);

        let ledger = self.mno.ledger().entries().to_vec();
        let sessions = self
            .flows
            .iter()
            .map(|f| SessionReport {
                label: f.label.clone(),
                verdict: f.verdict.clone().unwrap_or(Verdict::Incomplete),
                price: f.price,
                debited: ledger
                    .iter()
                    .filter(|e| f.ledger.contains(&e.txn_serial))
                    .map(|e| e.amount)
                    .sum(),
            })
            .collect();
        ScenarioRun {
            outcome: ScenarioOutcome {
                scenario: self.scenario.clone(),
                seed: self.seed,
                sessions,
                ledger,
                balances,
                credits,
                pos_keys: self.probe.holdings(Party::Pos),
                assertions: common,
            },
            transcript: self.transcript,
        }
    }

    fn invariants(&self, balances: &BTreeMap<String, Pence>, credits: &BTreeMap<String, Pence>) -> Vec<Assertion> {
        let ledger = self.mno.ledger();
        let mut out = Vec::new();

        let conserved = self.initial_balances.iter().all(|(imsi, initial)| {
            let debits = ledger
                .entries()
                .iter()
                .filter(|e| &e.debit_account.to_string() == imsi)
                .map(|e| e.amount)
                .sum::<Pence>();
            balances.get(imsi).copied() == initial.checked_sub(debits)
        }) && credits.iter().all(|(bank, c)| *c == ledger.credits_to(bank))
            && credits.values().sum::<Pence>() == ledger.total();
        out.push(Assertion::new(
            "ledger-conservation",
            conserved,
            "debits, credits and balance changes agree",
        ));

        let secrets = self.probe.material_of(&[
            KeyKind::SubscriberKey,
            KeyKind::Pin,
            KeyKind::SessionKey,
            KeyKind::MacKey,
            KeyKind::EncryptionKey,
            KeyKind::ShopKey,
        ]);
        let leaks: BTreeSet<String> = self
            .adversary
            .observed()
            .iter()
            .flat_map(|o| {
                secrets
                    .iter()
                    .filter(|(_, m)| !m.is_empty() && o.bytes.windows(m.len()).any(|w| w == m.as_slice()))
                    .map(|(k, _)| k.to_string())
            })
            .collect();
        out.push(Assertion::new(
            "secret-confinement",
            leaks.is_empty(),
            if leaks.is_empty() {
                "no key or pin bytes on any link".to_owned()
            } else {
                format!("found on the wire: {leaks:?}")
            },
        ));

        let allowed: BTreeSet<KeyKind> = [
            KeyKind::ShopKey,
            KeyKind::Signing(Party::Pos),
            KeyKind::EncryptionKey,
            KeyKind::Verifying(Party::Mno),
        ]
        .into();
        let held = self.probe.holdings(Party::Pos);
        out.push(Assertion::new(
            "pos-key-visibility",
            held.is_subset(&allowed),
            format!(
                "terminal held {:?}",
                held.iter().map(|k| k.to_string()).collect::<Vec<_>>()
            ),
        ));

        let counters = self.probe.counters();
        let etm = counters.macs_over_plaintext == 0
            && self.tx_calls.iter().all(|c| {
                c.decrypts <= c.mac_verifies && (c.rejection.as_deref() != Some("mac-invalid") || c.decrypts == 0)
            });
        out.push(Assertion::new(
            "encrypt-then-mac",
            etm,
            format!(
                "{} transaction calls, {} macs over plaintext",
                self.tx_calls.len(),
                counters.macs_over_plaintext
            ),
        ));

        out.push(Assertion::eq("opaque-relay-fidelity", self.relay_mismatches, 0));

        let inconsistent: Vec<&str> = self
            .flows
            .iter()
            .filter(|f| {
                let expected = match &f.verdict {
                    Some(Verdict::Settled | Verdict::Dispute { .. }) => 1,
                    Some(Verdict::Aborted { step, .. }) if *step > Step::Execute => 1,
                    _ => 0,
                };
                f.ledger.len() != expected
            })
            .map(|f| f.label.as_str())
            .collect();
        out.push(Assertion::new(
            "verdict-ledger-consistency",
            inconsistent.is_empty(),
            format!("inconsistent sessions: {inconsistent:?}"),
        ));

        let unauthorized: Vec<&str> = self
            .flows
            .iter()
            .filter(|f| {
                let debited: Pence = ledger
                    .entries()
                    .iter()
                    .filter(|e| f.ledger.contains(&e.txn_serial))
                    .map(|e| e.amount)
                    .sum();
                let disputed = matches!(f.verdict, Some(Verdict::Dispute { .. }));
                !f.ledger.is_empty() && !disputed && f.price != Some(debited)
            })
            .map(|f| f.label.as_str())
            .collect();
        out.push(Assertion::new(
            "debits-match-prices",
            unauthorized.is_empty(),
            format!("sessions debited other than their price: {unauthorized:?}"),
        ));
        out
    }
}
