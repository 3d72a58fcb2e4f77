//! The shipped scenarios. Each one builds a world from the config, scripts
//! the honest parties and the adversary, and states what must hold at the
//! end. The world adds the invariants every run must satisfy.

use std::collections::HashSet;

use super::adversary::{Action, ByteEdit, Hook, Matcher};
use super::outcome::{Assertion, Verdict};
use super::world::{FlowId, ScenarioRun, World};
use super::HarnessError;
use crate::codec::{self, Message, MessageKind};
use crate::mobile::{Behavior, MobilePhase, UserResponse};
use crate::store::config::ScenarioConfig;
use crate::types::{Hop, Pence, Step};

/// Builds a forged frame from a recorded confirm and response.
type Forge = fn(&[u8], &[u8]) -> Vec<u8>;

pub struct Scenario {
    pub name: &'static str,
    pub description: &'static str,
    pub run: fn(&ScenarioConfig, u64) -> Result<ScenarioRun, HarnessError>,
}

impl std::fmt::Debug for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Scenario").field("name", &self.name).finish()
    }
}

pub const SCENARIOS: &[Scenario] = &[
    Scenario {
        name: "happy-path",
        description: "baseline: every configured purchase runs the full flow and settles",
        run: happy_path,
    },
    Scenario {
        name: "pos-impersonates-customer",
        description: "customer authentication: a replayed auth request cannot be answered, and fails outright once the TMSI rotates",
        run: pos_impersonates_customer,
    },
    Scenario {
        name: "pos-impersonates-mno",
        description: "network authentication: a replayed challenge with a replayed, reflected or tampered confirm is refused by the handset",
        run: pos_impersonates_mno,
    },
    Scenario {
        name: "tampered-payment",
        description: "encrypt-then-MAC: a modified transaction request is discarded before any decryption",
        run: tampered_payment,
    },
    Scenario {
        name: "replay-transaction",
        description: "replay protection: a replayed transaction request fails the counter check, a delayed one the timestamp check",
        run: replay_transaction,
    },
    Scenario {
        name: "dishonest-customer-trm",
        description: "non-repudiation: a handset that understates the price in its request ends in a dispute backed by the signed result",
        run: dishonest_customer_trm,
    },
    Scenario {
        name: "device-swap",
        description: "device binding: a second handset put down after PIN entry lacks the session nonce and is refused",
        run: device_swap,
    },
    Scenario {
        name: "link-break-resume",
        description: "resumption: the NFC link drops during PIN entry and the flow resumes where it stopped",
        run: link_break_resume,
    },
    Scenario {
        name: "repeat-customer",
        description: "key freshness: consecutive purchases by one customer use fresh nonces, keys and TMSIs",
        run: repeat_customer,
    },
    Scenario {
        name: "pin-exhaustion",
        description: "customer consent: wrong PINs exhaust the retries, nothing is sent and the SIM stays blocked",
        run: pin_exhaustion,
    },
];

pub fn find(name: &str) -> Option<&'static Scenario> {
    SCENARIOS.iter().find(|s| s.name == name)
}

pub fn run_scenario(name: &str, config: &ScenarioConfig, seed: u64) -> Result<ScenarioRun, HarnessError> {
    let scenario = find(name).ok_or_else(|| HarnessError::UnknownScenario(name.to_owned()))?;
    (scenario.run)(config, seed)
}

fn aborted(step: Step, reason: &str) -> Verdict {
    Verdict::Aborted {
        step,
        reason: reason.to_owned(),
    }
}

fn verdict_is(world: &World, flow: FlowId, expected: Verdict) -> Assertion {
    let label = &world.flow(flow).label;
    Assertion::eq(
        format!("{label}-verdict"),
        world.flow(flow).verdict.clone(),
        Some(expected),
    )
}

fn balance_of(world: &World, subscriber: usize) -> Pence {
    let imsi = world.config().subscribers[subscriber].imsi;
    world.mno().subscriber(&imsi).map_or(0, |s| s.balance)
}

fn initial_balance(world: &World, subscriber: usize) -> Pence {
    world.config().subscribers[subscriber].balance
}

fn no_ledger_entries(world: &World) -> Assertion {
    Assertion::eq("no-ledger-entries", world.mno().ledger().len(), 0)
}

fn subscriber_of(world: &World, purchase: usize) -> usize {
    world.config().purchases[purchase].subscriber
}

fn shop_of(world: &World, purchase: usize) -> usize {
    world.config().purchases[purchase].shop
}

fn price_of(world: &World, purchase: usize) -> Pence {
    world.config().purchases[purchase].details.total
}

fn locate(haystack: &[u8], needle: &[u8]) -> Option<usize> {
    haystack.windows(needle.len()).position(|w| w == needle)
}

/// Offset of the opaque half (E_Kc(TRM) then the MAC) inside an encoded
/// payment message or transaction forward.
fn opaque_span(frame: &[u8]) -> Option<(usize, usize)> {
    let (enc_trm, mac) = match codec::decode(frame).ok()? {
        Message::PaymentMessage(pm) => (pm.enc_trm, pm.mac),
        Message::TransactionForward(f) => (f.enc_trm, f.mac),
        _ => return None,
    };
    let start = locate(frame, enc_trm.as_bytes())?;
    let mac_at = locate(&frame[start..], &mac.0)? + start;
    Some((start, mac_at + mac.0.len()))
}

/// Bit offsets covering E_Kc(TRM) and its MAC in an encoded payment message.
pub fn opaque_bits(frame: &[u8]) -> std::ops::Range<usize> {
    let (start, end) = opaque_span(frame).expect("a payment message");
    start * 8..end * 8
}

fn happy_path(config: &ScenarioConfig, seed: u64) -> Result<ScenarioRun, HarnessError> {
    let mut w = World::new(config, "happy-path", seed)?;
    let mut checks = Vec::new();
    for i in 0..w.config().purchases.len() {
        let sub = subscriber_of(&w, i);
        let device = w.device_of(sub);
        let tc_before = w.mobile(device).sim().tc();
        let balance_before = balance_of(&w, sub);
        let flow = w.start_purchase(i, &format!("purchase-{i}"))?;
        w.run();
        let price = price_of(&w, i);
        let declined = w.config().purchases[i].consent == crate::store::config::Consent::Decline;
        if declined {
            checks.push(verdict_is(&w, flow, aborted(Step::PinEntry, "user-declined")));
            checks.push(Assertion::eq(
                format!("purchase-{i}-balance"),
                balance_of(&w, sub),
                balance_before,
            ));
            continue;
        }
        checks.push(verdict_is(&w, flow, Verdict::Settled));
        checks.push(Assertion::eq(
            format!("purchase-{i}-debit"),
            balance_before - balance_of(&w, sub),
            price,
        ));
        checks.push(Assertion::eq(
            format!("purchase-{i}-sim-tc"),
            w.mobile(device).sim().tc(),
            tc_before + 1,
        ));
        let imsi = w.config().subscribers[sub].imsi;
        checks.push(Assertion::eq(
            format!("purchase-{i}-mno-tc"),
            w.mno().subscriber(&imsi).map(|s| s.tc_expected),
            Some(tc_before + 1),
        ));
        let receipt = w.receipts().iter().rev().find(|(f, _)| *f == flow);
        checks.push(Assertion::new(
            format!("purchase-{i}-signatures"),
            receipt.is_some_and(|(_, r)| r.ti.is_some_and(|ti| ti.amount == price)),
            "handset accepted both settlement signatures and the executed amount",
        ));
    }
    Ok(w.finish(checks))
}

fn pos_impersonates_customer(config: &ScenarioConfig, seed: u64) -> Result<ScenarioRun, HarnessError> {
    let mut w = World::new(config, "pos-impersonates-customer", seed)?;
    let sub = subscriber_of(&w, 0);
    let pos = shop_of(&w, 0);
    let device = w.device_of(sub);
    w.add_hook(Hook::once(
        Matcher::on(Hop::PosToMno, MessageKind::AuthForward),
        Action::Record,
    ));
    w.add_hook(Hook::once(
        Matcher::on(Hop::PosToMno, MessageKind::AuthResponse),
        Action::Record,
    ));

    let honest = w.start_purchase(0, "honest-purchase")?;
    w.run_until(|w| *w.mobile(device).phase() == MobilePhase::Authenticated);
    let auth_forward = w.adversary().recorded()[0].bytes.clone();
    let auth_response = w.adversary().recorded()[1].bytes.clone();

    // Same TMSI as the honest session, still valid: the MNO answers with a
    // fresh R the adversary cannot respond to.
    let pre = w.attack_flow("replay-before-rotation");
    let channel = w.inject(pre, Hop::PosToMno, pos, None, auth_forward.clone());
    w.inject(pre, Hop::PosToMno, pos, Some(channel), auth_response);
    w.run();

    let post = w.attack_flow("replay-after-rotation");
    w.inject(post, Hop::PosToMno, pos, None, auth_forward);
    w.run();

    let adversary_confirms = w
        .adversary()
        .observed()
        .iter()
        .filter(|o| o.hop == Hop::MnoToPos && o.channel != w.terminal_channel(pos).unwrap_or(0))
        .filter(|o| {
            matches!(
                o.message(),
                Some(Message::AuthConfirm { .. } | Message::KeyDelivery { .. })
            )
        })
        .count();
    let initial = initial_balance(&w, sub);
    let checks = vec![
        verdict_is(&w, honest, Verdict::Settled),
        verdict_is(&w, pre, aborted(Step::MnoVerify, "stop")),
        verdict_is(&w, post, aborted(Step::Declined, "declined")),
        Assertion::eq("no-confirm-to-adversary", adversary_confirms, 0),
        Assertion::eq("only-honest-debit", initial - balance_of(&w, sub), price_of(&w, 0)),
        Assertion::eq(
            "attack-ledger-entries",
            w.flow(pre).ledger.len() + w.flow(post).ledger.len(),
            0,
        ),
    ];
    Ok(w.finish(checks))
}

fn pos_impersonates_mno(config: &ScenarioConfig, seed: u64) -> Result<ScenarioRun, HarnessError> {
    let mut w = World::new(config, "pos-impersonates-mno", seed)?;
    let sub = subscriber_of(&w, 0);
    let pos = shop_of(&w, 0);
    let device = w.device_of(sub);

    // An earlier honest purchase gives the terminal a challenge and confirm to replay.
    w.add_hook(Hook::once(
        Matcher::on(Hop::MnoToPos, MessageKind::Challenge),
        Action::Record,
    ));
    w.add_hook(Hook::once(
        Matcher::on(Hop::MnoToPos, MessageKind::AuthConfirm),
        Action::Record,
    ));
    let earlier = w.start_purchase(0, "earlier-purchase")?;
    w.run();
    let challenge = w.adversary().recorded()[0].bytes.clone();
    let confirm = w.adversary().recorded()[1].bytes.clone();
    let balance_after_earlier = balance_of(&w, sub);

    // From now on the terminal never contacts the network.
    w.add_hook(Hook::always(
        Matcher {
            hop: Some(Hop::PosToMno),
            kind: None,
        },
        Action::Drop,
    ));

    let mut attempts = Vec::new();
    let variants: [(&str, Forge); 3] = [
        ("replayed-confirm", |confirm, _| confirm.to_vec()),
        ("reflected-response", |_, response| {
            let mut b = response.to_vec();
            b[0] = MessageKind::AuthConfirm.tag();
            b
        }),
        ("tampered-confirm", |confirm, _| {
            let mut b = confirm.to_vec();
            let last = b.len() - 1;
            b[last] ^= 0x01;
            b
        }),
    ];
    for (label, craft) in variants {
        w.cancel_pos_session(pos);
        let flow = w.start_purchase(0, label)?;
        w.run();
        w.inject(flow, Hop::PosToMobile, pos, None, challenge.clone());
        w.run();
        let response = w
            .adversary()
            .last_observed(Hop::MobileToPos, MessageKind::AuthResponse)
            .map(|o| o.bytes.clone())
            .ok_or_else(|| HarnessError::Scenario("handset sent no auth response".into()))?;
        w.inject(flow, Hop::PosToMobile, pos, None, craft(&confirm, &response));
        w.run();
        attempts.push((flow, w.mobile(device).phase().clone()));
    }

    let mut checks = vec![verdict_is(&w, earlier, Verdict::Settled)];
    for (flow, phase) in &attempts {
        checks.push(verdict_is(
            &w,
            *flow,
            aborted(Step::MobileVerify, "mno-unauthenticated"),
        ));
        checks.push(Assertion::new(
            format!("{}-handset-aborted", w.flow(*flow).label),
            matches!(
                phase,
                MobilePhase::Aborted {
                    step: Step::MobileVerify,
                    ..
                }
            ),
            format!("handset phase {phase:?}"),
        ));
    }
    checks.push(Assertion::eq(
        "no-balance-change",
        balance_of(&w, sub),
        balance_after_earlier,
    ));
    Ok(w.finish(checks))
}

fn tampered_payment(config: &ScenarioConfig, seed: u64) -> Result<ScenarioRun, HarnessError> {
    let mut w = World::new(config, "tampered-payment", seed)?;
    let sub = subscriber_of(&w, 0);
    let pos = shop_of(&w, 0);

    // The adversary holds the frame back and delivers an edited copy: a
    // ciphertext bit on the NFC hop, then a MAC bit on the backhaul.
    let mut flows = Vec::new();
    for (label, hop, kind, in_mac) in [
        (
            "tampered-ciphertext",
            Hop::MobileToPos,
            MessageKind::PaymentMessage,
            false,
        ),
        ("tampered-mac", Hop::PosToMno, MessageKind::TransactionForward, true),
    ] {
        w.cancel_pos_session(pos);
        let flow = w.start_purchase(0, label)?;
        w.add_hook(Hook::once(Matcher::on(hop, kind), Action::Drop));
        w.run();
        let held = w
            .adversary()
            .last_observed(hop, kind)
            .cloned()
            .ok_or_else(|| HarnessError::Scenario(format!("no {kind} to hold back")))?;
        let bits = opaque_bits(&held.bytes);
        let bit = if in_mac { bits.end - 1 } else { bits.start + 3 };
        let edit = ByteEdit::flip_bit(bit);
        let mut bytes = held.bytes.clone();
        bytes[edit.offset] ^= edit.xor;
        w.release_edited(flow, &held, pos, bytes);
        w.run();
        flows.push(flow);
    }

    let calls = w.tx_calls();
    let mut checks: Vec<Assertion> = flows
        .iter()
        .map(|f| verdict_is(&w, *f, aborted(Step::Execute, "mac-invalid")))
        .collect();
    checks.push(Assertion::new(
        "no-decrypt-on-rejection",
        calls.len() == 2 && calls.iter().all(|c| c.decrypts == 0 && c.mac_verifies == 1),
        format!("{calls:?}"),
    ));
    checks.push(Assertion::eq(
        "no-balance-change",
        balance_of(&w, sub),
        initial_balance(&w, sub),
    ));
    checks.push(no_ledger_entries(&w));
    Ok(w.finish(checks))
}

fn replay_transaction(config: &ScenarioConfig, seed: u64) -> Result<ScenarioRun, HarnessError> {
    let mut w = World::new(config, "replay-transaction", seed)?;
    let sub = subscriber_of(&w, 0);
    let pos = shop_of(&w, 0);
    let window = w.config().policy.ts_window_ms;

    w.add_hook(Hook::once(
        Matcher::on(Hop::PosToMno, MessageKind::TransactionForward),
        Action::Record,
    ));
    let honest = w.start_purchase(0, "honest-purchase")?;
    w.run();
    let recorded = w.adversary().recorded()[0].clone();

    let replay = w.attack_flow("replayed-request");
    w.inject(replay, Hop::PosToMno, pos, Some(recorded.channel), recorded.bytes);
    w.run();

    // A request held back past the window: the counter is still fresh, the
    // timestamp is not.
    w.add_hook(Hook::once(
        Matcher::on(Hop::PosToMno, MessageKind::TransactionForward),
        Action::Drop,
    ));
    let delayed = w.start_purchase(0, "delayed-request")?;
    w.run();
    let held = w
        .adversary()
        .last_observed(Hop::PosToMno, MessageKind::TransactionForward)
        .cloned()
        .ok_or_else(|| HarnessError::Scenario("no request to hold back".into()))?;
    w.advance_clock(window + 1);
    w.release(delayed, &held, pos);
    w.run();

    let checks = vec![
        verdict_is(&w, honest, Verdict::Settled),
        verdict_is(&w, replay, aborted(Step::Execute, "tc-replay")),
        verdict_is(&w, delayed, aborted(Step::Execute, "ts-stale")),
        Assertion::eq("ledger-entries", w.mno().ledger().len(), 1),
        Assertion::eq(
            "single-debit",
            initial_balance(&w, sub) - balance_of(&w, sub),
            price_of(&w, 0),
        ),
    ];
    Ok(w.finish(checks))
}

fn dishonest_customer_trm(config: &ScenarioConfig, seed: u64) -> Result<ScenarioRun, HarnessError> {
    let mut w = World::new(config, "dishonest-customer-trm", seed)?;
    let sub = subscriber_of(&w, 0);
    let device = w.device_of(sub);
    let price = price_of(&w, 0);
    w.mobile_mut(device).set_behavior(Behavior::UnderstateTrm { by: 1 });
    let flow = w.start_purchase(0, "understated-request")?;
    w.run();

    let dispute = w.disputes().iter().find(|(f, _)| *f == flow).map(|(_, d)| d.clone());
    let mno_vk = w.mno().verifying_key().clone();
    let crypto = w.crypto(crate::types::Party::Pos);
    let evidence_signed = dispute.as_ref().is_some_and(|d| {
        crypto.verify_sig(
            &mno_vk,
            &codec::payload::mno_signed_bytes(&d.signed_ti.enc_ti),
            &d.signed_ti.mno_signature,
        )
    });
    let bundles_sent = w
        .adversary()
        .observed()
        .iter()
        .filter(|o| o.hop == Hop::PosToMobile && o.bytes.first() == Some(&MessageKind::SettlementBundle.tag()))
        .count();
    let checks = vec![
        verdict_is(&w, flow, Verdict::Dispute { step: Step::Settle }),
        Assertion::eq(
            "executed-amount",
            dispute.as_ref().map(|d| d.ti.amount),
            Some(price - 1),
        ),
        Assertion::eq("expected-amount", dispute.as_ref().map(|d| d.expected), Some(price)),
        Assertion::new(
            "evidence-signed-by-mno",
            evidence_signed,
            "dispute carries the MNO-signed TI",
        ),
        Assertion::eq("no-settlement-bundle", bundles_sent, 0),
        Assertion::eq(
            "ledger-shows-lesser-debit",
            initial_balance(&w, sub) - balance_of(&w, sub),
            price - 1,
        ),
    ];
    Ok(w.finish(checks))
}

fn device_swap(config: &ScenarioConfig, seed: u64) -> Result<ScenarioRun, HarnessError> {
    let mut w = World::new(config, "device-swap", seed)?;
    let sub = subscriber_of(&w, 0);
    let pos = shop_of(&w, 0);
    let device = w.device_of(sub);
    let clone = w.add_clone(device)?;

    let swapped = w.start_purchase(0, "swapped-device")?;
    w.run_until(|w| *w.mobile(device).phase() == MobilePhase::Consented);
    let r = match w
        .adversary()
        .last_observed(Hop::PosToMobile, MessageKind::Challenge)
        .and_then(|o| o.message())
    {
        Some(Message::Challenge { r }) => r,
        _ => return Err(HarnessError::Scenario("no challenge observed".into())),
    };
    let offer = match w
        .adversary()
        .last_observed(Hop::PosToMobile, MessageKind::PriceOffer)
        .and_then(|o| o.message())
    {
        Some(Message::PriceOffer { ciphertext }) => ciphertext,
        _ => return Err(HarnessError::Scenario("no price offer observed".into())),
    };
    w.mobile_mut(clone).adopt_observed_session(r, &offer)?;
    w.swap_device(pos, clone);
    w.run();
    let original_phase = w.mobile(device).phase().clone();
    let balance_after_swap = balance_of(&w, sub);

    // Control: the device is lifted and the original put back.
    w.cancel_pos_session(pos);
    let resumed = w.start_purchase(0, "original-resumed")?;
    w.run_until(|w| *w.mobile(device).phase() == MobilePhase::Consented);
    w.swap_device(pos, clone);
    w.swap_device(pos, device);
    w.run();

    let checks = vec![
        verdict_is(&w, swapped, aborted(Step::Execute, "rs-mismatch")),
        Assertion::eq("original-never-paid", original_phase, MobilePhase::Consented),
        Assertion::eq("no-balance-change", balance_after_swap, initial_balance(&w, sub)),
        verdict_is(&w, resumed, Verdict::Settled),
    ];
    Ok(w.finish(checks))
}

fn link_break_resume(config: &ScenarioConfig, seed: u64) -> Result<ScenarioRun, HarnessError> {
    let control = {
        let mut w = World::new(config, "link-break-resume", seed)?;
        w.start_purchase(0, "uninterrupted")?;
        w.run();
        w
    };

    let mut w = World::new(config, "link-break-resume", seed)?;
    let sub = subscriber_of(&w, 0);
    let device = w.device_of(sub);
    let flow = w.start_purchase(0, "interrupted")?;
    w.run_until(|w| *w.mobile(device).phase() == MobilePhase::Offered);
    w.link_down();
    w.run();
    let held_during_break = w.mobile(device).phase().clone();
    w.link_up();
    w.run();

    let frames = |w: &World| -> Vec<_> { w.transcript().messages().map(|r| r.body.clone()).collect() };
    let same = frames(&control) == frames(&w);
    let checks = vec![
        verdict_is(&w, flow, Verdict::Settled),
        Assertion::eq("paused-after-consent", held_during_break, MobilePhase::PaymentSent),
        Assertion::new(
            "transcript-matches-uninterrupted",
            same,
            "message records equal the control run once link events are removed",
        ),
        Assertion::eq("sim-tc", w.mobile(device).sim().tc(), 1),
    ];
    Ok(w.finish(checks))
}

fn repeat_customer(config: &ScenarioConfig, seed: u64) -> Result<ScenarioRun, HarnessError> {
    let mut w = World::new(config, "repeat-customer", seed)?;
    let sub = subscriber_of(&w, 0);
    let device = w.device_of(sub);
    let mut seen = Vec::new();
    let mut flows = Vec::new();
    for n in 0..3 {
        let tmsi = w.mobile(device).sim().tmsi;
        let flow = w.start_purchase(0, &format!("visit-{n}"))?;
        w.run();
        let s = w.mobile(device).session();
        seen.push((tmsi, s.r, s.r_s, s.keyset().cloned()));
        flows.push(flow);
    }
    let n = seen.len();
    let tmsis: HashSet<_> = seen.iter().map(|x| x.0).collect();
    let nonces: HashSet<_> = seen.iter().map(|x| (x.1, x.2)).collect();
    let keys: HashSet<_> = seen.iter().map(|x| x.3.clone()).collect();
    let mut checks: Vec<Assertion> = flows.iter().map(|f| verdict_is(&w, *f, Verdict::Settled)).collect();
    checks.push(Assertion::eq("fresh-tmsi", tmsis.len(), n));
    checks.push(Assertion::eq("fresh-nonces", nonces.len(), n));
    checks.push(Assertion::eq("fresh-keys", keys.len(), n));
    checks.push(Assertion::eq("sim-tc", w.mobile(device).sim().tc(), 3));
    Ok(w.finish(checks))
}

fn pin_exhaustion(config: &ScenarioConfig, seed: u64) -> Result<ScenarioRun, HarnessError> {
    let mut w = World::new(config, "pin-exhaustion", seed)?;
    let sub = subscriber_of(&w, 0);
    let pos = shop_of(&w, 0);
    let device = w.device_of(sub);
    let pin = w.config().subscribers[sub].pin.clone();
    let wrong = if pin == "0000" { "1111" } else { "0000" };
    let retries = w.config().policy.pin_retries;

    let exhausted = w.start_purchase(0, "wrong-pins")?;
    w.script_pins(device, vec![UserResponse::Pin(wrong.to_owned()); usize::from(retries)]);
    w.run();
    let payments = w
        .adversary()
        .observed()
        .iter()
        .filter(|o| o.bytes.first() == Some(&MessageKind::PaymentMessage.tag()))
        .count();

    w.cancel_pos_session(pos);
    let blocked = w.start_purchase(0, "correct-pin-after-block")?;
    w.run();

    let checks = vec![
        verdict_is(&w, exhausted, aborted(Step::PinEntry, "pin-retries-exhausted")),
        verdict_is(&w, blocked, aborted(Step::PinEntry, "pin-blocked")),
        Assertion::eq("no-payment-message", payments, 0),
        Assertion::eq("retries-left", w.mobile(device).sim().pin_retries_left(), 0),
        no_ledger_entries(&w),
    ];
    Ok(w.finish(checks))
}
