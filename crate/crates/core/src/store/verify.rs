//! Offline transcript verification from the config alone.
//!
//! Works only with the codec, the crypto suite and key material derived
//! from the config; it never builds a party. The session key behind a
//! transaction is recovered by trial: each configured K_i is tried against
//! the challenge and auth response seen on that backhaul channel.

use std::collections::BTreeMap;

use sha2::{Digest, Sha256};
use thiserror::Error;

use super::config::{Resolved, ScenarioConfig};
use super::transcript::{chain_digest, parse_jsonl, RecordBody, GENESIS};
use crate::codec::payload::{mno_signed_bytes, pos_signed_bytes};
use crate::codec::{self, Message, MessageKind, TransactionInfo, TransactionResult};
use crate::crypto::{Crypto, KeySet, SubscriberKey, VerifyingKey};
use crate::types::{Hop, Nonce, Party, Pence};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum VerifyError {
    #[error("line {line}: not a transcript record: {reason}")]
    Parse { line: usize, reason: String },
    #[error("record {seq}: {reason}")]
    Record { seq: u64, reason: String },
}

impl VerifyError {
    /// Sequence number of the first failing record, when one is known.
    pub fn seq(&self) -> Option<u64> {
        match self {
            VerifyError::Record { seq, .. } => Some(*seq),
            VerifyError::Parse { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct VerifyReport {
    pub records: usize,
    pub messages: usize,
    pub signatures: usize,
    pub macs: usize,
    pub ledger_entries: usize,
}

/// What the verifier has learned about one backhaul channel.
#[derive(Default)]
struct ChannelView {
    r: Option<Nonce>,
    subscriber: Option<usize>,
    keys: Option<KeySet>,
    pending_forward: Option<codec::TransactionForward>,
}

struct Verifier<'a> {
    config: &'a Resolved,
    crypto: Crypto,
    mno_vk: VerifyingKey,
    pos_vks: Vec<VerifyingKey>,
    channels: BTreeMap<u64, ChannelView>,
    /// Executed TIs by serial, with the subscriber debited.
    executed: BTreeMap<u64, (TransactionInfo, usize)>,
    debits: BTreeMap<String, Pence>,
    credits: BTreeMap<String, Pence>,
    report: VerifyReport,
}

fn fail(seq: u64, reason: impl Into<String>) -> VerifyError {
    VerifyError::Record {
        seq,
        reason: reason.into(),
    }
}

pub fn verify_transcript(text: &str, config: &ScenarioConfig) -> Result<VerifyReport, VerifyError> {
    let resolved = config.resolve().map_err(|e| fail(0, e.to_string()))?;
    let records = parse_jsonl(text).map_err(|(line, e)| VerifyError::Parse {
        line: line + 1,
        reason: e.to_string(),
    })?;
    let crypto = Crypto::hash_suite(Party::Mno);
    let mut v = Verifier {
        mno_vk: crypto
            .keypair_from_seed(&resolved.mno_signing_seed)
            .verifying_key()
            .clone(),
        pos_vks: resolved
            .shops
            .iter()
            .map(|s| crypto.keypair_from_seed(&s.signing_seed).verifying_key().clone())
            .collect(),
        config: &resolved,
        crypto,
        channels: BTreeMap::new(),
        executed: BTreeMap::new(),
        debits: BTreeMap::new(),
        credits: BTreeMap::new(),
        report: VerifyReport::default(),
    };
    let config_digest = hex::encode(Sha256::digest(config.to_toml().as_bytes()));

    let mut prev = GENESIS.to_owned();
    let mut saw_balances = false;
    for (i, record) in records.iter().enumerate() {
        let seq = record.seq;
        if seq != i as u64 {
            return Err(fail(seq, format!("expected sequence number {i}")));
        }
        if chain_digest(&prev, seq, &record.body) != record.digest {
            return Err(fail(seq, "digest does not chain from the previous record"));
        }
        prev = record.digest.clone();
        match &record.body {
            RecordBody::Header { config_digest: d, .. } => {
                if i != 0 {
                    return Err(fail(seq, "header after the first record"));
                }
                if *d != config_digest {
                    return Err(fail(seq, "transcript was made with a different config"));
                }
            }
            _ if i == 0 => return Err(fail(seq, "first record is not a header")),
            RecordBody::Message {
                link,
                direction,
                channel,
                step,
                raw,
                summary,
                adversary,
                original,
                ..
            } => {
                v.report.messages += 1;
                if *link != direction.link() {
                    return Err(fail(seq, "link does not match direction"));
                }
                let bytes = hex::decode(raw).map_err(|e| fail(seq, format!("raw is not hex: {e}")))?;
                let decoded = codec::decode(&bytes);
                let expected_step = bytes
                    .first()
                    .and_then(|t| MessageKind::from_tag(*t))
                    .map(MessageKind::step);
                if *step != expected_step {
                    return Err(fail(seq, "step label does not match the message tag"));
                }
                let delivered = match decoded {
                    Ok(m) if *summary == m.summary() => Some(m),
                    Err(e) if *summary == format!("undecodable: {e}") => None,
                    _ => return Err(fail(seq, "summary does not match the raw bytes")),
                };
                let dropped = adversary.as_deref() == Some("drop");
                let injected = adversary.as_deref() == Some("inject");
                // Frames the MNO sent are judged as sent; frames it received as delivered.
                let judged = match original {
                    Some(hex_bytes) if *direction != Hop::PosToMno => {
                        let bytes =
                            hex::decode(hex_bytes).map_err(|e| fail(seq, format!("original is not hex: {e}")))?;
                        Some(codec::decode(&bytes).map_err(|e| fail(seq, format!("original does not decode: {e}")))?)
                    }
                    _ => delivered,
                };
                if let Some(msg) = judged {
                    v.message(seq, *direction, *channel, &msg, dropped, injected)?;
                }
            }
            RecordBody::LinkState { .. } => {}
            RecordBody::Ledger {
                txn_serial,
                debit,
                credit,
                amount,
                ts_tr,
            } => {
                v.report.ledger_entries += 1;
                let Some((ti, subscriber)) = v.executed.get(txn_serial) else {
                    return Err(fail(
                        seq,
                        format!("ledger entry {txn_serial} has no signed transaction result"),
                    ));
                };
                if ti.amount != *amount || ti.ts_tr != *ts_tr {
                    return Err(fail(
                        seq,
                        format!(
                            "ledger entry {txn_serial} says {amount}, the signed result {}",
                            ti.amount
                        ),
                    ));
                }
                if v.config.subscribers[*subscriber].imsi.to_string() != *debit {
                    return Err(fail(seq, format!("ledger entry {txn_serial} debits the wrong account")));
                }
                if !v.config.shops.iter().any(|s| s.bank_ref == *credit) {
                    return Err(fail(
                        seq,
                        format!("ledger entry {txn_serial} credits an unknown account"),
                    ));
                }
                *v.debits.entry(debit.clone()).or_default() += amount;
                *v.credits.entry(credit.clone()).or_default() += amount;
            }
            RecordBody::Balances { subscribers, credits } => {
                saw_balances = true;
                if v.report.ledger_entries != v.executed.len() {
                    return Err(fail(seq, "an executed transaction is missing from the ledger"));
                }
                for s in &v.config.subscribers {
                    let imsi = s.imsi.to_string();
                    let debited = v.debits.get(&imsi).copied().unwrap_or(0);
                    let expected = s.balance.checked_sub(debited);
                    if subscribers.get(&imsi).copied() != expected {
                        return Err(fail(seq, format!("balance of {imsi} is not conserved")));
                    }
                }
                for shop in &v.config.shops {
                    let credited = v.credits.get(&shop.bank_ref).copied().unwrap_or(0);
                    if credits.get(&shop.bank_ref).copied() != Some(credited) {
                        return Err(fail(seq, format!("credit to {} is not conserved", shop.bank_ref)));
                    }
                }
                if subscribers.len() != v.config.subscribers.len() || credits.len() != v.config.shops.len() {
                    return Err(fail(seq, "balances name accounts outside the config"));
                }
            }
        }
    }
    if !saw_balances {
        return Err(fail(records.len() as u64, "transcript ends without final balances"));
    }
    v.report.records = records.len();
    Ok(v.report)
}

impl Verifier<'_> {
    fn message(
        &mut self,
        seq: u64,
        hop: Hop,
        channel: u64,
        msg: &Message,
        dropped: bool,
        injected: bool,
    ) -> Result<(), VerifyError> {
        match (hop, msg) {
            (Hop::MnoToPos, Message::Challenge { r }) => {
                *self.channels.entry(channel).or_default() = ChannelView {
                    r: Some(*r),
                    ..ChannelView::default()
                };
            }
            (Hop::PosToMno, Message::AuthResponse { ciphertext }) => {
                let view = self.channels.entry(channel).or_default();
                let Some(r) = view.r else { return Ok(()) };
                for (i, s) in self.config.subscribers.iter().enumerate() {
                    let Ok(k_c) = self.crypto.a8(&SubscriberKey::new(s.k_i), &r) else {
                        continue;
                    };
                    let opened = self.crypto.decrypt(&k_c, ciphertext).ok();
                    if opened.is_some_and(|p| p.get(..16) == Some(r.as_bytes())) {
                        view.subscriber = Some(i);
                        view.keys = Some(self.crypto.key_chain(&k_c));
                        break;
                    }
                }
            }
            (Hop::PosToMno, Message::TransactionForward(fwd)) if !dropped => {
                self.channels.entry(channel).or_default().pending_forward = Some(fwd.clone());
            }
            (Hop::MnoToPos, Message::TransactionResult(TransactionResult::Executed(signed))) => {
                if !injected {
                    self.mno_signature(seq, &signed.enc_ti, &signed.mno_signature)?;
                }
                let view = self.channels.entry(channel).or_default();
                let (Some(keys), Some(subscriber), Some(fwd)) =
                    (view.keys.clone(), view.subscriber, view.pending_forward.take())
                else {
                    return Err(fail(
                        seq,
                        "executed result without an authenticated request on its channel",
                    ));
                };
                if !self.crypto.verify_mac(&keys.k_c1, &fwd.enc_trm, &fwd.mac) {
                    return Err(fail(seq, "the executed request's MAC does not verify"));
                }
                self.report.macs += 1;
                let ti = self
                    .crypto
                    .decrypt(&keys.k_c2, &signed.enc_ti)
                    .ok()
                    .and_then(|b| TransactionInfo::from_bytes(&b).ok())
                    .ok_or_else(|| fail(seq, "transaction info does not open under the session key"))?;
                if self.executed.insert(ti.txn_serial.0, (ti, subscriber)).is_some() {
                    return Err(fail(seq, format!("transaction {} executed twice", ti.txn_serial.0)));
                }
            }
            (Hop::MnoToPos, Message::TransactionResult(TransactionResult::Failed)) => {
                self.channels.entry(channel).or_default().pending_forward = None;
            }
            (Hop::PosToMobile, Message::SettlementBundle(bundle)) if !injected => {
                self.mno_signature(seq, &bundle.result.enc_ti, &bundle.result.mno_signature)?;
                let data = pos_signed_bytes(&bundle.result.enc_ti, &bundle.result.mno_signature, &bundle.details);
                if !self
                    .pos_vks
                    .iter()
                    .any(|vk| self.crypto.verify_sig(vk, &data, &bundle.pos_signature))
                {
                    return Err(fail(seq, "terminal signature does not verify"));
                }
                self.report.signatures += 1;
            }
            _ => {}
        }
        Ok(())
    }

    fn mno_signature(
        &mut self,
        seq: u64,
        enc_ti: &crate::crypto::Ciphertext,
        signature: &crate::crypto::Signature,
    ) -> Result<(), VerifyError> {
        if !self
            .crypto
            .verify_sig(&self.mno_vk, &mno_signed_bytes(enc_ti), signature)
        {
            return Err(fail(seq, "operator signature does not verify"));
        }
        self.report.signatures += 1;
        Ok(())
    }
}
