//! The shop's point-of-sale terminal.
//!
//! The terminal starts each session, routes the customer to their network
//! by LAI, relays authentication traffic, and holds exactly one per-session
//! key: K_c2, received under K_p. It checks the PI half of the payment
//! message, relays the opaque TRM half untouched, and countersigns the
//! MNO's result together with the shopping details.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::codec::payload::{decode_key_delivery, mno_signed_bytes, pos_signed_bytes};
use crate::codec::{
    Message, PaymentInfo, PaymentMessage, PriceQuote, SettlementBundle, ShoppingDetails, SignedTransactionInfo,
    TransactionForward, TransactionInfo, TransactionResult,
};
use crate::crypto::{Ciphertext, Crypto, CryptoError, EncryptionKey, KeyKind, ShopKey, SignatureKeyPair, VerifyingKey};
use crate::types::{Lai, Millis, Party, Plmn, ReceiptNo, ShopId, Step, Tmsi};

/// Bytes of synthetic IV every ciphertext starts with.
const MIN_CIPHERTEXT_LEN: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimeWindowPolicy {
    max_skew: Millis,
}

impl TimeWindowPolicy {
    pub fn new(max_skew: Millis) -> Result<Self, PosError> {
        if max_skew == 0 {
            return Err(PosError::Config("time window must be positive".into()));
        }
        Ok(Self { max_skew })
    }

    pub fn max_skew(&self) -> Millis {
        self.max_skew
    }

    pub fn admits(&self, ts: Millis, now: Millis) -> bool {
        now.abs_diff(ts) <= self.max_skew
    }
}

#[derive(Debug, Clone)]
pub struct MnoEndpoint {
    pub name: String,
    pub verifying_key: VerifyingKey,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PosPhase {
    AwaitingId,
    Authenticating,
    OfferSent,
    Forwarded,
    Settled,
    Disputed,
    Aborted { step: Step, reason: String },
}

impl PosPhase {
    fn name(&self) -> &'static str {
        match self {
            PosPhase::AwaitingId => "awaiting-id",
            PosPhase::Authenticating => "authenticating",
            PosPhase::OfferSent => "offer-sent",
            PosPhase::Forwarded => "forwarded",
            PosPhase::Settled => "settled",
            PosPhase::Disputed => "disputed",
            PosPhase::Aborted { .. } => "aborted",
        }
    }

    pub fn is_finished(&self) -> bool {
        matches!(self, PosPhase::Settled | PosPhase::Disputed | PosPhase::Aborted { .. })
    }
}

#[derive(Debug, Clone)]
pub struct PosSession {
    pub receipt_no: ReceiptNo,
    pub details: ShoppingDetails,
    pub network: Option<Plmn>,
    k_c2: Option<EncryptionKey>,
    pub pi: Option<PaymentInfo>,
    pub phase: PosPhase,
}

impl PosSession {
    pub fn total_price(&self) -> u64 {
        self.details.total
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PosError {
    #[error("a session is already active")]
    SessionActive,
    #[error("no active session")]
    NoSession,
    #[error("{op} not allowed while {phase}")]
    WrongPhase { op: &'static str, phase: &'static str },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("unexpected message {0}")]
    Unexpected(&'static str),
    #[error("session aborted at step {step}: {reason}")]
    Aborted { step: Step, reason: String },
    #[error(transparent)]
    Crypto(#[from] CryptoError),
}

/// Evidence kept when the executed amount differs from the agreed price.
#[derive(Debug, Clone)]
pub struct Dispute {
    pub receipt_no: ReceiptNo,
    pub expected: u64,
    pub signed_ti: SignedTransactionInfo,
    pub ti: TransactionInfo,
    pub pi: PaymentInfo,
}

#[derive(Debug, Clone)]
pub enum Settlement {
    Bundle(SettlementBundle),
    Dispute(Dispute),
}

#[derive(Debug)]
pub struct Pos {
    crypto: Crypto,
    shop_id: ShopId,
    k_p: ShopKey,
    signing: SignatureKeyPair,
    directory: BTreeMap<Plmn, MnoEndpoint>,
    policy: TimeWindowPolicy,
    next_receipt: u64,
    session: Option<PosSession>,
}

impl Pos {
    pub fn new(
        crypto: Crypto,
        shop_id: ShopId,
        k_p: ShopKey,
        signing: SignatureKeyPair,
        policy: TimeWindowPolicy,
    ) -> Self {
        crypto.hold(KeyKind::ShopKey, k_p.as_bytes());
        crypto.hold(KeyKind::Signing(Party::Pos), signing.signing_key());
        Self {
            crypto,
            shop_id,
            k_p,
            signing,
            directory: BTreeMap::new(),
            policy,
            next_receipt: 1,
            session: None,
        }
    }

    /// A terminal may be registered with several networks.
    pub fn register_mno(&mut self, plmn: Plmn, endpoint: MnoEndpoint) {
        self.crypto
            .hold(KeyKind::Verifying(Party::Mno), &endpoint.verifying_key.0);
        self.directory.insert(plmn, endpoint);
    }

    pub fn shop_id(&self) -> ShopId {
        self.shop_id
    }

    pub fn verifying_key(&self) -> &VerifyingKey {
        self.signing.verifying_key()
    }

    pub fn session(&self) -> Option<&PosSession> {
        self.session.as_ref()
    }

    fn active(&mut self, op: &'static str, phase: PosPhase) -> Result<&mut PosSession, PosError> {
        let session = self.session.as_mut().ok_or(PosError::NoSession)?;
        if session.phase != phase {
            return Err(PosError::WrongPhase {
                op,
                phase: session.phase.name(),
            });
        }
        Ok(session)
    }

    fn abort(&mut self, step: Step, reason: &str) -> PosError {
        if let Some(s) = self.session.as_mut() {
            s.phase = PosPhase::Aborted {
                step,
                reason: reason.to_owned(),
            };
        }
        PosError::Aborted {
            step,
            reason: reason.to_owned(),
        }
    }

    /// Step 1. Receipt numbers are sequential per terminal.
    pub fn start_session(&mut self, details: ShoppingDetails) -> Result<Message, PosError> {
        if self.session.as_ref().is_some_and(|s| !s.phase.is_finished()) {
            return Err(PosError::SessionActive);
        }
        if details.total == 0 || !details.is_consistent() {
            return Err(PosError::Config(
                "shopping details must have a positive, consistent total".into(),
            ));
        }
        let receipt_no = ReceiptNo(self.next_receipt);
        self.next_receipt += 1;
        self.session = Some(PosSession {
            receipt_no,
            details,
            network: None,
            k_c2: None,
            pi: None,
            phase: PosPhase::AwaitingId,
        });
        Ok(Message::IdRequest)
    }

    pub fn cancel_session(&mut self) {
        if let Some(s) = self.session.as_mut().filter(|s| !s.phase.is_finished()) {
            s.phase = PosPhase::Aborted {
                step: Step::IdRequest,
                reason: "cancelled".into(),
            };
        }
    }

    /// Steps 4-5: pick the network from the LAI and append the shop ID.
    pub fn route_by_lai(&mut self, tmsi: Tmsi, lai: Lai) -> Result<(Plmn, Message), PosError> {
        let shop_id = self.shop_id;
        self.active("id response", PosPhase::AwaitingId)?;
        if !self.directory.contains_key(&lai.plmn) {
            return Err(self.abort(Step::AuthForward, "unknown-network"));
        }
        let session = self.session.as_mut().expect("checked above");
        session.network = Some(lai.plmn);
        session.phase = PosPhase::Authenticating;
        Ok((lai.plmn, Message::AuthForward { tmsi, lai, shop_id }))
    }

    /// Authentication traffic from the MNO. Returns what to pass on to the
    /// mobile; Declined and Stop end the session.
    pub fn relay_from_mno(&mut self, msg: &Message) -> Result<Message, PosError> {
        self.active("relay", PosPhase::Authenticating)?;
        match msg {
            Message::Challenge { .. } | Message::AuthConfirm { .. } => Ok(msg.clone()),
            Message::Declined => Err(self.abort(Step::Declined, "declined")),
            Message::Stop => Err(self.abort(Step::MnoVerify, "stop")),
            _ => Err(PosError::Unexpected("not an authentication message")),
        }
    }

    /// Authentication traffic from the mobile, passed on to the MNO.
    pub fn relay_from_mobile(&mut self, msg: &Message) -> Result<Message, PosError> {
        self.active("relay", PosPhase::Authenticating)?;
        match msg {
            Message::AuthResponse { .. } | Message::AuthSuccess => Ok(msg.clone()),
            _ => Err(PosError::Unexpected("not an authentication message")),
        }
    }

    /// Steps 14-15: recover K_c2 with K_p, then offer the price under K_c2.
    pub fn accept_key_delivery(&mut self, ct: &Ciphertext) -> Result<Message, PosError> {
        self.active("key delivery", PosPhase::Authenticating)?;
        let delivered = self
            .crypto
            .decrypt(&self.k_p, ct)
            .ok()
            .and_then(|pt| decode_key_delivery(&pt).ok())
            .filter(|(shop, _)| *shop == self.shop_id);
        let Some((_, k_c2)) = delivered else {
            return Err(self.abort(Step::KeyDelivery, "key-undecryptable"));
        };
        self.crypto.hold(KeyKind::EncryptionKey, k_c2.as_bytes());
        let session = self.session.as_mut().expect("checked above");
        let quote = PriceQuote {
            total_price: session.details.total,
            receipt_no: session.receipt_no,
        };
        let offer = self.crypto.encrypt(&k_c2, &quote.to_bytes())?;
        session.k_c2 = Some(k_c2);
        session.phase = PosPhase::OfferSent;
        Ok(Message::PriceOffer { ciphertext: offer })
    }

    /// Steps 20-21: check the PI half, then relay the opaque half as received.
    pub fn verify_payment_message(
        &mut self,
        msg: &PaymentMessage,
        now: Millis,
    ) -> Result<TransactionForward, PosError> {
        let policy = self.policy;
        let session = self.active("payment", PosPhase::OfferSent)?;
        let k_c2 = session.k_c2.clone().expect("offer sent after key delivery");
        let (receipt_no, total) = (session.receipt_no, session.details.total);
        let pi = self
            .crypto
            .decrypt(&k_c2, &msg.enc_pi)
            .ok()
            .and_then(|pt| PaymentInfo::from_bytes(&pt).ok());
        let Some(pi) = pi.filter(|pi| pi.receipt_no == receipt_no && pi.total_price == total) else {
            return Err(self.abort(Step::PosVerify, "pi-mismatch"));
        };
        if !policy.admits(pi.ts_u, now) {
            return Err(self.abort(Step::PosVerify, "ts-stale"));
        }
        // The MAC cannot be checked here; only the framing can.
        if msg.enc_trm.len() <= MIN_CIPHERTEXT_LEN {
            return Err(self.abort(Step::PosVerify, "trm-malformed"));
        }
        let session = self.session.as_mut().expect("checked above");
        session.pi = Some(pi);
        session.phase = PosPhase::Forwarded;
        Ok(TransactionForward {
            enc_trm: msg.enc_trm.clone(),
            mac: msg.mac,
            ts_u: pi.ts_u,
        })
    }

    /// Steps 23-25: check the MNO's signed TI against the agreed price and
    /// countersign it with the shopping details, or raise a dispute.
    pub fn settle(&mut self, result: &TransactionResult) -> Result<Settlement, PosError> {
        let session = self.active("settle", PosPhase::Forwarded)?;
        let network = session.network.expect("routed before forwarding");
        let k_c2 = session.k_c2.clone().expect("keyed before forwarding");
        let signed = match result {
            TransactionResult::Failed => return Err(self.abort(Step::Result, "transaction-failed")),
            TransactionResult::Executed(signed) => signed.clone(),
        };
        let mno_vk = &self.directory[&network].verifying_key;
        if !self
            .crypto
            .verify_sig(mno_vk, &mno_signed_bytes(&signed.enc_ti), &signed.mno_signature)
        {
            return Err(self.abort(Step::Settle, "mno-signature"));
        }
        let ti = self
            .crypto
            .decrypt(&k_c2, &signed.enc_ti)
            .ok()
            .and_then(|pt| TransactionInfo::from_bytes(&pt).ok());
        let Some(ti) = ti else {
            return Err(self.abort(Step::Settle, "ti-undecryptable"));
        };
        let session = self.session.as_mut().expect("checked above");
        let pi = session.pi.expect("pi verified before forwarding");
        if ti.amount != session.details.total {
            session.phase = PosPhase::Disputed;
            return Ok(Settlement::Dispute(Dispute {
                receipt_no: session.receipt_no,
                expected: session.details.total,
                signed_ti: signed,
                ti,
                pi,
            }));
        }
        let details = session.details.clone();
        let pos_signature = self.crypto.sign(
            &self.signing,
            &pos_signed_bytes(&signed.enc_ti, &signed.mno_signature, &details),
        );
        session.phase = PosPhase::Settled;
        Ok(Settlement::Bundle(SettlementBundle {
            result: signed,
            details,
            pos_signature,
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::payload::key_delivery_bytes;
    use crate::codec::LineItem;
    use crate::crypto::{MacTag, SignatureKeyPair};
    use crate::types::{Nonce, TxnSerial};

    const SHOP: ShopId = ShopId([0, 0, 0, 1]);

    struct Net {
        other: Crypto,
        mno_keys: SignatureKeyPair,
        k_p: ShopKey,
        k_c2: EncryptionKey,
    }

    fn plmn() -> Plmn {
        Plmn::new(234, 15, false).unwrap()
    }

    fn lai() -> Lai {
        Lai { plmn: plmn(), lac: 3 }
    }

    fn details(total: u64) -> ShoppingDetails {
        ShoppingDetails::from_items(vec![LineItem {
            description: "Umbrella".into(),
            price: total,
        }])
        .unwrap()
    }

    fn setup() -> (Pos, Net) {
        let crypto = Crypto::hash_suite(Party::Pos);
        let other = crypto.for_party(Party::Mno);
        let mno_keys = other.keypair_from_seed(&[1; 32]);
        let k_p = ShopKey::new([7; 32]);
        let mut pos = Pos::new(
            crypto.clone(),
            SHOP,
            k_p.clone(),
            crypto.keypair_from_seed(&[2; 32]),
            TimeWindowPolicy::new(5_000).unwrap(),
        );
        pos.register_mno(
            plmn(),
            MnoEndpoint {
                name: "home".into(),
                verifying_key: mno_keys.verifying_key().clone(),
            },
        );
        let net = Net {
            other,
            mno_keys,
            k_p,
            k_c2: EncryptionKey::new([9; 32]),
        };
        (pos, net)
    }

    fn keyed(pos: &mut Pos, net: &Net, total: u64) -> PriceQuote {
        pos.start_session(details(total)).unwrap();
        pos.route_by_lai(Tmsi([1; 4]), lai()).unwrap();
        let delivery = net
            .other
            .encrypt(&net.k_p, &key_delivery_bytes(&SHOP, &net.k_c2))
            .unwrap();
        let Message::PriceOffer { ciphertext } = pos.accept_key_delivery(&delivery).unwrap() else {
            panic!()
        };
        PriceQuote::from_bytes(&net.other.decrypt(&net.k_c2, &ciphertext).unwrap()).unwrap()
    }

    fn payment(net: &Net, quote: PriceQuote, ts_u: Millis) -> PaymentMessage {
        let pi = PaymentInfo {
            receipt_no: quote.receipt_no,
            total_price: quote.total_price,
            ts_u,
        };
        PaymentMessage {
            enc_pi: net.other.encrypt(&net.k_c2, &pi.to_bytes()).unwrap(),
            enc_trm: Ciphertext::from(vec![0xAB; 64]),
            mac: MacTag([0xCD; 32]),
        }
    }

    fn executed(net: &Net, amount: u64) -> TransactionResult {
        let ti = TransactionInfo {
            txn_serial: TxnSerial(1),
            amount,
            ts_tr: 0,
        };
        let enc_ti = net.other.encrypt(&net.k_c2, &ti.to_bytes()).unwrap();
        let mno_signature = net.other.sign(&net.mno_keys, &mno_signed_bytes(&enc_ti));
        TransactionResult::Executed(SignedTransactionInfo { enc_ti, mno_signature })
    }

    #[test]
    fn session_lifecycle() {
        let (mut pos, _) = setup();
        assert!(matches!(pos.start_session(details(0)), Err(PosError::Config(_))));
        assert_eq!(pos.start_session(details(450)).unwrap(), Message::IdRequest);
        assert_eq!(pos.start_session(details(450)), Err(PosError::SessionActive));
        let first = pos.session().unwrap().receipt_no;
        pos.cancel_session();
        pos.start_session(details(450)).unwrap();
        assert_eq!(pos.session().unwrap().receipt_no, ReceiptNo(first.0 + 1));
        assert!(TimeWindowPolicy::new(0).is_err());
    }

    #[test]
    fn routing_by_network_code() {
        let (mut pos, _) = setup();
        pos.start_session(details(450)).unwrap();
        let (net, fwd) = pos.route_by_lai(Tmsi([1; 4]), lai()).unwrap();
        assert_eq!(net, plmn());
        assert!(matches!(fwd, Message::AuthForward { shop_id, .. } if shop_id == SHOP));

        pos.cancel_session();
        pos.start_session(details(450)).unwrap();
        let foreign = Lai {
            plmn: Plmn::new(208, 1, false).unwrap(),
            lac: 3,
        };
        assert!(matches!(
            pos.route_by_lai(Tmsi([1; 4]), foreign),
            Err(PosError::Aborted {
                step: Step::AuthForward,
                ..
            })
        ));
    }

    #[test]
    fn relays_and_terminal_replies() {
        let (mut pos, _) = setup();
        pos.start_session(details(450)).unwrap();
        pos.route_by_lai(Tmsi([1; 4]), lai()).unwrap();
        let ch = Message::Challenge { r: Nonce([1; 16]) };
        assert_eq!(pos.relay_from_mno(&ch).unwrap(), ch);
        assert!(pos.relay_from_mobile(&ch).is_err());
        assert_eq!(
            pos.relay_from_mobile(&Message::AuthSuccess).unwrap(),
            Message::AuthSuccess
        );
        assert!(matches!(
            pos.relay_from_mno(&Message::Stop),
            Err(PosError::Aborted {
                step: Step::MnoVerify,
                ..
            })
        ));
        pos.start_session(details(450)).unwrap();
        pos.route_by_lai(Tmsi([1; 4]), lai()).unwrap();
        assert!(matches!(
            pos.relay_from_mno(&Message::Declined),
            Err(PosError::Aborted {
                step: Step::Declined,
                ..
            })
        ));
    }

    #[test]
    fn key_delivery_under_another_shops_key_aborts() {
        let (mut pos, net) = setup();
        let quote = keyed(&mut pos, &net, 450);
        assert_eq!(quote.total_price, 450);
        assert_eq!(quote.receipt_no, pos.session().unwrap().receipt_no);

        let (mut pos, net) = setup();
        pos.start_session(details(450)).unwrap();
        pos.route_by_lai(Tmsi([1; 4]), lai()).unwrap();
        let wrong = net
            .other
            .encrypt(
                &ShopKey::new([8; 32]),
                &key_delivery_bytes(&ShopId([0, 0, 0, 2]), &net.k_c2),
            )
            .unwrap();
        assert!(matches!(
            pos.accept_key_delivery(&wrong),
            Err(PosError::Aborted {
                step: Step::KeyDelivery,
                ..
            })
        ));
    }

    #[test]
    fn payment_checks_and_byte_identical_relay() {
        let (mut pos, net) = setup();
        let quote = keyed(&mut pos, &net, 450);
        let msg = payment(&net, quote, 1_000);
        let fwd = pos.verify_payment_message(&msg, 1_200).unwrap();
        assert_eq!(fwd.enc_trm, msg.enc_trm);
        assert_eq!(fwd.mac, msg.mac);
        assert_eq!(fwd.ts_u, 1_000);

        let (mut pos, net) = setup();
        let mut quote = keyed(&mut pos, &net, 450);
        quote.total_price = 400;
        assert!(matches!(
            pos.verify_payment_message(&payment(&net, quote, 1_000), 1_000),
            Err(PosError::Aborted { reason, .. }) if reason == "pi-mismatch"
        ));

        let (mut pos, net) = setup();
        let quote = keyed(&mut pos, &net, 450);
        assert!(matches!(
            pos.verify_payment_message(&payment(&net, quote, 1_000), 7_000),
            Err(PosError::Aborted { reason, .. }) if reason == "ts-stale"
        ));
    }

    #[test]
    fn settlement_outcomes() {
        let (mut pos, net) = setup();
        let quote = keyed(&mut pos, &net, 450);
        pos.verify_payment_message(&payment(&net, quote, 0), 0).unwrap();
        let Settlement::Bundle(b) = pos.settle(&executed(&net, 450)).unwrap() else {
            panic!("dispute")
        };
        assert!(net.other.verify_sig(
            pos.verifying_key(),
            &pos_signed_bytes(&b.result.enc_ti, &b.result.mno_signature, &b.details),
            &b.pos_signature
        ));
        assert_eq!(pos.session().unwrap().phase, PosPhase::Settled);

        let quote = keyed(&mut pos, &net, 450);
        pos.verify_payment_message(&payment(&net, quote, 0), 0).unwrap();
        let Settlement::Dispute(d) = pos.settle(&executed(&net, 350)).unwrap() else {
            panic!("bundle")
        };
        assert_eq!((d.expected, d.ti.amount, d.pi.total_price), (450, 350, 450));
        assert_eq!(pos.session().unwrap().phase, PosPhase::Disputed);

        let quote = keyed(&mut pos, &net, 450);
        pos.verify_payment_message(&payment(&net, quote, 0), 0).unwrap();
        let TransactionResult::Executed(mut forged) = executed(&net, 450) else {
            unreachable!()
        };
        forged.mno_signature.0[0] ^= 1;
        assert!(matches!(
            pos.settle(&TransactionResult::Executed(forged)),
            Err(PosError::Aborted { step: Step::Settle, .. })
        ));

        let quote = keyed(&mut pos, &net, 450);
        pos.verify_payment_message(&payment(&net, quote, 0), 0).unwrap();
        assert!(matches!(
            pos.settle(&TransactionResult::Failed),
            Err(PosError::Aborted { step: Step::Result, .. })
        ));
    }

    #[test]
    fn holds_only_its_own_keys_and_k_c2() {
        let (mut pos, net) = setup();
        keyed(&mut pos, &net, 450);
        let held = pos.crypto.probe().holdings(Party::Pos);
        let expected = [
            KeyKind::ShopKey,
            KeyKind::Signing(Party::Pos),
            KeyKind::EncryptionKey,
            KeyKind::Verifying(Party::Mno),
        ];
        assert_eq!(held, expected.into_iter().collect());
    }
}
