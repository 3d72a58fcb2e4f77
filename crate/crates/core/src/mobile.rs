//! The customer's handset and SIM.
//!
//! K_i, the PIN and the transaction counter live in [`SimState`] and are
//! never serialized. The device answers the MNO's challenge with a fresh
//! R_s, checks the MNO's confirmation, gates payment on the PIN, builds the
//! two-part payment message and finally checks both settlement signatures.

use std::fmt;

use thiserror::Error;

use crate::codec::payload::{mno_signed_bytes, pos_signed_bytes};
use crate::codec::{
    PaymentInfo, PaymentMessage, PriceQuote, SettlementBundle, ShoppingDetails, TransactionInfo, TransactionRequest,
};
use crate::crypto::{
    Ciphertext, Crypto, CryptoError, KeyKind, KeySet, SessionKey, Signature, SimRng, SubscriberKey, VerifyingKey,
};
use crate::types::{Imsi, Lai, LengthError, Millis, Nonce, Party, Pence, Step, Tmsi};

pub const MAX_PIN_RETRIES: u8 = 3;

/// Everything stored on the SIM.
pub struct SimState {
    pub imsi: Imsi,
    pub tmsi: Tmsi,
    pub lai: Lai,
    k_i: SubscriberKey,
    pin: String,
    pin_retry_limit: u8,
    pin_retries_left: u8,
    tc: u64,
}

impl SimState {
    pub fn new(
        imsi: Imsi,
        tmsi: Tmsi,
        lai: Lai,
        k_i: SubscriberKey,
        pin: impl Into<String>,
    ) -> Result<Self, MobileError> {
        let pin = pin.into();
        if !(4..=6).contains(&pin.len()) || !pin.bytes().all(|b| b.is_ascii_digit()) {
            return Err(MobileError::InvalidPin);
        }
        Ok(Self {
            imsi,
            tmsi,
            lai,
            k_i,
            pin,
            pin_retry_limit: MAX_PIN_RETRIES,
            pin_retries_left: MAX_PIN_RETRIES,
            tc: 0,
        })
    }

    /// Lowers the number of PIN attempts allowed; capped at [`MAX_PIN_RETRIES`].
    pub fn with_retry_limit(mut self, limit: u8) -> Result<Self, MobileError> {
        if !(1..=MAX_PIN_RETRIES).contains(&limit) {
            return Err(MobileError::InvalidRetryLimit(limit));
        }
        self.pin_retry_limit = limit;
        self.pin_retries_left = limit;
        Ok(self)
    }

    pub fn tc(&self) -> u64 {
        self.tc
    }

    pub fn pin_retries_left(&self) -> u8 {
        self.pin_retries_left
    }
}

impl fmt::Debug for SimState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SimState")
            .field("imsi", &self.imsi)
            .field("tmsi", &self.tmsi)
            .field("lai", &self.lai)
            .field("pin_retries_left", &self.pin_retries_left)
            .field("tc", &self.tc)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MobilePhase {
    Idle,
    Challenged,
    Authenticated,
    Offered,
    Consented,
    PaymentSent,
    Settled,
    Aborted { step: Step, reason: String },
}

impl MobilePhase {
    fn name(&self) -> &'static str {
        match self {
            MobilePhase::Idle => "idle",
            MobilePhase::Challenged => "challenged",
            MobilePhase::Authenticated => "authenticated",
            MobilePhase::Offered => "offered",
            MobilePhase::Consented => "consented",
            MobilePhase::PaymentSent => "payment-sent",
            MobilePhase::Settled => "settled",
            MobilePhase::Aborted { .. } => "aborted",
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct MobileSession {
    pub r: Option<Nonce>,
    pub r_s: Option<Nonce>,
    k_c: Option<SessionKey>,
    keyset: Option<KeySet>,
    pub quote: Option<PriceQuote>,
    pub pi: Option<PaymentInfo>,
}

impl MobileSession {
    pub fn keyset(&self) -> Option<&KeySet> {
        self.keyset.as_ref()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MobileError {
    #[error("{op} not allowed while {phase}")]
    WrongPhase { op: &'static str, phase: &'static str },
    #[error(transparent)]
    Length(#[from] LengthError),
    #[error(transparent)]
    Crypto(#[from] CryptoError),
    #[error("pin must be 4 to 6 digits")]
    InvalidPin,
    #[error("pin retry limit must be between 1 and {MAX_PIN_RETRIES}, got {0}")]
    InvalidRetryLimit(u8),
    #[error("{0} does not decrypt to a valid payload")]
    Unreadable(&'static str),
}

/// What the customer does when shown the price.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum UserResponse {
    Pin(String),
    Decline,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ConfirmOutcome {
    Success,
    Abort(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OfferOutcome {
    Proceed(PriceQuote),
    PinFail { retries_left: u8 },
    Declined,
    Aborted(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ReceiptVerdict {
    Accepted,
    Rejected(String),
}

#[derive(Debug, Clone)]
pub struct SettlementReceipt {
    pub ti: Option<TransactionInfo>,
    pub sd: ShoppingDetails,
    pub mno_signature: Signature,
    pub pos_signature: Signature,
    pub verdict: ReceiptVerdict,
}

/// Device behaviour; anything but `Honest` is for adversarial scenarios.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Behavior {
    #[default]
    Honest,
    /// Put a price lower by `by` into the TRM while the PI shown to the
    /// terminal stays truthful.
    UnderstateTrm { by: Pence },
}

/// Verifying keys the device trusts, provisioned at setup.
#[derive(Debug, Clone)]
pub struct TrustAnchors {
    pub mno: VerifyingKey,
    pub pos: Vec<VerifyingKey>,
}

#[derive(Debug)]
pub struct Mobile {
    crypto: Crypto,
    rng: SimRng,
    sim: SimState,
    trust: TrustAnchors,
    behavior: Behavior,
    session: MobileSession,
    phase: MobilePhase,
}

impl Mobile {
    pub fn new(crypto: Crypto, rng: SimRng, sim: SimState, trust: TrustAnchors) -> Self {
        crypto.hold(KeyKind::SubscriberKey, sim.k_i.as_bytes());
        crypto.hold(KeyKind::Pin, sim.pin.as_bytes());
        crypto.hold(KeyKind::Verifying(Party::Mno), &trust.mno.0);
        for vk in &trust.pos {
            crypto.hold(KeyKind::Verifying(Party::Pos), &vk.0);
        }
        Self {
            crypto,
            rng,
            sim,
            trust,
            behavior: Behavior::Honest,
            session: MobileSession::default(),
            phase: MobilePhase::Idle,
        }
    }

    pub fn with_behavior(mut self, behavior: Behavior) -> Self {
        self.behavior = behavior;
        self
    }

    pub fn set_behavior(&mut self, behavior: Behavior) {
        self.behavior = behavior;
    }

    pub fn sim(&self) -> &SimState {
        &self.sim
    }

    pub fn phase(&self) -> &MobilePhase {
        &self.phase
    }

    pub fn session(&self) -> &MobileSession {
        &self.session
    }

    /// TMSI reallocated by the network outside the payment flow.
    pub fn set_tmsi(&mut self, tmsi: Tmsi) {
        self.sim.tmsi = tmsi;
    }

    fn wrong_phase(&self, op: &'static str) -> MobileError {
        MobileError::WrongPhase {
            op,
            phase: self.phase.name(),
        }
    }

    fn abort(&mut self, step: Step, reason: &str) -> String {
        self.phase = MobilePhase::Aborted {
            step,
            reason: reason.to_owned(),
        };
        reason.to_owned()
    }

    /// Steps 2-3. Starts a new session.
    pub fn handle_id_request(&mut self) -> (Tmsi, Lai) {
        self.session = MobileSession::default();
        self.phase = MobilePhase::Idle;
        (self.sim.tmsi, self.sim.lai)
    }

    /// Steps 7-8: returns E_Kc(R ‖ R_s) with a fresh R_s.
    pub fn handle_challenge(&mut self, r: &[u8]) -> Result<Ciphertext, MobileError> {
        let r = Nonce::from_slice(r)?;
        if self.phase != MobilePhase::Idle {
            return Err(self.wrong_phase("challenge"));
        }
        let k_c = self.crypto.a8(&self.sim.k_i, &r)?;
        self.crypto.hold(KeyKind::SessionKey, k_c.as_bytes());
        let r_s = Nonce(self.rng.gen_array());
        let ct = self.crypto.encrypt(&k_c, &r.concat(&r_s))?;
        self.session.r = Some(r);
        self.session.r_s = Some(r_s);
        self.session.k_c = Some(k_c);
        self.phase = MobilePhase::Challenged;
        Ok(ct)
    }

    /// Steps 11-12: accept only E_Kc(R_s ‖ R) for this session's nonces.
    pub fn handle_auth_confirm(&mut self, ct: &Ciphertext) -> Result<ConfirmOutcome, MobileError> {
        let (MobilePhase::Challenged, Some(r), Some(r_s), Some(k_c)) =
            (&self.phase, self.session.r, self.session.r_s, self.session.k_c.clone())
        else {
            return Err(self.wrong_phase("auth confirm"));
        };
        let expected = r_s.concat(&r);
        match self.crypto.decrypt(&k_c, ct) {
            Ok(pt) if pt == expected => {
                let keyset = self.crypto.key_chain(&k_c);
                self.crypto.hold(KeyKind::MacKey, keyset.k_c1.as_bytes());
                self.crypto.hold(KeyKind::EncryptionKey, keyset.k_c2.as_bytes());
                self.session.keyset = Some(keyset);
                self.phase = MobilePhase::Authenticated;
                Ok(ConfirmOutcome::Success)
            }
            Ok(_) => Ok(ConfirmOutcome::Abort(
                self.abort(Step::MobileVerify, "mno-unauthenticated"),
            )),
            Err(_) => Ok(ConfirmOutcome::Abort(self.abort(Step::MobileVerify, "confirm-framing"))),
        }
    }

    /// Step 15 arrives: decrypt and remember the offer.
    pub fn receive_price_offer(&mut self, ct: &Ciphertext) -> Result<Option<PriceQuote>, MobileError> {
        let Some(keyset) = self
            .session
            .keyset
            .clone()
            .filter(|_| self.phase == MobilePhase::Authenticated)
        else {
            return Err(self.wrong_phase("price offer"));
        };
        let quote = self
            .crypto
            .decrypt(&keyset.k_c2, ct)
            .ok()
            .and_then(|pt| PriceQuote::from_bytes(&pt).ok());
        match quote {
            Some(q) => {
                self.session.quote = Some(q);
                self.phase = MobilePhase::Offered;
                Ok(Some(q))
            }
            None => {
                self.abort(Step::PriceOffer, "offer-undecryptable");
                Ok(None)
            }
        }
    }

    /// Steps 16-17: purely local, so it works with the NFC link down.
    pub fn enter_pin(&mut self, response: UserResponse) -> Result<OfferOutcome, MobileError> {
        if self.phase != MobilePhase::Offered {
            return Err(self.wrong_phase("pin entry"));
        }
        let quote = self.session.quote.expect("offered phase has a quote");
        let entered = match response {
            UserResponse::Decline => {
                self.abort(Step::PinEntry, "user-declined");
                return Ok(OfferOutcome::Declined);
            }
            UserResponse::Pin(p) => p,
        };
        if self.sim.pin_retries_left == 0 {
            return Ok(OfferOutcome::Aborted(self.abort(Step::PinEntry, "pin-blocked")));
        }
        if entered == self.sim.pin {
            self.sim.pin_retries_left = self.sim.pin_retry_limit;
            self.phase = MobilePhase::Consented;
            return Ok(OfferOutcome::Proceed(quote));
        }
        self.sim.pin_retries_left -= 1;
        if self.sim.pin_retries_left == 0 {
            Ok(OfferOutcome::Aborted(
                self.abort(Step::PinEntry, "pin-retries-exhausted"),
            ))
        } else {
            Ok(OfferOutcome::PinFail {
                retries_left: self.sim.pin_retries_left,
            })
        }
    }

    pub fn handle_price_offer(&mut self, ct: &Ciphertext, response: UserResponse) -> Result<OfferOutcome, MobileError> {
        match self.receive_price_offer(ct)? {
            Some(_) => self.enter_pin(response),
            None => Ok(OfferOutcome::Aborted("offer-undecryptable".to_owned())),
        }
    }

    /// Steps 18-19: E_Kc2(PI), E_Kc(TRM) and a MAC over the latter ciphertext.
    pub fn build_payment_message(&mut self, ts_u: Millis) -> Result<PaymentMessage, MobileError> {
        let (MobilePhase::Consented, Some(keyset), Some(quote), Some(r_s)) = (
            &self.phase,
            self.session.keyset.clone(),
            self.session.quote,
            self.session.r_s,
        ) else {
            return Err(self.wrong_phase("payment"));
        };
        let pi = PaymentInfo {
            receipt_no: quote.receipt_no,
            total_price: quote.total_price,
            ts_u,
        };
        let trm_pi = match self.behavior {
            Behavior::Honest => pi,
            Behavior::UnderstateTrm { by } => PaymentInfo {
                total_price: pi.total_price.saturating_sub(by),
                ..pi
            },
        };
        let trm = TransactionRequest {
            pi: trm_pi,
            r_s,
            tc: self.sim.tc + 1,
        };
        let enc_pi = self.crypto.encrypt(&keyset.k_c2, &pi.to_bytes())?;
        let enc_trm = self.crypto.encrypt(&keyset.k_c, &trm.to_bytes())?;
        let mac = self.crypto.mac(&keyset.k_c1, &enc_trm)?;
        self.session.pi = Some(pi);
        self.phase = MobilePhase::PaymentSent;
        Ok(PaymentMessage { enc_pi, enc_trm, mac })
    }

    /// Step 26: both signatures, then TI and SD against the agreed PI.
    pub fn verify_settlement(&mut self, bundle: &SettlementBundle) -> Result<SettlementReceipt, MobileError> {
        let (MobilePhase::PaymentSent, Some(keyset), Some(pi)) =
            (&self.phase, self.session.keyset.clone(), self.session.pi)
        else {
            return Err(self.wrong_phase("settlement"));
        };
        let signed = &bundle.result;
        let mut receipt = SettlementReceipt {
            ti: None,
            sd: bundle.details.clone(),
            mno_signature: signed.mno_signature.clone(),
            pos_signature: bundle.pos_signature.clone(),
            verdict: ReceiptVerdict::Accepted,
        };
        let reason = if !self.crypto.verify_sig(
            &self.trust.mno,
            &mno_signed_bytes(&signed.enc_ti),
            &signed.mno_signature,
        ) {
            Some("mno-signature")
        } else if !self.trust.pos.iter().any(|vk| {
            self.crypto.verify_sig(
                vk,
                &pos_signed_bytes(&signed.enc_ti, &signed.mno_signature, &bundle.details),
                &bundle.pos_signature,
            )
        }) {
            Some("pos-signature")
        } else {
            receipt.ti = self
                .crypto
                .decrypt(&keyset.k_c2, &signed.enc_ti)
                .ok()
                .and_then(|pt| TransactionInfo::from_bytes(&pt).ok());
            match receipt.ti {
                None => Some("ti-undecryptable"),
                Some(ti) if ti.amount != pi.total_price => Some("amount-mismatch"),
                Some(_) if bundle.details.total != pi.total_price || !bundle.details.is_consistent() => {
                    Some("sd-mismatch")
                }
                Some(_) => None,
            }
        };
        match reason {
            Some(reason) => {
                receipt.verdict = ReceiptVerdict::Rejected(self.abort(Step::CustomerVerify, reason));
            }
            None => {
                self.sim.tc += 1;
                self.phase = MobilePhase::Settled;
            }
        }
        Ok(receipt)
    }

    /// Puts a second device holding the same SIM key into a session it
    /// only observed on the wire: it derives the keys from the overheard
    /// challenge, reads the overheard offer and consents to it, but draws
    /// its own R_s.
    pub fn adopt_observed_session(&mut self, r: Nonce, offer: &Ciphertext) -> Result<PriceQuote, MobileError> {
        let k_c = self.crypto.a8(&self.sim.k_i, &r)?;
        let keyset = self.crypto.key_chain(&k_c);
        self.crypto.hold(KeyKind::SessionKey, k_c.as_bytes());
        self.crypto.hold(KeyKind::MacKey, keyset.k_c1.as_bytes());
        self.crypto.hold(KeyKind::EncryptionKey, keyset.k_c2.as_bytes());
        let quote = PriceQuote::from_bytes(&self.crypto.decrypt(&keyset.k_c2, offer)?)
            .map_err(|_| MobileError::Unreadable("price offer"))?;
        self.session = MobileSession {
            r: Some(r),
            r_s: Some(Nonce(self.rng.gen_array())),
            k_c: Some(k_c),
            keyset: Some(keyset),
            quote: Some(quote),
            pi: None,
        };
        self.phase = MobilePhase::Consented;
        Ok(quote)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{LineItem, SignedTransactionInfo};
    use crate::crypto::SignatureKeyPair;
    use crate::types::{Plmn, ReceiptNo, TxnSerial};

    const K_I: [u8; 16] = [0x42; 16];

    struct Net {
        mno: Crypto,
        mno_keys: SignatureKeyPair,
        pos_keys: SignatureKeyPair,
    }

    fn setup() -> (Mobile, Net) {
        setup_seeded(5)
    }

    fn setup_seeded(seed: u64) -> (Mobile, Net) {
        let mobile_crypto = Crypto::hash_suite(Party::Mobile);
        let mno = mobile_crypto.for_party(Party::Mno);
        let mno_keys = mno.keypair_from_seed(&[1; 32]);
        let pos_keys = mno.for_party(Party::Pos).keypair_from_seed(&[2; 32]);
        let sim = SimState::new(
            Imsi([2, 3, 4, 1, 5, 0, 0, 1]),
            Tmsi([9, 9, 9, 9]),
            Lai {
                plmn: Plmn::new(234, 15, false).unwrap(),
                lac: 7,
            },
            SubscriberKey::new(K_I),
            "1234",
        )
        .unwrap();
        let trust = TrustAnchors {
            mno: mno_keys.verifying_key().clone(),
            pos: vec![pos_keys.verifying_key().clone()],
        };
        let mobile = Mobile::new(mobile_crypto, SimRng::from_seed(seed), sim, trust);
        (
            mobile,
            Net {
                mno,
                mno_keys,
                pos_keys,
            },
        )
    }

    /// Runs the device to `Authenticated`, returning (R, R_s, K_c).
    fn authenticate(m: &mut Mobile, net: &Net, r: Nonce) -> (Nonce, SessionKey) {
        m.handle_id_request();
        let resp = m.handle_challenge(r.as_bytes()).unwrap();
        let k_c = net.mno.a8(&SubscriberKey::new(K_I), &r).unwrap();
        let pt = net.mno.decrypt(&k_c, &resp).unwrap();
        let (r_back, r_s) = Nonce::split_pair(&pt).unwrap();
        assert_eq!(r_back, r);
        let confirm = net.mno.encrypt(&k_c, &r_s.concat(&r)).unwrap();
        assert_eq!(m.handle_auth_confirm(&confirm).unwrap(), ConfirmOutcome::Success);
        (r_s, k_c)
    }

    fn offer(net: &Net, k_c: &SessionKey, total: Pence) -> Ciphertext {
        let keys = net.mno.key_chain(k_c);
        let q = PriceQuote {
            total_price: total,
            receipt_no: ReceiptNo(1),
        };
        net.mno.encrypt(&keys.k_c2, &q.to_bytes()).unwrap()
    }

    fn bundle(net: &Net, k_c: &SessionKey, amount: Pence, sd: ShoppingDetails) -> SettlementBundle {
        let keys = net.mno.key_chain(k_c);
        let ti = TransactionInfo {
            txn_serial: TxnSerial(1),
            amount,
            ts_tr: 10,
        };
        let enc_ti = net.mno.encrypt(&keys.k_c2, &ti.to_bytes()).unwrap();
        let mno_signature = net.mno.sign(&net.mno_keys, &mno_signed_bytes(&enc_ti));
        let pos_signature = net
            .mno
            .sign(&net.pos_keys, &pos_signed_bytes(&enc_ti, &mno_signature, &sd));
        SettlementBundle {
            result: SignedTransactionInfo { enc_ti, mno_signature },
            details: sd,
            pos_signature,
        }
    }

    fn sd(total: Pence) -> ShoppingDetails {
        ShoppingDetails::from_items(vec![LineItem {
            description: "Sandwich".into(),
            price: total,
        }])
        .unwrap()
    }

    #[test]
    fn id_response_carries_tmsi_and_lai_only() {
        let (mut m, _) = setup();
        let (tmsi, lai) = m.handle_id_request();
        assert_eq!(tmsi, Tmsi([9, 9, 9, 9]));
        assert_eq!(lai.lac, 7);
        let bytes = crate::codec::encode(&crate::codec::Message::IdResponse { tmsi, lai });
        assert!(!bytes.windows(8).any(|w| w == m.sim().imsi.as_bytes()));
        m.set_tmsi(Tmsi([1, 2, 3, 4]));
        assert_eq!(m.handle_id_request().0, Tmsi([1, 2, 3, 4]));
    }

    #[test]
    fn challenge_rules() {
        let (mut m, net) = setup();
        assert!(matches!(m.handle_challenge(&[0; 15]), Err(MobileError::Length(_))));
        let r = Nonce([3; 16]);
        let first = m.handle_challenge(r.as_bytes()).unwrap();
        assert!(matches!(
            m.handle_challenge(r.as_bytes()),
            Err(MobileError::WrongPhase { .. })
        ));
        let r_s1 = m.session().r_s.unwrap();
        m.handle_id_request();
        let second = m.handle_challenge(r.as_bytes()).unwrap();
        assert_ne!(first, second);
        assert_ne!(m.session().r_s.unwrap(), r_s1);
        let k_c = net.mno.a8(&SubscriberKey::new(K_I), &r).unwrap();
        assert_eq!(
            net.mno.decrypt(&k_c, &second).unwrap(),
            r.concat(&m.session().r_s.unwrap())
        );
    }

    #[test]
    fn confirm_must_match_this_session() {
        let (mut m, net) = setup();
        let r = Nonce([3; 16]);
        let (r_s, k_c) = authenticate(&mut m, &net, r);
        let old_confirm = net.mno.encrypt(&k_c, &r_s.concat(&r)).unwrap();

        // replayed into a new session with the same R: R_s differs
        m.handle_id_request();
        m.handle_challenge(r.as_bytes()).unwrap();
        assert!(matches!(
            m.handle_auth_confirm(&old_confirm).unwrap(),
            ConfirmOutcome::Abort(_)
        ));

        // swapped order
        m.handle_id_request();
        m.handle_challenge(r.as_bytes()).unwrap();
        let r_s = m.session().r_s.unwrap();
        let swapped = net.mno.encrypt(&k_c, &r.concat(&r_s)).unwrap();
        assert!(matches!(
            m.handle_auth_confirm(&swapped).unwrap(),
            ConfirmOutcome::Abort(_)
        ));
        assert!(matches!(
            m.phase(),
            MobilePhase::Aborted {
                step: Step::MobileVerify,
                ..
            }
        ));

        // too short to carry an IV
        m.handle_id_request();
        m.handle_challenge(r.as_bytes()).unwrap();
        assert!(matches!(
            m.handle_auth_confirm(&Ciphertext::from(vec![0; 3])).unwrap(),
            ConfirmOutcome::Abort(_)
        ));
    }

    #[test]
    fn pin_gate() {
        let (mut m, net) = setup();
        let (_, k_c) = authenticate(&mut m, &net, Nonce([3; 16]));
        let ct = offer(&net, &k_c, 450);
        assert_eq!(
            m.handle_price_offer(&ct, UserResponse::Pin("0000".into())).unwrap(),
            OfferOutcome::PinFail { retries_left: 2 }
        );
        assert!(matches!(
            m.enter_pin(UserResponse::Pin("1234".into())).unwrap(),
            OfferOutcome::Proceed(q) if q.total_price == 450
        ));
        assert_eq!(m.sim().pin_retries_left(), MAX_PIN_RETRIES);

        let (_, k_c) = authenticate(&mut m, &net, Nonce([4; 16]));
        m.receive_price_offer(&offer(&net, &k_c, 450)).unwrap();
        for left in [2, 1] {
            assert_eq!(
                m.enter_pin(UserResponse::Pin("9999".into())).unwrap(),
                OfferOutcome::PinFail { retries_left: left }
            );
        }
        assert!(matches!(
            m.enter_pin(UserResponse::Pin("9999".into())).unwrap(),
            OfferOutcome::Aborted(_)
        ));
        assert!(matches!(
            m.phase(),
            MobilePhase::Aborted {
                step: Step::PinEntry,
                ..
            }
        ));

        // the SIM stays blocked for later sessions
        let (_, k_c) = authenticate(&mut m, &net, Nonce([5; 16]));
        assert_eq!(
            m.handle_price_offer(&offer(&net, &k_c, 450), UserResponse::Pin("1234".into()))
                .unwrap(),
            OfferOutcome::Aborted("pin-blocked".into())
        );
    }

    #[test]
    fn decline_and_pin_validation() {
        let (mut m, net) = setup();
        let (_, k_c) = authenticate(&mut m, &net, Nonce([3; 16]));
        assert_eq!(
            m.handle_price_offer(&offer(&net, &k_c, 450), UserResponse::Decline)
                .unwrap(),
            OfferOutcome::Declined
        );
        let k = SubscriberKey::new(K_I);
        let lai = m.sim().lai;
        assert!(SimState::new(Imsi([0; 8]), Tmsi([0; 4]), lai, k.clone(), "12a4").is_err());
        assert!(SimState::new(Imsi([0; 8]), Tmsi([0; 4]), lai, k, "1234567").is_err());
    }

    #[test]
    fn payment_message_halves() {
        let (mut m, net) = setup();
        assert!(matches!(
            m.build_payment_message(0),
            Err(MobileError::WrongPhase { .. })
        ));
        let r = Nonce([3; 16]);
        let (r_s, k_c) = authenticate(&mut m, &net, r);
        m.handle_price_offer(&offer(&net, &k_c, 450), UserResponse::Pin("1234".into()))
            .unwrap();
        let msg = m.build_payment_message(777).unwrap();
        let keys = net.mno.key_chain(&k_c);
        assert!(net.mno.verify_mac(&keys.k_c1, &msg.enc_trm, &msg.mac));
        let trm = TransactionRequest::from_bytes(&net.mno.decrypt(&k_c, &msg.enc_trm).unwrap()).unwrap();
        assert_eq!(trm.tc, m.sim().tc() + 1);
        assert_eq!(trm.r_s, r_s);
        assert_eq!(trm.pi.total_price, 450);
        assert_eq!(trm.pi.ts_u, 777);
        let pi = PaymentInfo::from_bytes(&net.mno.decrypt(&keys.k_c2, &msg.enc_pi).unwrap()).unwrap();
        assert_eq!(pi, trm.pi);
        // under k_c2 the opaque half is noise
        assert!(
            !TransactionRequest::from_bytes(&net.mno.decrypt(&keys.k_c2, &msg.enc_trm).unwrap())
                .is_ok_and(|t| t == trm)
        );
    }

    #[test]
    fn settlement_checks() {
        let (mut m, net) = setup();
        let paid = |m: &mut Mobile, seed: u8| {
            let (_, k_c) = authenticate(m, &net, Nonce([seed; 16]));
            m.handle_price_offer(&offer(&net, &k_c, 450), UserResponse::Pin("1234".into()))
                .unwrap();
            m.build_payment_message(1).unwrap();
            k_c
        };

        let k_c = paid(&mut m, 1);
        let receipt = m.verify_settlement(&bundle(&net, &k_c, 450, sd(450))).unwrap();
        assert_eq!(receipt.verdict, ReceiptVerdict::Accepted);
        assert_eq!(receipt.ti.unwrap().amount, 450);
        assert_eq!(m.sim().tc(), 1);

        let k_c = paid(&mut m, 2);
        let mut b = bundle(&net, &k_c, 450, sd(450));
        b.details.total = 400;
        let r = m.verify_settlement(&b).unwrap();
        assert_eq!(r.verdict, ReceiptVerdict::Rejected("pos-signature".into()));
        assert_eq!(m.sim().tc(), 1);

        let k_c = paid(&mut m, 3);
        let mut b = bundle(&net, &k_c, 450, sd(450));
        b.result.mno_signature = Signature::default();
        assert_eq!(
            m.verify_settlement(&b).unwrap().verdict,
            ReceiptVerdict::Rejected("mno-signature".into())
        );

        let k_c = paid(&mut m, 4);
        let b = bundle(&net, &k_c, 400, sd(450));
        assert_eq!(
            m.verify_settlement(&b).unwrap().verdict,
            ReceiptVerdict::Rejected("amount-mismatch".into())
        );

        let k_c = paid(&mut m, 5);
        let b = bundle(&net, &k_c, 450, sd(400));
        assert_eq!(
            m.verify_settlement(&b).unwrap().verdict,
            ReceiptVerdict::Rejected("sd-mismatch".into())
        );
        assert_eq!(m.sim().tc(), 1);
    }

    #[test]
    fn understated_trm_keeps_pi_truthful() {
        let (m, net) = setup();
        let mut m = m.with_behavior(Behavior::UnderstateTrm { by: 100 });
        let (_, k_c) = authenticate(&mut m, &net, Nonce([3; 16]));
        m.handle_price_offer(&offer(&net, &k_c, 450), UserResponse::Pin("1234".into()))
            .unwrap();
        let msg = m.build_payment_message(1).unwrap();
        let keys = net.mno.key_chain(&k_c);
        let pi = PaymentInfo::from_bytes(&net.mno.decrypt(&keys.k_c2, &msg.enc_pi).unwrap()).unwrap();
        let trm = TransactionRequest::from_bytes(&net.mno.decrypt(&k_c, &msg.enc_trm).unwrap()).unwrap();
        assert_eq!(pi.total_price, 450);
        assert_eq!(trm.pi.total_price, 350);
    }

    #[test]
    fn adopted_session_has_own_nonce() {
        let (mut m, net) = setup();
        let r = Nonce([3; 16]);
        let (r_s, k_c) = authenticate(&mut m, &net, r);
        let (mut clone, _) = setup_seeded(6);
        let quote = clone.adopt_observed_session(r, &offer(&net, &k_c, 450)).unwrap();
        assert_eq!(quote.total_price, 450);
        let msg = clone.build_payment_message(1).unwrap();
        let trm = TransactionRequest::from_bytes(&net.mno.decrypt(&k_c, &msg.enc_trm).unwrap()).unwrap();
        assert_ne!(trm.r_s, r_s);
    }
}
