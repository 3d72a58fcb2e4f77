//! The mobile network operator: authentication centre, switching centre and
//! cloud wallet in one party.
//!
//! It owns the subscriber and shop registries, generates one authentication
//! triplet per attempt, runs its half of the mutual authentication, hands
//! K_c2 to the terminal under K_p, and executes transactions against the
//! ledger. All handlers run sequentially in simulated-event order.

mod ledger;
mod registry;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

pub use ledger::{Ledger, LedgerEntry};
pub use registry::{ShopRecord, ShopRegistration, SubscriberRecord, SubscriberStatus};

use crate::codec::payload::{key_delivery_bytes, mno_signed_bytes};
use crate::codec::{SignedTransactionInfo, TransactionForward, TransactionInfo, TransactionRequest};
use crate::crypto::{
    AuthTriplet, Ciphertext, Crypto, CryptoError, KeyKind, KeySet, ShopKey, SignatureKeyPair, SimRng, SubscriberKey,
    VerifyingKey,
};
use crate::types::{Imsi, Lai, Millis, Nonce, Pence, ShopId, Tmsi, TxnSerial};

/// Default micropayment cap: £50.00.
pub const DEFAULT_CAP: Pence = 5_000;
/// Default freshness window for TS_U: 120 simulated seconds.
pub const DEFAULT_TS_WINDOW_MS: Millis = 120_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MnoPolicy {
    pub cap: Pence,
    pub ts_window_ms: Millis,
    /// Reallocate the subscriber's TMSI once a transaction settles.
    pub rotate_tmsi_on_settle: bool,
}

impl Default for MnoPolicy {
    fn default() -> Self {
        Self {
            cap: DEFAULT_CAP,
            ts_window_ms: DEFAULT_TS_WINDOW_MS,
            rotate_tmsi_on_settle: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SessionId(pub u64);

impl fmt::Display for SessionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "s{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum SessionPhase {
    AwaitingResponse,
    Authenticated,
    Keyed,
    Settled,
    Aborted,
}

#[derive(Debug, Clone)]
pub struct MnoSession {
    pub id: SessionId,
    pub imsi: Imsi,
    pub shop_id: ShopId,
    pub triplet: AuthTriplet,
    /// Number of authentication responses checked against `triplet`; at most one.
    pub triplet_uses: u32,
    pub r_s: Option<Nonce>,
    pub mobile_confirmed: bool,
    pub keyset: Option<KeySet>,
    pub phase: SessionPhase,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MnoError {
    #[error("already registered: {0}")]
    Duplicate(String),
    #[error("unknown subscriber {0}")]
    UnknownSubscriber(Imsi),
    #[error("unknown shop {0}")]
    UnknownShop(ShopId),
    #[error("unknown session {0}")]
    UnknownSession(SessionId),
    #[error("session {session} is {actual:?}, expected {expected}")]
    WrongPhase {
        session: SessionId,
        expected: &'static str,
        actual: SessionPhase,
    },
    #[error("session {session} belongs to shop {expected}, not {got}")]
    ShopMismatch {
        session: SessionId,
        expected: ShopId,
        got: ShopId,
    },
    #[error(transparent)]
    Crypto(#[from] CryptoError),
}

/// Why a transaction request was refused. Every rejection leaves balances
/// and counters untouched.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TxRejection {
    #[error("mac-invalid")]
    MacInvalid,
    #[error("malformed-trm")]
    Malformed,
    #[error("rs-mismatch")]
    RsMismatch,
    #[error("tc-replay")]
    TcReplay { got: u64, expected: u64 },
    #[error("tc-out-of-sequence")]
    TcOutOfSequence { got: u64, expected: u64 },
    #[error("ts-mismatch")]
    TsMismatch,
    #[error("ts-stale")]
    TsStale,
    #[error("invalid-amount")]
    InvalidAmount,
    #[error("over-cap")]
    OverCap,
    #[error("insufficient-funds")]
    InsufficientFunds,
    #[error("{0}")]
    Precondition(MnoError),
}

impl TxRejection {
    pub fn code(&self) -> String {
        match self {
            TxRejection::Precondition(_) => "no-session".to_owned(),
            other => other.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AuthOutcome {
    Challenge { session: SessionId, r: Nonce },
    Declined,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AuthReply {
    /// E_Kc(R_s ‖ R)
    Confirm(Ciphertext),
    Stop,
}

#[derive(Debug, Clone)]
pub struct Execution {
    pub result: SignedTransactionInfo,
    pub entry: LedgerEntry,
    pub rotated_tmsi: Option<Tmsi>,
}

#[derive(Debug)]
pub struct Mno {
    crypto: Crypto,
    rng: SimRng,
    signing: SignatureKeyPair,
    policy: MnoPolicy,
    subscribers: BTreeMap<Imsi, SubscriberRecord>,
    active_tmsi: BTreeMap<Tmsi, Imsi>,
    tmsi_history: BTreeSet<Tmsi>,
    shops: BTreeMap<ShopId, ShopRecord>,
    credits: BTreeMap<String, Pence>,
    sessions: BTreeMap<SessionId, MnoSession>,
    next_session: u64,
    next_serial: u64,
    ledger: Ledger,
}

impl Mno {
    pub fn new(crypto: Crypto, rng: SimRng, signing: SignatureKeyPair, policy: MnoPolicy) -> Self {
        crypto.hold(KeyKind::Signing(crate::types::Party::Mno), signing.signing_key());
        Self {
            crypto,
            rng,
            signing,
            policy,
            subscribers: BTreeMap::new(),
            active_tmsi: BTreeMap::new(),
            tmsi_history: BTreeSet::new(),
            shops: BTreeMap::new(),
            credits: BTreeMap::new(),
            sessions: BTreeMap::new(),
            next_session: 1,
            next_serial: 1,
            ledger: Ledger::default(),
        }
    }

    pub fn verifying_key(&self) -> &VerifyingKey {
        self.signing.verifying_key()
    }

    pub fn policy(&self) -> &MnoPolicy {
        &self.policy
    }

    fn fresh_tmsi(&mut self) -> Tmsi {
        loop {
            let t = Tmsi(self.rng.gen_array());
            if self.tmsi_history.insert(t) {
                return t;
            }
        }
    }

    pub fn register_subscriber(
        &mut self,
        imsi: Imsi,
        k_i: SubscriberKey,
        initial_balance: Pence,
    ) -> Result<SubscriberRecord, MnoError> {
        if self.subscribers.contains_key(&imsi) {
            return Err(MnoError::Duplicate(format!("subscriber {imsi}")));
        }
        self.crypto.hold(KeyKind::SubscriberKey, k_i.as_bytes());
        let tmsi = self.fresh_tmsi();
        let record = SubscriberRecord {
            imsi,
            tmsi,
            k_i,
            tc_expected: 0,
            balance: initial_balance,
            status: SubscriberStatus::Active,
        };
        self.active_tmsi.insert(tmsi, imsi);
        self.subscribers.insert(imsi, record.clone());
        Ok(record)
    }

    pub fn register_shop(
        &mut self,
        shop_id: ShopId,
        bank_ref: impl Into<String>,
        pos_verifying_key: VerifyingKey,
    ) -> Result<ShopRegistration, MnoError> {
        if self.shops.contains_key(&shop_id) {
            return Err(MnoError::Duplicate(format!("shop {shop_id}")));
        }
        let k_p = loop {
            let candidate = ShopKey::new(self.rng.gen_array());
            if self.shops.values().all(|s| s.k_p != candidate) {
                break candidate;
            }
        };
        self.crypto.hold(KeyKind::ShopKey, k_p.as_bytes());
        self.crypto
            .hold(KeyKind::Verifying(crate::types::Party::Pos), &pos_verifying_key.0);
        let record = ShopRecord {
            shop_id,
            k_p: k_p.clone(),
            bank_ref: bank_ref.into(),
            verifying_key: pos_verifying_key,
        };
        self.credits.entry(record.bank_ref.clone()).or_insert(0);
        self.shops.insert(shop_id, record.clone());
        Ok(ShopRegistration { record, k_p })
    }

    pub fn set_status(&mut self, imsi: &Imsi, status: SubscriberStatus) -> Result<(), MnoError> {
        let sub = self
            .subscribers
            .get_mut(imsi)
            .ok_or(MnoError::UnknownSubscriber(*imsi))?;
        sub.status = status;
        Ok(())
    }

    /// Steps 4-6: look the TMSI up and issue a fresh challenge, or decline.
    pub fn handle_auth_request(&mut self, tmsi: Tmsi, _lai: Lai, shop_id: ShopId) -> Result<AuthOutcome, MnoError> {
        if !self.shops.contains_key(&shop_id) {
            return Err(MnoError::UnknownShop(shop_id));
        }
        let Some(sub) = self
            .active_tmsi
            .get(&tmsi)
            .and_then(|imsi| self.subscribers.get(imsi))
            .filter(|s| s.status == SubscriberStatus::Active)
        else {
            return Ok(AuthOutcome::Declined);
        };
        let imsi = sub.imsi;
        let k_i = sub.k_i.clone();
        let r = Nonce(self.rng.gen_array());
        let triplet = AuthTriplet {
            r,
            s: self.crypto.a3(&k_i, &r)?,
            k_c: self.crypto.a8(&k_i, &r)?,
        };
        self.crypto.hold(KeyKind::SessionKey, triplet.k_c.as_bytes());
        let id = SessionId(self.next_session);
        self.next_session += 1;
        self.sessions.insert(
            id,
            MnoSession {
                id,
                imsi,
                shop_id,
                triplet,
                triplet_uses: 0,
                r_s: None,
                mobile_confirmed: false,
                keyset: None,
                phase: SessionPhase::AwaitingResponse,
            },
        );
        Ok(AuthOutcome::Challenge { session: id, r })
    }

    fn session_mut(&mut self, id: SessionId) -> Result<&mut MnoSession, MnoError> {
        self.sessions.get_mut(&id).ok_or(MnoError::UnknownSession(id))
    }

    /// Steps 9-10: the response must embed the R of this session's triplet.
    pub fn handle_auth_response(
        &mut self,
        session_id: SessionId,
        ciphertext: &Ciphertext,
    ) -> Result<AuthReply, MnoError> {
        let crypto = self.crypto.clone();
        let session = self.session_mut(session_id)?;
        if session.phase != SessionPhase::AwaitingResponse {
            return Err(MnoError::WrongPhase {
                session: session_id,
                expected: "awaiting-response",
                actual: session.phase,
            });
        }
        session.triplet_uses += 1;
        let k_c = session.triplet.k_c.clone();
        let embedded = crypto
            .decrypt(&k_c, ciphertext)
            .ok()
            .and_then(|pt| Nonce::split_pair(&pt).ok());
        match embedded {
            Some((r, r_s)) if r == session.triplet.r => {
                session.r_s = Some(r_s);
                session.phase = SessionPhase::Authenticated;
                let confirm = crypto.encrypt(&k_c, &r_s.concat(&r))?;
                Ok(AuthReply::Confirm(confirm))
            }
            _ => {
                session.phase = SessionPhase::Aborted;
                Ok(AuthReply::Stop)
            }
        }
    }

    /// Step 12 arrives; no reply is sent.
    pub fn handle_auth_success(&mut self, session_id: SessionId) -> Result<(), MnoError> {
        let session = self.session_mut(session_id)?;
        if session.phase != SessionPhase::Authenticated {
            return Err(MnoError::WrongPhase {
                session: session_id,
                expected: "authenticated",
                actual: session.phase,
            });
        }
        session.mobile_confirmed = true;
        Ok(())
    }

    /// Steps 13-14: derive the key chain and send only K_c2, under K_p and
    /// addressed to the shop.
    pub fn deliver_pos_key(&mut self, session_id: SessionId, shop_id: ShopId) -> Result<Ciphertext, MnoError> {
        let k_p = self
            .shops
            .get(&shop_id)
            .map(|s| s.k_p.clone())
            .ok_or(MnoError::UnknownShop(shop_id))?;
        let crypto = self.crypto.clone();
        let session = self.session_mut(session_id)?;
        if session.phase != SessionPhase::Authenticated || !session.mobile_confirmed {
            return Err(MnoError::WrongPhase {
                session: session_id,
                expected: "authenticated and confirmed by the mobile",
                actual: session.phase,
            });
        }
        if session.shop_id != shop_id {
            return Err(MnoError::ShopMismatch {
                session: session_id,
                expected: session.shop_id,
                got: shop_id,
            });
        }
        let keyset = crypto.key_chain(&session.triplet.k_c);
        crypto.hold(KeyKind::MacKey, keyset.k_c1.as_bytes());
        crypto.hold(KeyKind::EncryptionKey, keyset.k_c2.as_bytes());
        let delivery = crypto.encrypt(&k_p, &key_delivery_bytes(&shop_id, &keyset.k_c2))?;
        session.keyset = Some(keyset);
        session.phase = SessionPhase::Keyed;
        Ok(delivery)
    }

    /// Step 22. The MAC is checked before anything is decrypted; then R_s,
    /// the counter, the timestamp, the cap and the balance, in that order.
    pub fn handle_transaction(
        &mut self,
        session_id: SessionId,
        fwd: &TransactionForward,
        now: Millis,
    ) -> Result<Execution, TxRejection> {
        let session = self
            .sessions
            .get(&session_id)
            .ok_or(TxRejection::Precondition(MnoError::UnknownSession(session_id)))?;
        let keyset = match (&session.keyset, session.phase) {
            (Some(k), SessionPhase::Keyed | SessionPhase::Settled) => k.clone(),
            _ => {
                return Err(TxRejection::Precondition(MnoError::WrongPhase {
                    session: session_id,
                    expected: "keyed",
                    actual: session.phase,
                }))
            }
        };
        if !self.crypto.verify_mac(&keyset.k_c1, &fwd.enc_trm, &fwd.mac) {
            return Err(TxRejection::MacInvalid);
        }
        let trm = self
            .crypto
            .decrypt(&keyset.k_c, &fwd.enc_trm)
            .ok()
            .and_then(|pt| TransactionRequest::from_bytes(&pt).ok())
            .ok_or(TxRejection::Malformed)?;
        if Some(trm.r_s) != session.r_s {
            return Err(TxRejection::RsMismatch);
        }
        let imsi = session.imsi;
        let shop_id = session.shop_id;
        let sub = &self.subscribers[&imsi];
        let expected = sub.tc_expected + 1;
        if trm.tc <= sub.tc_expected {
            return Err(TxRejection::TcReplay { got: trm.tc, expected });
        }
        if trm.tc != expected {
            return Err(TxRejection::TcOutOfSequence { got: trm.tc, expected });
        }
        if fwd.ts_u != trm.pi.ts_u {
            return Err(TxRejection::TsMismatch);
        }
        if now.abs_diff(trm.pi.ts_u) > self.policy.ts_window_ms {
            return Err(TxRejection::TsStale);
        }
        let amount = trm.pi.total_price;
        if amount == 0 {
            return Err(TxRejection::InvalidAmount);
        }
        if amount > self.policy.cap {
            return Err(TxRejection::OverCap);
        }
        if amount > sub.balance {
            return Err(TxRejection::InsufficientFunds);
        }

        let ti = TransactionInfo {
            txn_serial: TxnSerial(self.next_serial),
            amount,
            ts_tr: now,
        };
        let enc_ti = self
            .crypto
            .encrypt(&keyset.k_c2, &ti.to_bytes())
            .map_err(|e| TxRejection::Precondition(e.into()))?;
        let mno_signature = self.crypto.sign(&self.signing, &mno_signed_bytes(&enc_ti));

        self.next_serial += 1;
        let bank_ref = self.shops[&shop_id].bank_ref.clone();
        let entry = LedgerEntry {
            txn_serial: ti.txn_serial,
            debit_account: imsi,
            credit_account: bank_ref.clone(),
            amount,
            ts_tr: now,
        };
        self.ledger.append(entry.clone());
        let sub = self.subscribers.get_mut(&imsi).expect("subscriber exists");
        sub.balance -= amount;
        sub.tc_expected = trm.tc;
        *self.credits.entry(bank_ref).or_insert(0) += amount;
        self.sessions.get_mut(&session_id).expect("session exists").phase = SessionPhase::Settled;
        let rotated_tmsi = if self.policy.rotate_tmsi_on_settle {
            Some(self.rotate_tmsi(&imsi).expect("subscriber exists"))
        } else {
            None
        };
        Ok(Execution {
            result: SignedTransactionInfo { enc_ti, mno_signature },
            entry,
            rotated_tmsi,
        })
    }

    /// Retires the current TMSI and allocates one never used before.
    pub fn rotate_tmsi(&mut self, imsi: &Imsi) -> Result<Tmsi, MnoError> {
        let old = self
            .subscribers
            .get(imsi)
            .map(|s| s.tmsi)
            .ok_or(MnoError::UnknownSubscriber(*imsi))?;
        let new = self.fresh_tmsi();
        self.active_tmsi.remove(&old);
        self.active_tmsi.insert(new, *imsi);
        self.subscribers.get_mut(imsi).expect("checked").tmsi = new;
        Ok(new)
    }

    pub fn subscriber(&self, imsi: &Imsi) -> Option<&SubscriberRecord> {
        self.subscribers.get(imsi)
    }

    pub fn subscribers(&self) -> impl Iterator<Item = &SubscriberRecord> {
        self.subscribers.values()
    }

    pub fn shop(&self, shop_id: &ShopId) -> Option<&ShopRecord> {
        self.shops.get(shop_id)
    }

    pub fn shops(&self) -> impl Iterator<Item = &ShopRecord> {
        self.shops.values()
    }

    pub fn credited(&self, bank_ref: &str) -> Pence {
        self.credits.get(bank_ref).copied().unwrap_or(0)
    }

    pub fn session(&self, id: SessionId) -> Option<&MnoSession> {
        self.sessions.get(&id)
    }

    pub fn sessions(&self) -> impl Iterator<Item = &MnoSession> {
        self.sessions.values()
    }

    pub fn ledger(&self) -> &Ledger {
        &self.ledger
    }
}
