//! Canonical binary encoding of every protocol message.
//!
//! A message is a one-byte tag followed by its fields in a fixed order.
//! Integers are big-endian; fixed-width identifiers, nonces and the MAC tag
//! are raw bytes; ciphertexts, signatures and strings carry a 4-byte length
//! prefix. Each message value has exactly one encoding, and decoding rejects
//! unknown tags, short input, bad lengths and trailing bytes.

pub mod payload;
mod wire;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use payload::{LineItem, PaymentInfo, PriceQuote, ShoppingDetails, TransactionInfo, TransactionRequest};
pub use wire::MAX_FIELD_LEN;

use crate::crypto::{Ciphertext, MacTag, Signature, MAC_LEN};
use crate::types::{Lai, Millis, Nonce, Plmn, ShopId, Step, Tmsi};
use wire::{Reader, Writer};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("unknown message tag {0:#04x}")]
    UnknownTag(u8),
    #[error("truncated: needed {needed} bytes, {available} available")]
    Truncated { needed: usize, available: usize },
    #[error("{0} trailing bytes after message")]
    TrailingBytes(usize),
    #[error("length prefix {declared} exceeds the {available} bytes available")]
    LengthOverflow { declared: usize, available: usize },
    #[error("invalid field: {0}")]
    InvalidField(&'static str),
}

/// One tag per message type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MessageKind {
    IdRequest = 0x01,
    IdResponse = 0x02,
    AuthForward = 0x03,
    Declined = 0x04,
    Challenge = 0x05,
    AuthResponse = 0x06,
    Stop = 0x07,
    AuthConfirm = 0x08,
    AuthSuccess = 0x09,
    KeyDelivery = 0x0A,
    PriceOffer = 0x0B,
    PaymentMessage = 0x0C,
    TransactionForward = 0x0D,
    TransactionResult = 0x0E,
    SettlementBundle = 0x0F,
}

impl MessageKind {
    pub const ALL: [MessageKind; 15] = [
        MessageKind::IdRequest,
        MessageKind::IdResponse,
        MessageKind::AuthForward,
        MessageKind::Declined,
        MessageKind::Challenge,
        MessageKind::AuthResponse,
        MessageKind::Stop,
        MessageKind::AuthConfirm,
        MessageKind::AuthSuccess,
        MessageKind::KeyDelivery,
        MessageKind::PriceOffer,
        MessageKind::PaymentMessage,
        MessageKind::TransactionForward,
        MessageKind::TransactionResult,
        MessageKind::SettlementBundle,
    ];

    pub fn tag(self) -> u8 {
        self as u8
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.tag() == tag)
    }

    /// The flow step this message belongs to.
    pub fn step(self) -> Step {
        match self {
            MessageKind::IdRequest => Step::IdRequest,
            MessageKind::IdResponse => Step::IdResponse,
            MessageKind::AuthForward => Step::AuthForward,
            MessageKind::Declined => Step::Declined,
            MessageKind::Challenge => Step::Challenge,
            MessageKind::AuthResponse => Step::AuthResponse,
            MessageKind::Stop | MessageKind::AuthConfirm => Step::MnoVerify,
            MessageKind::AuthSuccess => Step::MobileVerify,
            MessageKind::KeyDelivery => Step::KeyDelivery,
            MessageKind::PriceOffer => Step::PriceOffer,
            MessageKind::PaymentMessage => Step::Payment,
            MessageKind::TransactionForward => Step::PosVerify,
            MessageKind::TransactionResult => Step::Result,
            MessageKind::SettlementBundle => Step::Bundle,
        }
    }
}

impl fmt::Display for MessageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Message 19: a half the terminal can read and a half only the MNO can.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PaymentMessage {
    /// E_Kc2(PI), for the terminal.
    pub enc_pi: Ciphertext,
    /// E_Kc(TRM), opaque to the terminal.
    pub enc_trm: Ciphertext,
    /// MAC_Kc1 over `enc_trm`.
    pub mac: MacTag,
}

/// Message 21: the opaque half of message 19, relayed unchanged, plus TS_U.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TransactionForward {
    pub enc_trm: Ciphertext,
    pub mac: MacTag,
    pub ts_u: Millis,
}

/// E_Kc2(TI) and the MNO's signature over it.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SignedTransactionInfo {
    pub enc_ti: Ciphertext,
    pub mno_signature: Signature,
}

/// Message 23. A rejected transaction reaches the terminal only as `Failed`;
/// the precise cause stays with the MNO.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum TransactionResult {
    Executed(SignedTransactionInfo),
    Failed,
}

/// Message 25.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SettlementBundle {
    pub result: SignedTransactionInfo,
    pub details: ShoppingDetails,
    pub pos_signature: Signature,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Message {
    IdRequest,
    IdResponse {
        tmsi: Tmsi,
        lai: Lai,
    },
    AuthForward {
        tmsi: Tmsi,
        lai: Lai,
        shop_id: ShopId,
    },
    Declined,
    Challenge {
        r: Nonce,
    },
    /// E_Kc(R ‖ R_s)
    AuthResponse {
        ciphertext: Ciphertext,
    },
    Stop,
    /// E_Kc(R_s ‖ R)
    AuthConfirm {
        ciphertext: Ciphertext,
    },
    AuthSuccess,
    /// E_Kp(shop ID ‖ K_c2)
    KeyDelivery {
        ciphertext: Ciphertext,
    },
    /// E_Kc2(total price, receipt number)
    PriceOffer {
        ciphertext: Ciphertext,
    },
    PaymentMessage(PaymentMessage),
    TransactionForward(TransactionForward),
    TransactionResult(TransactionResult),
    SettlementBundle(SettlementBundle),
}

const STATUS_EXECUTED: u8 = 0x00;
const STATUS_FAILED: u8 = 0x01;

fn write_lai(w: &mut Writer, lai: &Lai) {
    let digits = |v: u16, n: usize| -> Vec<u8> {
        let s = format!("{v:0n$}");
        s.bytes().map(|b| b - b'0').collect()
    };
    let mcc = digits(lai.plmn.mcc, 3);
    let (mnc, mnc3) = if lai.plmn.mnc_three_digits {
        let d = digits(lai.plmn.mnc, 3);
        ([d[0], d[1]], d[2])
    } else {
        let d = digits(lai.plmn.mnc, 2);
        ([d[0], d[1]], 0x0F)
    };
    w.u8(mcc[1] << 4 | mcc[0])
        .u8(mnc3 << 4 | mcc[2])
        .u8(mnc[1] << 4 | mnc[0])
        .u16(lai.lac);
}

fn read_lai(r: &mut Reader<'_>) -> Result<Lai, DecodeError> {
    let [b0, b1, b2]: [u8; 3] = r.array()?;
    let lac = r.u16()?;
    let digit = |n: u8| {
        if n <= 9 {
            Ok(u16::from(n))
        } else {
            Err(DecodeError::InvalidField("lai digit is not bcd"))
        }
    };
    let mcc = digit(b0 & 0x0F)? * 100 + digit(b0 >> 4)? * 10 + digit(b1 & 0x0F)?;
    let mnc12 = digit(b2 & 0x0F)? * 10 + digit(b2 >> 4)?;
    let plmn = match b1 >> 4 {
        0x0F => Plmn::new(mcc, mnc12, false),
        d => Plmn::new(mcc, mnc12 * 10 + digit(d)?, true),
    }
    .ok_or(DecodeError::InvalidField("lai network code out of range"))?;
    Ok(Lai { plmn, lac })
}

fn write_signed_ti(w: &mut Writer, s: &SignedTransactionInfo) {
    w.var(s.enc_ti.as_bytes()).var(&s.mno_signature.0);
}

fn read_signed_ti(r: &mut Reader<'_>) -> Result<SignedTransactionInfo, DecodeError> {
    Ok(SignedTransactionInfo {
        enc_ti: Ciphertext::from(r.var()?.to_vec()),
        mno_signature: Signature(r.var()?.to_vec()),
    })
}

fn read_ct(r: &mut Reader<'_>) -> Result<Ciphertext, DecodeError> {
    Ok(Ciphertext::from(r.var()?.to_vec()))
}

impl Message {
    pub fn kind(&self) -> MessageKind {
        match self {
            Message::IdRequest => MessageKind::IdRequest,
            Message::IdResponse { .. } => MessageKind::IdResponse,
            Message::AuthForward { .. } => MessageKind::AuthForward,
            Message::Declined => MessageKind::Declined,
            Message::Challenge { .. } => MessageKind::Challenge,
            Message::AuthResponse { .. } => MessageKind::AuthResponse,
            Message::Stop => MessageKind::Stop,
            Message::AuthConfirm { .. } => MessageKind::AuthConfirm,
            Message::AuthSuccess => MessageKind::AuthSuccess,
            Message::KeyDelivery { .. } => MessageKind::KeyDelivery,
            Message::PriceOffer { .. } => MessageKind::PriceOffer,
            Message::PaymentMessage(_) => MessageKind::PaymentMessage,
            Message::TransactionForward(_) => MessageKind::TransactionForward,
            Message::TransactionResult(_) => MessageKind::TransactionResult,
            Message::SettlementBundle(_) => MessageKind::SettlementBundle,
        }
    }

    pub fn step(&self) -> Step {
        self.kind().step()
    }

    /// One-line human-readable description, recorded next to the raw bytes
    /// in transcripts.
    pub fn summary(&self) -> String {
        let n = |c: &Ciphertext| c.len();
        match self {
            Message::IdRequest | Message::Declined | Message::Stop | Message::AuthSuccess => self.kind().to_string(),
            Message::IdResponse { tmsi, lai } => format!("IdResponse tmsi={tmsi} lai={lai}"),
            Message::AuthForward { tmsi, lai, shop_id } => {
                format!("AuthForward tmsi={tmsi} lai={lai} shop={shop_id}")
            }
            Message::Challenge { r } => format!("Challenge r={r}"),
            Message::AuthResponse { ciphertext } => format!("AuthResponse ct[{}]", n(ciphertext)),
            Message::AuthConfirm { ciphertext } => format!("AuthConfirm ct[{}]", n(ciphertext)),
            Message::KeyDelivery { ciphertext } => format!("KeyDelivery ct[{}]", n(ciphertext)),
            Message::PriceOffer { ciphertext } => format!("PriceOffer ct[{}]", n(ciphertext)),
            Message::PaymentMessage(p) => format!(
                "PaymentMessage pi[{}] trm[{}] mac={}",
                n(&p.enc_pi),
                n(&p.enc_trm),
                hex::encode(&p.mac.0[..4])
            ),
            Message::TransactionForward(t) => format!(
                "TransactionForward trm[{}] mac={} ts_u={}",
                n(&t.enc_trm),
                hex::encode(&t.mac.0[..4]),
                t.ts_u
            ),
            Message::TransactionResult(TransactionResult::Executed(s)) => format!(
                "TransactionResult executed ti[{}] sig[{}]",
                n(&s.enc_ti),
                s.mno_signature.0.len()
            ),
            Message::TransactionResult(TransactionResult::Failed) => "TransactionResult failed".to_owned(),
            Message::SettlementBundle(b) => format!(
                "SettlementBundle ti[{}] items={} total={} sigs[{},{}]",
                n(&b.result.enc_ti),
                b.details.items.len(),
                b.details.total,
                b.result.mno_signature.0.len(),
                b.pos_signature.0.len()
            ),
        }
    }
}

pub fn encode(m: &Message) -> Vec<u8> {
    let mut w = Writer::new();
    w.u8(m.kind().tag());
    match m {
        Message::IdRequest | Message::Declined | Message::Stop | Message::AuthSuccess => {}
        Message::IdResponse { tmsi, lai } => {
            w.fixed(tmsi.as_bytes());
            write_lai(&mut w, lai);
        }
        Message::AuthForward { tmsi, lai, shop_id } => {
            w.fixed(tmsi.as_bytes());
            write_lai(&mut w, lai);
            w.fixed(shop_id.as_bytes());
        }
        Message::Challenge { r } => {
            w.fixed(r.as_bytes());
        }
        Message::AuthResponse { ciphertext }
        | Message::AuthConfirm { ciphertext }
        | Message::KeyDelivery { ciphertext }
        | Message::PriceOffer { ciphertext } => {
            w.var(ciphertext.as_bytes());
        }
        Message::PaymentMessage(p) => {
            w.var(p.enc_pi.as_bytes()).var(p.enc_trm.as_bytes()).fixed(&p.mac.0);
        }
        Message::TransactionForward(t) => {
            w.var(t.enc_trm.as_bytes()).fixed(&t.mac.0).u64(t.ts_u);
        }
        Message::TransactionResult(TransactionResult::Executed(s)) => {
            w.u8(STATUS_EXECUTED);
            write_signed_ti(&mut w, s);
        }
        Message::TransactionResult(TransactionResult::Failed) => {
            w.u8(STATUS_FAILED);
        }
        Message::SettlementBundle(b) => {
            write_signed_ti(&mut w, &b.result);
            b.details.write(&mut w);
            w.var(&b.pos_signature.0);
        }
    }
    w.finish()
}

pub fn decode(bytes: &[u8]) -> Result<Message, DecodeError> {
    let mut r = Reader::new(bytes);
    let tag = r.u8()?;
    let kind = MessageKind::from_tag(tag).ok_or(DecodeError::UnknownTag(tag))?;
    let m = match kind {
        MessageKind::IdRequest => Message::IdRequest,
        MessageKind::Declined => Message::Declined,
        MessageKind::Stop => Message::Stop,
        MessageKind::AuthSuccess => Message::AuthSuccess,
        MessageKind::IdResponse => Message::IdResponse {
            tmsi: Tmsi(r.array()?),
            lai: read_lai(&mut r)?,
        },
        MessageKind::AuthForward => Message::AuthForward {
            tmsi: Tmsi(r.array()?),
            lai: read_lai(&mut r)?,
            shop_id: ShopId(r.array()?),
        },
        MessageKind::Challenge => Message::Challenge { r: Nonce(r.array()?) },
        MessageKind::AuthResponse => Message::AuthResponse {
            ciphertext: read_ct(&mut r)?,
        },
        MessageKind::AuthConfirm => Message::AuthConfirm {
            ciphertext: read_ct(&mut r)?,
        },
        MessageKind::KeyDelivery => Message::KeyDelivery {
            ciphertext: read_ct(&mut r)?,
        },
        MessageKind::PriceOffer => Message::PriceOffer {
            ciphertext: read_ct(&mut r)?,
        },
        MessageKind::PaymentMessage => Message::PaymentMessage(PaymentMessage {
            enc_pi: read_ct(&mut r)?,
            enc_trm: read_ct(&mut r)?,
            mac: MacTag(r.array::<MAC_LEN>()?),
        }),
        MessageKind::TransactionForward => Message::TransactionForward(TransactionForward {
            enc_trm: read_ct(&mut r)?,
            mac: MacTag(r.array::<MAC_LEN>()?),
            ts_u: r.u64()?,
        }),
        MessageKind::TransactionResult => Message::TransactionResult(match r.u8()? {
            STATUS_EXECUTED => TransactionResult::Executed(read_signed_ti(&mut r)?),
            STATUS_FAILED => TransactionResult::Failed,
            _ => return Err(DecodeError::InvalidField("transaction result status")),
        }),
        MessageKind::SettlementBundle => Message::SettlementBundle(SettlementBundle {
            result: read_signed_ti(&mut r)?,
            details: ShoppingDetails::read(&mut r)?,
            pos_signature: Signature(r.var()?.to_vec()),
        }),
    };
    r.finish()?;
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lai(mcc: u16, mnc: u16, three: bool, lac: u16) -> Lai {
        Lai {
            plmn: Plmn::new(mcc, mnc, three).unwrap(),
            lac,
        }
    }

    #[test]
    fn empty_input_is_truncation() {
        assert!(matches!(decode(&[]), Err(DecodeError::Truncated { .. })));
    }

    #[test]
    fn unknown_tags() {
        for tag in [0x00, 0x10, 0xFF] {
            assert_eq!(decode(&[tag]), Err(DecodeError::UnknownTag(tag)));
        }
    }

    #[test]
    fn trailing_bytes_rejected() {
        assert_eq!(decode(&[0x01, 0x00]), Err(DecodeError::TrailingBytes(1)));
    }

    #[test]
    fn length_prefix_beyond_input() {
        let bytes = [0x06, 0x00, 0x00, 0x00, 0x09, 1, 2];
        assert_eq!(
            decode(&bytes),
            Err(DecodeError::LengthOverflow {
                declared: 9,
                available: 2
            })
        );
    }

    #[test]
    fn lai_is_packed_bcd() {
        let m = Message::IdResponse {
            tmsi: Tmsi([0xA1, 0xB2, 0xC3, 0xD4]),
            lai: lai(234, 15, false, 0x1234),
        };
        let bytes = encode(&m);
        assert_eq!(hex::encode(&bytes), "02a1b2c3d432f4511234");
        assert_eq!(decode(&bytes).unwrap(), m);

        let three = Message::IdResponse {
            tmsi: Tmsi([0; 4]),
            lai: lai(310, 260, true, 1),
        };
        assert_eq!(&encode(&three)[5..8], &[0x13, 0x00, 0x62]);
        assert_eq!(decode(&encode(&three)).unwrap(), three);
    }

    #[test]
    fn non_bcd_lai_rejected() {
        let mut bytes = encode(&Message::IdResponse {
            tmsi: Tmsi([0; 4]),
            lai: lai(234, 15, false, 0),
        });
        bytes[5] = 0xAA;
        assert!(matches!(decode(&bytes), Err(DecodeError::InvalidField(_))));
    }

    #[test]
    fn bad_result_status_rejected() {
        assert!(matches!(decode(&[0x0E, 0x02]), Err(DecodeError::InvalidField(_))));
        assert_eq!(
            decode(&encode(&Message::TransactionResult(TransactionResult::Failed))).unwrap(),
            Message::TransactionResult(TransactionResult::Failed)
        );
    }

    #[test]
    fn payment_message_layout() {
        let p = PaymentMessage {
            enc_pi: Ciphertext::from(vec![0xAA; 3]),
            enc_trm: Ciphertext::from(vec![0xBB; 2]),
            mac: MacTag([0xCC; 32]),
        };
        let bytes = encode(&Message::PaymentMessage(p));
        let mut expect = vec![0x0C, 0, 0, 0, 3, 0xAA, 0xAA, 0xAA, 0, 0, 0, 2, 0xBB, 0xBB];
        expect.extend_from_slice(&[0xCC; 32]);
        assert_eq!(bytes, expect);
    }

    #[test]
    fn steps_cover_the_flow() {
        assert_eq!(MessageKind::AuthForward.step().label(), "4-5");
        assert_eq!(MessageKind::Declined.step().label(), "5.1");
        assert_eq!(MessageKind::PaymentMessage.step().label(), "18-19");
        assert_eq!(MessageKind::SettlementBundle.step().label(), "25");
    }
}
