//! Plaintexts carried inside ciphertexts, and the byte strings that get signed.

use serde::{Deserialize, Serialize};

use super::wire::{Reader, Writer};
use super::DecodeError;
use crate::crypto::{Ciphertext, EncryptionKey, Signature};
use crate::types::{Millis, Nonce, Pence, ReceiptNo, ShopId, TxnSerial};

/// PI: what the customer agreed to pay.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PaymentInfo {
    pub receipt_no: ReceiptNo,
    pub total_price: Pence,
    pub ts_u: Millis,
}

/// TRM: PI plus the SIM nonce and the transaction counter; readable only by the MNO.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TransactionRequest {
    pub pi: PaymentInfo,
    pub r_s: Nonce,
    pub tc: u64,
}

/// TI: what the MNO actually executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TransactionInfo {
    pub txn_serial: TxnSerial,
    pub amount: Pence,
    pub ts_tr: Millis,
}

/// Price offer shown to the customer before PIN entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PriceQuote {
    pub total_price: Pence,
    pub receipt_no: ReceiptNo,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LineItem {
    pub description: String,
    pub price: Pence,
}

/// SD: itemised bill, countersigned by the terminal.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ShoppingDetails {
    pub items: Vec<LineItem>,
    pub total: Pence,
}

impl ShoppingDetails {
    pub fn from_items(items: Vec<LineItem>) -> Option<Self> {
        let total = items.iter().try_fold(0u64, |acc, i| acc.checked_add(i.price))?;
        Some(Self { items, total })
    }

    /// `total` equals the sum of line prices.
    pub fn is_consistent(&self) -> bool {
        self.items.iter().try_fold(0u64, |acc, i| acc.checked_add(i.price)) == Some(self.total)
    }

    pub(crate) fn write(&self, w: &mut Writer) {
        w.u32(u32::try_from(self.items.len()).expect("item count fits u32"));
        for item in &self.items {
            w.var(item.description.as_bytes()).u64(item.price);
        }
        w.u64(self.total);
    }

    pub(crate) fn read(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let count = r.u32()? as usize;
        // every item takes at least a 4-byte length and an 8-byte price
        if count.saturating_mul(12) > r.remaining() {
            return Err(DecodeError::LengthOverflow {
                declared: count,
                available: r.remaining(),
            });
        }
        let mut items = Vec::with_capacity(count);
        for _ in 0..count {
            let description = std::str::from_utf8(r.var()?)
                .map_err(|_| DecodeError::InvalidField("line item description is not utf-8"))?
                .to_owned();
            items.push(LineItem {
                description,
                price: r.u64()?,
            });
        }
        Ok(Self { items, total: r.u64()? })
    }
}

fn decode_with<T>(bytes: &[u8], f: impl FnOnce(&mut Reader<'_>) -> Result<T, DecodeError>) -> Result<T, DecodeError> {
    let mut r = Reader::new(bytes);
    let v = f(&mut r)?;
    r.finish()?;
    Ok(v)
}

impl PaymentInfo {
    pub const LEN: usize = 24;

    fn write(&self, w: &mut Writer) {
        w.u64(self.receipt_no.0).u64(self.total_price).u64(self.ts_u);
    }

    fn read(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(Self {
            receipt_no: ReceiptNo(r.u64()?),
            total_price: r.u64()?,
            ts_u: r.u64()?,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        self.write(&mut w);
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DecodeError> {
        decode_with(bytes, Self::read)
    }
}

impl TransactionRequest {
    pub const LEN: usize = PaymentInfo::LEN + 16 + 8;

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        self.pi.write(&mut w);
        w.fixed(self.r_s.as_bytes()).u64(self.tc);
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DecodeError> {
        decode_with(bytes, |r| {
            Ok(Self {
                pi: PaymentInfo::read(r)?,
                r_s: Nonce(r.array()?),
                tc: r.u64()?,
            })
        })
    }
}

impl TransactionInfo {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.u64(self.txn_serial.0).u64(self.amount).u64(self.ts_tr);
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DecodeError> {
        decode_with(bytes, |r| {
            Ok(Self {
                txn_serial: TxnSerial(r.u64()?),
                amount: r.u64()?,
                ts_tr: r.u64()?,
            })
        })
    }
}

impl PriceQuote {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.u64(self.total_price).u64(self.receipt_no.0);
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DecodeError> {
        decode_with(bytes, |r| {
            Ok(Self {
                total_price: r.u64()?,
                receipt_no: ReceiptNo(r.u64()?),
            })
        })
    }
}

/// Plaintext of the key delivery: the recipient shop's ID, then K_c2.
pub fn key_delivery_bytes(shop_id: &ShopId, k_c2: &EncryptionKey) -> Vec<u8> {
    let mut w = Writer::new();
    w.fixed(shop_id.as_bytes()).fixed(k_c2.as_bytes());
    w.finish()
}

pub fn decode_key_delivery(bytes: &[u8]) -> Result<(ShopId, EncryptionKey), DecodeError> {
    decode_with(bytes, |r| {
        let shop_id = ShopId(r.array()?);
        let k_c2 = EncryptionKey::new(r.array()?);
        Ok((shop_id, k_c2))
    })
}

const MNO_CONTEXT: &[u8] = b"cloudpay/transaction-info\0";
const POS_CONTEXT: &[u8] = b"cloudpay/settlement\0";

/// Bytes the MNO signs for a transaction result: a context label and E_Kc2(TI).
pub fn mno_signed_bytes(enc_ti: &Ciphertext) -> Vec<u8> {
    let mut out = MNO_CONTEXT.to_vec();
    out.extend_from_slice(enc_ti.as_bytes());
    out
}

/// Bytes the terminal signs: the MNO's signed result followed by the shopping details.
pub fn pos_signed_bytes(enc_ti: &Ciphertext, mno_signature: &Signature, sd: &ShoppingDetails) -> Vec<u8> {
    let mut w = Writer::new();
    w.fixed(POS_CONTEXT).var(enc_ti.as_bytes()).var(&mno_signature.0);
    sd.write(&mut w);
    w.finish()
}
