#![allow(dead_code)]

use cloudpay::codec::{
    LineItem, MessageKind, PaymentMessage, SettlementBundle, ShoppingDetails, SignedTransactionInfo,
    TransactionForward, TransactionResult,
};
use cloudpay::crypto::{Ciphertext, MacTag, Signature};
use cloudpay::store::{ScenarioConfig, DEMO_CONFIG};
use cloudpay::types::Imsi;
use cloudpay::{Lai, Message, Nonce, Plmn, ShopId, Tmsi};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

pub fn demo() -> ScenarioConfig {
    ScenarioConfig::parse(DEMO_CONFIG).unwrap()
}

pub fn demo_imsi(i: usize) -> Imsi {
    Imsi::from_hex(&demo().subscribers[i].imsi).unwrap()
}

pub fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

fn bytes(rng: &mut ChaCha20Rng, max: usize) -> Vec<u8> {
    let mut b = vec![0u8; rng.gen_range(0..=max)];
    rng.fill_bytes(&mut b);
    b
}

fn ct(rng: &mut ChaCha20Rng) -> Ciphertext {
    Ciphertext::from(bytes(rng, 96))
}

fn lai(rng: &mut ChaCha20Rng) -> Lai {
    let three = rng.gen_bool(0.5);
    let mnc = if three {
        rng.gen_range(0..1000)
    } else {
        rng.gen_range(0..100)
    };
    Lai {
        plmn: Plmn::new(rng.gen_range(0..1000), mnc, three).unwrap(),
        lac: rng.gen(),
    }
}

fn signed_ti(rng: &mut ChaCha20Rng) -> SignedTransactionInfo {
    SignedTransactionInfo {
        enc_ti: ct(rng),
        mno_signature: Signature(bytes(rng, 80)),
    }
}

fn details(rng: &mut ChaCha20Rng) -> ShoppingDetails {
    let n = rng.gen_range(0..5);
    let items = (0..n)
        .map(|i| LineItem {
            description: format!("item {i} \u{00e9}{}", rng.gen::<u16>()),
            price: rng.gen_range(0..1_000_000),
        })
        .collect();
    ShoppingDetails::from_items(items).unwrap()
}

/// A random well-formed message of the given kind.
pub fn random_message(kind: MessageKind, rng: &mut ChaCha20Rng) -> Message {
    match kind {
        MessageKind::IdRequest => Message::IdRequest,
        MessageKind::Declined => Message::Declined,
        MessageKind::Stop => Message::Stop,
        MessageKind::AuthSuccess => Message::AuthSuccess,
        MessageKind::IdResponse => Message::IdResponse {
            tmsi: Tmsi(rng.gen()),
            lai: lai(rng),
        },
        MessageKind::AuthForward => Message::AuthForward {
            tmsi: Tmsi(rng.gen()),
            lai: lai(rng),
            shop_id: ShopId(rng.gen()),
        },
        MessageKind::Challenge => Message::Challenge { r: Nonce(rng.gen()) },
        MessageKind::AuthResponse => Message::AuthResponse { ciphertext: ct(rng) },
        MessageKind::AuthConfirm => Message::AuthConfirm { ciphertext: ct(rng) },
        MessageKind::KeyDelivery => Message::KeyDelivery { ciphertext: ct(rng) },
        MessageKind::PriceOffer => Message::PriceOffer { ciphertext: ct(rng) },
        MessageKind::PaymentMessage => Message::PaymentMessage(PaymentMessage {
            enc_pi: ct(rng),
            enc_trm: ct(rng),
            mac: MacTag(rng.gen()),
        }),
        MessageKind::TransactionForward => Message::TransactionForward(TransactionForward {
            enc_trm: ct(rng),
            mac: MacTag(rng.gen()),
            ts_u: rng.gen(),
        }),
        MessageKind::TransactionResult => Message::TransactionResult(if rng.gen_bool(0.8) {
            TransactionResult::Executed(signed_ti(rng))
        } else {
            TransactionResult::Failed
        }),
        MessageKind::SettlementBundle => Message::SettlementBundle(SettlementBundle {
            result: signed_ti(rng),
            details: details(rng),
            pos_signature: Signature(bytes(rng, 80)),
        }),
    }
}
