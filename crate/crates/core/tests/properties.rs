mod common;

use cloudpay::codec::MessageKind;
use cloudpay::crypto::{Ciphertext, Crypto, EncryptionKey, MacKey, MacTag, SessionKey};
use cloudpay::harness::{Action, ByteEdit, Hook, Matcher, Verdict, World};
use cloudpay::mobile::UserResponse;
use cloudpay::store::verify_transcript;
use cloudpay::types::Hop;
use cloudpay::{decode, encode, Party};
use common::{demo, random_message, rng};
use proptest::prelude::*;
use sha2::{Digest, Sha256};

fn any_kind() -> impl Strategy<Value = MessageKind> {
    (0..MessageKind::ALL.len()).prop_map(|i| MessageKind::ALL[i])
}

/// Every (hop, kind, length) seen on the wire in an honest purchase.
fn honest_frames() -> Vec<(Hop, MessageKind, usize)> {
    let mut w = World::new(&demo(), "reference", 0).unwrap();
    w.start_purchase(0, "reference").unwrap();
    w.run();
    w.adversary()
        .observed()
        .iter()
        .map(|o| (o.hop, MessageKind::from_tag(o.bytes[0]).unwrap(), o.bytes.len()))
        .collect()
}

proptest! {
    #[test]
    fn every_message_round_trips(kind in any_kind(), seed in any::<u64>()) {
        let m = random_message(kind, &mut rng(seed));
        let bytes = encode(&m);
        prop_assert_eq!(bytes[0], kind.tag());
        prop_assert_eq!(decode(&bytes), Ok(m));
    }

    #[test]
    fn decoding_is_total_and_canonical(bytes in proptest::collection::vec(any::<u8>(), 0..300)) {
        if let Ok(m) = decode(&bytes) {
            prop_assert_eq!(encode(&m), bytes);
        }
    }

    #[test]
    fn truncating_a_message_never_decodes(kind in any_kind(), seed in any::<u64>(), cut in any::<prop::sample::Index>()) {
        let bytes = encode(&random_message(kind, &mut rng(seed)));
        let keep = cut.index(bytes.len());
        prop_assert!(decode(&bytes[..keep]).is_err());
    }

    #[test]
    fn any_flip_of_data_or_tag_fails_the_mac(
        key in any::<[u8; 32]>(),
        data in proptest::collection::vec(any::<u8>(), 1..128),
        bit in any::<usize>(),
    ) {
        let c = Crypto::hash_suite(Party::Mno);
        let key = MacKey::new(key);
        let ct = Ciphertext::from(data.clone());
        let tag = c.mac(&key, &ct).unwrap();
        prop_assert!(c.verify_mac(&key, &ct, &tag));

        let total = (data.len() + tag.0.len()) * 8;
        let e = ByteEdit::flip_bit(bit % total);
        if e.offset < data.len() {
            let mut d = data;
            d[e.offset] ^= e.xor;
            prop_assert!(!c.verify_mac(&key, &Ciphertext::from(d), &tag));
        } else {
            let mut t = tag.0;
            t[e.offset - data.len()] ^= e.xor;
            prop_assert!(!c.verify_mac(&key, &ct, &MacTag(t)));
        }
    }

    #[test]
    fn encryption_round_trips(key in any::<[u8; 32]>(), data in proptest::collection::vec(any::<u8>(), 0..128)) {
        let c = Crypto::hash_suite(Party::Mobile);
        let key = EncryptionKey::new(key);
        let ct = c.encrypt(&key, &data).unwrap();
        prop_assert_eq!(c.decrypt(&key, &ct).unwrap(), data);
    }

    #[test]
    fn key_chain_hashes_forward(k_c in any::<[u8; 8]>()) {
        let c = Crypto::hash_suite(Party::Mno);
        let keys = c.key_chain(&SessionKey::new(k_c));
        let k_c1: [u8; 32] = Sha256::digest(k_c).into();
        let k_c2: [u8; 32] = Sha256::digest(k_c1).into();
        prop_assert_eq!(keys.k_c1.as_bytes(), &k_c1);
        prop_assert_eq!(keys.k_c2.as_bytes(), &k_c2);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    /// Whatever PINs the customer types, the run stays consistent and verifiable.
    #[test]
    fn pin_scripts_keep_the_invariants(
        seed in any::<u64>(),
        purchase in 0usize..2,
        script in proptest::collection::vec(prop_oneof![Just(None), Just(Some(false)), Just(Some(true))], 1..5),
    ) {
        let config = demo();
        let mut w = World::new(&config, "pin-script", seed).unwrap();
        let sub = w.config().purchases[purchase].subscriber;
        let pin = w.config().subscribers[sub].pin.clone();
        let device = w.device_of(sub);
        let flow = w.start_purchase(purchase, "scripted").unwrap();
        let responses = script
            .iter()
            .map(|s| match s {
                None => UserResponse::Decline,
                Some(true) => UserResponse::Pin(pin.clone()),
                Some(false) => UserResponse::Pin("99999".into()),
            })
            .collect();
        w.script_pins(device, responses);
        w.run();
        let settled = w.flow(flow).verdict == Some(Verdict::Settled);
        let run = w.finish(Vec::new());
        prop_assert!(run.outcome.passed(), "{:?}", run.outcome.failures().collect::<Vec<_>>());
        prop_assert_eq!(run.outcome.ledger.len(), usize::from(settled));
        prop_assert!(verify_transcript(&run.transcript.to_jsonl(), &config).is_ok());
    }

    /// One adversary action anywhere never yields an unauthorised debit,
    /// leaks a key, or leaves a transcript the verifier rejects.
    #[test]
    fn a_single_adversary_action_is_harmless(
        seed in any::<u64>(),
        frame in any::<prop::sample::Index>(),
        action in 0u8..3,
        bit in any::<usize>(),
    ) {
        let config = demo();
        let frames = honest_frames();
        let (hop, kind, len) = frames[frame.index(frames.len())];
        let mut w = World::new(&config, "single-action", seed).unwrap();
        let action = match action {
            0 => Action::Drop,
            1 => Action::Tamper(vec![ByteEdit::flip_bit(bit % (len * 8))]),
            _ => Action::Record,
        };
        w.add_hook(Hook::once(Matcher::on(hop, kind), action));
        w.start_purchase(0, "purchase").unwrap();
        w.run();
        let run = w.finish(Vec::new());
        prop_assert!(run.outcome.passed(), "{:?}", run.outcome.failures().collect::<Vec<_>>());
        let s = &run.outcome.sessions[0];
        if s.verdict != Verdict::Settled {
            prop_assert!(s.debited == 0 || s.verdict.aborted_at().is_some_and(|step| step > cloudpay::Step::Execute));
        }
        if let Err(e) = verify_transcript(&run.transcript.to_jsonl(), &config) {
            prop_assert!(false, "verifier rejected an honest record of an attack: {}", e);
        }
    }
}
