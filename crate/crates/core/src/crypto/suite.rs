use ed25519_dalek::{Signer, Verifier};
use hmac::{Hmac, Mac};
use sha2::{Digest, Sha256};

use super::{
    CryptoError, CryptoSuite, MacTag, SessionKey, Signature, SignatureKeyPair, SignedResponse, VerifyingKey, HASH_LEN,
};
use crate::types::{LengthError, Party};

const A3_SUFFIX: u8 = 0x03;
const A8_SUFFIX: u8 = 0x08;
const STRETCH_SUFFIX: u8 = 0x0E;
const IV_PREFIX: u8 = 0x1A;
const IV_LEN: usize = 16;

/// Deterministic SHA-256 based suite.
///
/// * A3(K_i, R) = SHA-256(K_i ‖ R ‖ 0x03)[..4], A8 likewise with 0x08 and 8 bytes.
/// * Encryption is a SHA-256 counter-mode keystream with a synthetic IV
///   (SHA-256(0x1A ‖ key ‖ plaintext)[..16]) prepended to the body. A 64-bit
///   K_c is first stretched to SHA-256(K_c ‖ 0x0E).
/// * MAC is HMAC-SHA-256; signatures are Ed25519.
///
/// The synthetic IV is not checked on decryption, so a wrong key yields
/// garbage rather than an error.
#[derive(Debug, Clone, Copy, Default)]
pub struct HashSuite;

fn sha256(parts: &[&[u8]]) -> [u8; HASH_LEN] {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p);
    }
    h.finalize().into()
}

fn check_len(what: &'static str, bytes: &[u8], expected: usize) -> Result<(), LengthError> {
    if bytes.len() == expected {
        Ok(())
    } else {
        Err(LengthError {
            what,
            expected,
            actual: bytes.len(),
        })
    }
}

fn cipher_key(key: &[u8]) -> Result<[u8; 32], CryptoError> {
    match key.len() {
        8 => Ok(sha256(&[key, &[STRETCH_SUFFIX]])),
        32 => Ok(key.try_into().expect("length checked")),
        actual => Err(LengthError {
            what: "cipher key",
            expected: 32,
            actual,
        }
        .into()),
    }
}

fn apply_keystream(key: &[u8; 32], iv: &[u8], data: &mut [u8]) {
    for (block, chunk) in data.chunks_mut(HASH_LEN).enumerate() {
        let ks = sha256(&[key, iv, &(block as u64).to_be_bytes()]);
        for (b, k) in chunk.iter_mut().zip(ks) {
            *b ^= k;
        }
    }
}

impl HashSuite {
    fn gsm(k_i: &[u8], r: &[u8], suffix: u8) -> Result<[u8; HASH_LEN], CryptoError> {
        check_len("subscriber key", k_i, 16)?;
        check_len("challenge", r, 16)?;
        Ok(sha256(&[k_i, r, &[suffix]]))
    }
}

impl CryptoSuite for HashSuite {
    fn name(&self) -> &'static str {
        "sha256-test-suite"
    }

    fn hash(&self, data: &[u8]) -> [u8; HASH_LEN] {
        sha256(&[data])
    }

    fn a3(&self, k_i: &[u8], r: &[u8]) -> Result<SignedResponse, CryptoError> {
        let d = Self::gsm(k_i, r, A3_SUFFIX)?;
        Ok(SignedResponse(d[..4].try_into().expect("4 bytes")))
    }

    fn a8(&self, k_i: &[u8], r: &[u8]) -> Result<SessionKey, CryptoError> {
        let d = Self::gsm(k_i, r, A8_SUFFIX)?;
        Ok(SessionKey::new(d[..8].try_into().expect("8 bytes")))
    }

    fn encrypt(&self, key: &[u8], plaintext: &[u8]) -> Result<Vec<u8>, CryptoError> {
        let key = cipher_key(key)?;
        let iv = sha256(&[&[IV_PREFIX], &key, plaintext]);
        let mut out = Vec::with_capacity(IV_LEN + plaintext.len());
        out.extend_from_slice(&iv[..IV_LEN]);
        out.extend_from_slice(plaintext);
        apply_keystream(&key, &iv[..IV_LEN], &mut out[IV_LEN..]);
        Ok(out)
    }

    fn decrypt(&self, key: &[u8], ciphertext: &[u8]) -> Result<Vec<u8>, CryptoError> {
        let key = cipher_key(key)?;
        if ciphertext.len() < IV_LEN {
            return Err(CryptoError::Framing("shorter than the iv"));
        }
        let (iv, body) = ciphertext.split_at(IV_LEN);
        let mut out = body.to_vec();
        apply_keystream(&key, iv, &mut out);
        Ok(out)
    }

    fn mac(&self, key: &[u8], data: &[u8]) -> Result<MacTag, CryptoError> {
        check_len("mac key", key, 32)?;
        let mut m = Hmac::<Sha256>::new_from_slice(key).expect("hmac takes any key length");
        m.update(data);
        Ok(MacTag(m.finalize().into_bytes().into()))
    }

    fn verify_mac(&self, key: &[u8], data: &[u8], tag: &[u8]) -> bool {
        if key.len() != 32 {
            return false;
        }
        let mut m = Hmac::<Sha256>::new_from_slice(key).expect("hmac takes any key length");
        m.update(data);
        m.verify_slice(tag).is_ok()
    }

    fn keypair_from_seed(&self, seed: &[u8; 32], owner: Party) -> SignatureKeyPair {
        let sk = ed25519_dalek::SigningKey::from_bytes(seed);
        let vk = VerifyingKey(sk.verifying_key().to_bytes().to_vec());
        SignatureKeyPair::new(seed.to_vec(), vk, owner)
    }

    fn sign(&self, keypair: &SignatureKeyPair, data: &[u8]) -> Signature {
        let seed: [u8; 32] = keypair
            .signing_key()
            .try_into()
            .expect("keypairs of this suite carry 32-byte seeds");
        let sk = ed25519_dalek::SigningKey::from_bytes(&seed);
        Signature(sk.sign(data).to_bytes().to_vec())
    }

    fn verify_sig(&self, verifying_key: &[u8], data: &[u8], signature: &[u8]) -> bool {
        let Ok(vk_bytes) = <[u8; 32]>::try_from(verifying_key) else {
            return false;
        };
        let Ok(vk) = ed25519_dalek::VerifyingKey::from_bytes(&vk_bytes) else {
            return false;
        };
        let Ok(sig) = ed25519_dalek::Signature::from_slice(signature) else {
            return false;
        };
        vk.verify(data, &sig).is_ok()
    }
}

#[cfg(test)]
mod tests {
    use std::collections::HashSet;

    use rand::{RngCore, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    use super::*;
    use crate::crypto::SimRng;

    // Independent oracle: a plain SHA-256 over the concatenated input,
    // written without the suite's helpers.
    fn oracle(input: &[u8]) -> Vec<u8> {
        Sha256::digest(input).to_vec()
    }

    fn pair(rng: &mut ChaCha20Rng) -> ([u8; 16], [u8; 16]) {
        let mut k = [0u8; 16];
        let mut r = [0u8; 16];
        rng.fill_bytes(&mut k);
        rng.fill_bytes(&mut r);
        (k, r)
    }

    #[test]
    fn a3_zero_vector() {
        let s = HashSuite.a3(&[0; 16], &[0; 16]).unwrap();
        assert_eq!(hex::encode(s.0), "d9cf8add");
        let mut input = vec![0u8; 32];
        input.push(0x03);
        assert_eq!(&oracle(&input)[..4], &s.0);
    }

    #[test]
    fn a8_zero_vector_is_domain_separated_from_a3() {
        let kc = HashSuite.a8(&[0; 16], &[0; 16]).unwrap();
        assert_eq!(hex::encode(kc.as_bytes()), "6b147d6de4e63bbe");
        let s = HashSuite.a3(&[0; 16], &[0; 16]).unwrap();
        assert_ne!(&kc.as_bytes()[..4], &s.0);
    }

    #[test]
    fn a3_a8_deterministic_and_length_checked() {
        let (k, r) = ([7u8; 16], [9u8; 16]);
        assert_eq!(HashSuite.a3(&k, &r).unwrap(), HashSuite.a3(&k, &r).unwrap());
        assert_eq!(HashSuite.a8(&k, &r).unwrap(), HashSuite.a8(&k, &r).unwrap());
        assert!(matches!(HashSuite.a3(&k[..15], &r), Err(CryptoError::Length(_))));
        assert!(matches!(HashSuite.a8(&k, &[0u8; 17]), Err(CryptoError::Length(_))));
    }

    #[test]
    fn a3_changes_with_challenge() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let (k, r) = pair(&mut rng);
            let mut r2 = r;
            r2[(rng.next_u32() % 16) as usize] ^= 1 << (rng.next_u32() % 8);
            let s1 = HashSuite.a3(&k, &r).unwrap();
            let s2 = HashSuite.a3(&k, &r2).unwrap();
            assert_ne!(s1, s2);
            let mut input = k.to_vec();
            input.extend_from_slice(&r);
            input.push(0x03);
            assert_eq!(&oracle(&input)[..4], &s1.0);
        }
    }

    #[test]
    fn a8_no_collisions_over_1000_pairs() {
        let mut rng = ChaCha20Rng::seed_from_u64(8);
        let mut seen = HashSet::new();
        for _ in 0..1000 {
            let (k, r) = pair(&mut rng);
            assert!(seen.insert(HashSuite.a8(&k, &r).unwrap()));
        }
    }

    #[test]
    fn key_chain_zero_vector() {
        let ks = HashSuite.derive_key_chain(&SessionKey::new([0; 8]));
        assert_eq!(
            hex::encode(ks.k_c1.as_bytes()),
            "af5570f5a1810b7af78caf4bc70a660f0df51e42baf91d4de5b2328de0e83dfc"
        );
        assert_eq!(
            hex::encode(ks.k_c2.as_bytes()),
            "7ef0ca626bbb058dd443bb78e33b888bdec8295c96e51f5545f96370870c10b9"
        );
        assert_eq!(ks.k_c2.as_bytes().as_slice(), oracle(&oracle(&[0; 8])).as_slice());
        assert_eq!(ks, HashSuite.derive_key_chain(&SessionKey::new([0; 8])));
    }

    #[test]
    fn encryption_round_trips() {
        let mut rng = SimRng::from_seed(1);
        for len in [0usize, 1, 31, 32, 33, 100] {
            let pt = rng.gen_bytes(len);
            for key in [rng.gen_bytes(8), rng.gen_bytes(32)] {
                let ct = HashSuite.encrypt(&key, &pt).unwrap();
                assert_eq!(ct.len(), IV_LEN + len);
                assert_eq!(HashSuite.decrypt(&key, &ct).unwrap(), pt);
            }
        }
    }

    #[test]
    fn wrong_key_never_recovers_plaintext() {
        let mut rng = SimRng::from_seed(2);
        for _ in 0..100 {
            let pt = rng.gen_bytes(48);
            let k = rng.gen_bytes(32);
            let k2 = rng.gen_bytes(32);
            let ct = HashSuite.encrypt(&k, &pt).unwrap();
            assert_ne!(HashSuite.decrypt(&k2, &ct).unwrap(), pt);
        }
    }

    #[test]
    fn decrypt_rejects_short_framing_and_bad_keys() {
        assert!(matches!(
            HashSuite.decrypt(&[0; 32], &[0; 15]),
            Err(CryptoError::Framing(_))
        ));
        assert!(matches!(HashSuite.encrypt(&[0; 16], b"x"), Err(CryptoError::Length(_))));
    }

    #[test]
    fn mac_rejects_every_single_bit_flip() {
        let mut rng = SimRng::from_seed(4);
        let key = rng.gen_bytes(32);
        let msg = rng.gen_bytes(64);
        let tag = HashSuite.mac(&key, &msg).unwrap();
        assert!(HashSuite.verify_mac(&key, &msg, &tag.0));
        for bit in 0..msg.len() * 8 {
            let mut m = msg.clone();
            m[bit / 8] ^= 1 << (bit % 8);
            assert!(!HashSuite.verify_mac(&key, &m, &tag.0), "bit {bit}");
        }
        for bit in 0..256 {
            let mut t = tag.0;
            t[bit / 8] ^= 1 << (bit % 8);
            assert!(!HashSuite.verify_mac(&key, &msg, &t));
        }
        let other = rng.gen_bytes(32);
        assert!(!HashSuite.verify_mac(&other, &msg, &tag.0));
    }

    #[test]
    fn signatures_bind_message_and_key() {
        let mut rng = SimRng::from_seed(5);
        let a = HashSuite.keypair_from_seed(&rng.gen_array(), Party::Mno);
        let b = HashSuite.keypair_from_seed(&rng.gen_array(), Party::Pos);
        for _ in 0..100 {
            let msg = rng.gen_bytes(40);
            let sig = HashSuite.sign(&a, &msg);
            assert!(HashSuite.verify_sig(&a.verifying_key().0, &msg, &sig.0));
            let mut altered = msg.clone();
            let bit = (rng.gen_array::<2>()[0] as usize) % (msg.len() * 8);
            altered[bit / 8] ^= 1 << (bit % 8);
            assert!(!HashSuite.verify_sig(&a.verifying_key().0, &altered, &sig.0));
            assert!(!HashSuite.verify_sig(&b.verifying_key().0, &msg, &sig.0));
        }
        assert!(!HashSuite.verify_sig(&a.verifying_key().0, b"m", &[]));
    }
}
