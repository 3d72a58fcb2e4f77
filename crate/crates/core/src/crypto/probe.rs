use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::sync::{Arc, Mutex, MutexGuard};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::types::Party;

/// Category of key material tracked by the probe.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum KeyKind {
    SubscriberKey,
    Pin,
    SessionKey,
    MacKey,
    EncryptionKey,
    ShopKey,
    Signing(Party),
    Verifying(Party),
}

impl fmt::Display for KeyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KeyKind::SubscriberKey => f.write_str("k_i"),
            KeyKind::Pin => f.write_str("pin"),
            KeyKind::SessionKey => f.write_str("k_c"),
            KeyKind::MacKey => f.write_str("k_c1"),
            KeyKind::EncryptionKey => f.write_str("k_c2"),
            KeyKind::ShopKey => f.write_str("k_p"),
            KeyKind::Signing(p) => write!(f, "{p}-signing-key"),
            KeyKind::Verifying(p) => write!(f, "{p}-verifying-key"),
        }
    }
}

/// Snapshot of the call counters.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ProbeCounters {
    /// Decryptions per (caller, kind of key used); `None` for unregistered keys.
    pub decrypts: BTreeMap<(Party, Option<KeyKind>), u64>,
    pub mac_verifies: BTreeMap<Party, u64>,
    pub macs_generated: u64,
    /// MACs computed over bytes that no `encrypt` call produced.
    pub macs_over_plaintext: u64,
}

impl ProbeCounters {
    pub fn decrypts_with(&self, party: Party, kind: KeyKind) -> u64 {
        self.decrypts.get(&(party, Some(kind))).copied().unwrap_or(0)
    }

    pub fn decrypts_by(&self, party: Party) -> u64 {
        self.decrypts
            .iter()
            .filter(|((p, _), _)| *p == party)
            .map(|(_, n)| n)
            .sum()
    }

    pub fn verifies_by(&self, party: Party) -> u64 {
        self.mac_verifies.get(&party).copied().unwrap_or(0)
    }
}

#[derive(Default)]
struct ProbeState {
    holdings: BTreeMap<Party, BTreeSet<KeyKind>>,
    material: Vec<(Party, KeyKind, Vec<u8>)>,
    kind_of: HashMap<Vec<u8>, KeyKind>,
    ciphertexts: HashSet<[u8; 32]>,
    counters: ProbeCounters,
}

/// Instrumentation shared by every party of one world: which keys each party
/// has held, and how often each primitive ran with which key.
#[derive(Clone, Default)]
pub struct Probe(Arc<Mutex<ProbeState>>);

impl fmt::Debug for Probe {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Probe").finish_non_exhaustive()
    }
}

fn digest(bytes: &[u8]) -> [u8; 32] {
    Sha256::digest(bytes).into()
}

impl Probe {
    fn state(&self) -> MutexGuard<'_, ProbeState> {
        self.0.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn hold(&self, party: Party, kind: KeyKind, material: &[u8]) {
        let mut s = self.state();
        s.holdings.entry(party).or_default().insert(kind);
        s.kind_of.entry(material.to_vec()).or_insert(kind);
        if !s
            .material
            .iter()
            .any(|(p, k, m)| *p == party && *k == kind && m == material)
        {
            s.material.push((party, kind, material.to_vec()));
        }
    }

    pub fn holdings(&self, party: Party) -> BTreeSet<KeyKind> {
        self.state().holdings.get(&party).cloned().unwrap_or_default()
    }

    /// Every registered key of the given kinds, across all parties.
    pub fn material_of(&self, kinds: &[KeyKind]) -> Vec<(KeyKind, Vec<u8>)> {
        let s = self.state();
        let mut out: Vec<(KeyKind, Vec<u8>)> = s
            .material
            .iter()
            .filter(|(_, k, _)| kinds.contains(k))
            .map(|(_, k, m)| (*k, m.clone()))
            .collect();
        out.sort();
        out.dedup();
        out
    }

    pub fn counters(&self) -> ProbeCounters {
        self.state().counters.clone()
    }

    pub(crate) fn note_encrypt(&self, ciphertext: &[u8]) {
        let d = digest(ciphertext);
        self.state().ciphertexts.insert(d);
    }

    pub(crate) fn note_decrypt(&self, party: Party, key: &[u8]) {
        let mut s = self.state();
        let kind = s.kind_of.get(key).copied();
        *s.counters.decrypts.entry((party, kind)).or_default() += 1;
    }

    pub(crate) fn note_mac(&self, _party: Party, data: &[u8]) {
        let d = digest(data);
        let mut s = self.state();
        s.counters.macs_generated += 1;
        if !s.ciphertexts.contains(&d) {
            s.counters.macs_over_plaintext += 1;
        }
    }

    pub(crate) fn note_verify_mac(&self, party: Party) {
        *self.state().counters.mac_verifies.entry(party).or_default() += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{Ciphertext, Crypto, MacKey, ShopKey};

    #[test]
    fn decrypts_are_attributed_to_key_kind() {
        let crypto = Crypto::hash_suite(Party::Pos);
        let kp = ShopKey::new([1; 32]);
        crypto.hold(KeyKind::ShopKey, kp.as_bytes());
        let ct = crypto.encrypt(&kp, b"hello").unwrap();
        crypto.decrypt(&kp, &ct).unwrap();
        crypto.decrypt(&ShopKey::new([2; 32]), &ct).unwrap();
        let c = crypto.probe().counters();
        assert_eq!(c.decrypts_with(Party::Pos, KeyKind::ShopKey), 1);
        assert_eq!(c.decrypts.get(&(Party::Pos, None)), Some(&1));
        assert_eq!(crypto.probe().holdings(Party::Pos), BTreeSet::from([KeyKind::ShopKey]));
    }

    #[test]
    fn mac_over_foreign_bytes_is_flagged() {
        let crypto = Crypto::hash_suite(Party::Mobile);
        let k = MacKey::new([3; 32]);
        let ct = crypto.encrypt(&ShopKey::new([0; 32]), b"payload").unwrap();
        crypto.mac(&k, &ct).unwrap();
        assert_eq!(crypto.probe().counters().macs_over_plaintext, 0);
        crypto.mac(&k, &Ciphertext::from(b"payload".to_vec())).unwrap();
        let c = crypto.probe().counters();
        assert_eq!(c.macs_generated, 2);
        assert_eq!(c.macs_over_plaintext, 1);
    }
}
