//! Cryptographic provider.
//!
//! [`CryptoSuite`] is the abstract set of primitives the protocol relies on:
//! the GSM A3/A8 functions, a one-way hash, symmetric encryption, a MAC and a
//! signature scheme. [`HashSuite`] is the deterministic built-in suite used by
//! the simulator; another provider can be slotted in behind the same trait.
//!
//! Parties never talk to a suite directly. They go through a [`Crypto`]
//! handle, which types the keys (so a MAC can only ever be taken over a
//! [`Ciphertext`]) and reports every call to the shared [`Probe`].

mod probe;
mod rng;
mod suite;

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

pub use probe::{KeyKind, Probe, ProbeCounters};
pub use rng::SimRng;
pub use suite::HashSuite;

use crate::types::{LengthError, Nonce, Party};

pub const HASH_LEN: usize = 32;
pub const MAC_LEN: usize = 32;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CryptoError {
    #[error(transparent)]
    Length(#[from] LengthError),
    #[error("ciphertext framing: {0}")]
    Framing(&'static str),
}

macro_rules! secret_bytes {
    ($(#[$meta:meta])* $name:ident, $len:expr, $what:expr) => {
        $(#[$meta])*
        #[derive(Clone, PartialEq, Eq, Hash)]
        pub struct $name([u8; $len]);

        impl $name {
            pub const LEN: usize = $len;

            pub fn new(bytes: [u8; $len]) -> Self {
                Self(bytes)
            }

            pub fn from_slice(bytes: &[u8]) -> Result<Self, LengthError> {
                bytes
                    .try_into()
                    .map(Self)
                    .map_err(|_| LengthError { what: $what, expected: $len, actual: bytes.len() })
            }

            pub fn as_bytes(&self) -> &[u8; $len] {
                &self.0
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, concat!(stringify!($name), "(..)"))
            }
        }
    };
}

secret_bytes!(
    /// K_i, shared by the SIM and the authentication centre only.
    SubscriberKey,
    16,
    "subscriber key"
);
secret_bytes!(
    /// K_c, output of A8.
    SessionKey,
    8,
    "session key"
);
secret_bytes!(
    /// K_c1 = H(K_c), used only for the transaction MAC.
    MacKey,
    32,
    "mac key"
);
secret_bytes!(
    /// K_c2 = H(K_c1), the encryption key the terminal is allowed to hold.
    EncryptionKey,
    32,
    "encryption key"
);
secret_bytes!(
    /// K_p, the long-term key between a registered shop and the MNO.
    ShopKey,
    32,
    "shop key"
);

/// S, output of A3.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SignedResponse(pub [u8; 4]);

/// Anything usable as a symmetric encryption key.
pub trait CipherKey {
    fn key_bytes(&self) -> &[u8];
}

macro_rules! cipher_key {
    ($($name:ident),*) => {$(
        impl CipherKey for $name {
            fn key_bytes(&self) -> &[u8] {
                &self.0
            }
        }
    )*};
}
cipher_key!(SessionKey, EncryptionKey, ShopKey);

/// Per-transaction keys derived from one K_c.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct KeySet {
    pub k_c: SessionKey,
    pub k_c1: MacKey,
    pub k_c2: EncryptionKey,
}

/// (R, S, K_c) generated for exactly one authentication attempt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuthTriplet {
    pub r: Nonce,
    pub s: SignedResponse,
    pub k_c: SessionKey,
}

/// Output of [`CryptoSuite::encrypt`]. Only values of this type can be MACed.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Ciphertext(Vec<u8>);

impl Ciphertext {
    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.0
    }
}

/// Bytes taken off the wire claim to be ciphertext; decryption decides.
impl From<Vec<u8>> for Ciphertext {
    fn from(bytes: Vec<u8>) -> Self {
        Self(bytes)
    }
}

impl fmt::Debug for Ciphertext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Ciphertext[{}]", self.0.len())
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct MacTag(pub [u8; MAC_LEN]);

impl fmt::Debug for MacTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "MacTag({})", hex::encode(&self.0[..4]))
    }
}

#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct Signature(pub Vec<u8>);

impl fmt::Debug for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Signature[{}]", self.0.len())
    }
}

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct VerifyingKey(pub Vec<u8>);

impl fmt::Debug for VerifyingKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "VerifyingKey({})", hex::encode(&self.0))
    }
}

#[derive(Clone)]
pub struct SignatureKeyPair {
    signing_key: Vec<u8>,
    verifying_key: VerifyingKey,
    owner: Party,
}

impl SignatureKeyPair {
    pub fn new(signing_key: Vec<u8>, verifying_key: VerifyingKey, owner: Party) -> Self {
        Self {
            signing_key,
            verifying_key,
            owner,
        }
    }

    pub fn signing_key(&self) -> &[u8] {
        &self.signing_key
    }

    pub fn verifying_key(&self) -> &VerifyingKey {
        &self.verifying_key
    }

    pub fn owner(&self) -> Party {
        self.owner
    }
}

impl fmt::Debug for SignatureKeyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SignatureKeyPair")
            .field("verifying_key", &self.verifying_key)
            .field("owner", &self.owner)
            .finish_non_exhaustive()
    }
}

/// The primitives the protocol needs, over raw byte strings.
///
/// Implementations must be pure: identical inputs give identical outputs and
/// no call depends on earlier calls.
pub trait CryptoSuite: Send + Sync {
    fn name(&self) -> &'static str;

    fn hash(&self, data: &[u8]) -> [u8; HASH_LEN];

    /// A3: signed response S from (K_i, R).
    fn a3(&self, k_i: &[u8], r: &[u8]) -> Result<SignedResponse, CryptoError>;

    /// A8: session key K_c from (K_i, R).
    fn a8(&self, k_i: &[u8], r: &[u8]) -> Result<SessionKey, CryptoError>;

    fn encrypt(&self, key: &[u8], plaintext: &[u8]) -> Result<Vec<u8>, CryptoError>;

    /// Decryption under the wrong key is not an error: it yields unrelated
    /// bytes, and callers compare contents.
    fn decrypt(&self, key: &[u8], ciphertext: &[u8]) -> Result<Vec<u8>, CryptoError>;

    fn mac(&self, key: &[u8], data: &[u8]) -> Result<MacTag, CryptoError>;

    fn verify_mac(&self, key: &[u8], data: &[u8], tag: &[u8]) -> bool;

    fn keypair_from_seed(&self, seed: &[u8; 32], owner: Party) -> SignatureKeyPair;

    fn sign(&self, keypair: &SignatureKeyPair, data: &[u8]) -> Signature;

    fn verify_sig(&self, verifying_key: &[u8], data: &[u8], signature: &[u8]) -> bool;

    /// K_c1 = H(K_c), K_c2 = H(K_c1).
    fn derive_key_chain(&self, k_c: &SessionKey) -> KeySet {
        let k_c1 = self.hash(k_c.as_bytes());
        let k_c2 = self.hash(&k_c1);
        KeySet {
            k_c: k_c.clone(),
            k_c1: MacKey::new(k_c1),
            k_c2: EncryptionKey::new(k_c2),
        }
    }
}

/// A party's typed, instrumented view of the suite.
#[derive(Clone)]
pub struct Crypto {
    suite: Arc<dyn CryptoSuite>,
    probe: Probe,
    party: Party,
}

impl fmt::Debug for Crypto {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Crypto")
            .field("suite", &self.suite.name())
            .field("party", &self.party)
            .finish()
    }
}

impl Crypto {
    pub fn new(suite: Arc<dyn CryptoSuite>, probe: Probe, party: Party) -> Self {
        Self { suite, probe, party }
    }

    /// Built-in suite with a fresh probe.
    pub fn hash_suite(party: Party) -> Self {
        Self::new(Arc::new(HashSuite), Probe::default(), party)
    }

    pub fn for_party(&self, party: Party) -> Self {
        Self {
            suite: Arc::clone(&self.suite),
            probe: self.probe.clone(),
            party,
        }
    }

    pub fn suite(&self) -> &dyn CryptoSuite {
        self.suite.as_ref()
    }

    pub fn probe(&self) -> &Probe {
        &self.probe
    }

    pub fn party(&self) -> Party {
        self.party
    }

    /// Records that this party now holds `material` of the given kind.
    pub fn hold(&self, kind: KeyKind, material: &[u8]) {
        self.probe.hold(self.party, kind, material);
    }

    pub fn a3(&self, k_i: &SubscriberKey, r: &Nonce) -> Result<SignedResponse, CryptoError> {
        self.suite.a3(k_i.as_bytes(), r.as_bytes())
    }

    pub fn a8(&self, k_i: &SubscriberKey, r: &Nonce) -> Result<SessionKey, CryptoError> {
        self.suite.a8(k_i.as_bytes(), r.as_bytes())
    }

    pub fn key_chain(&self, k_c: &SessionKey) -> KeySet {
        self.suite.derive_key_chain(k_c)
    }

    pub fn encrypt(&self, key: &impl CipherKey, plaintext: &[u8]) -> Result<Ciphertext, CryptoError> {
        let ct = self.suite.encrypt(key.key_bytes(), plaintext)?;
        self.probe.note_encrypt(&ct);
        Ok(Ciphertext(ct))
    }

    pub fn decrypt(&self, key: &impl CipherKey, ciphertext: &Ciphertext) -> Result<Vec<u8>, CryptoError> {
        self.probe.note_decrypt(self.party, key.key_bytes());
        self.suite.decrypt(key.key_bytes(), ciphertext.as_bytes())
    }

    pub fn mac(&self, key: &MacKey, ciphertext: &Ciphertext) -> Result<MacTag, CryptoError> {
        self.probe.note_mac(self.party, ciphertext.as_bytes());
        self.suite.mac(key.as_bytes(), ciphertext.as_bytes())
    }

    pub fn verify_mac(&self, key: &MacKey, ciphertext: &Ciphertext, tag: &MacTag) -> bool {
        self.probe.note_verify_mac(self.party);
        self.suite.verify_mac(key.as_bytes(), ciphertext.as_bytes(), &tag.0)
    }

    pub fn keypair_from_seed(&self, seed: &[u8; 32]) -> SignatureKeyPair {
        self.suite.keypair_from_seed(seed, self.party)
    }

    pub fn sign(&self, keypair: &SignatureKeyPair, data: &[u8]) -> Signature {
        self.suite.sign(keypair, data)
    }

    pub fn verify_sig(&self, key: &VerifyingKey, data: &[u8], signature: &Signature) -> bool {
        self.suite.verify_sig(&key.0, data, &signature.0)
    }
}
