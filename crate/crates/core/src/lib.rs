//! Cloud-wallet NFC payment protocol.
//!
//! Three party state machines (the customer's handset and SIM, the shop's
//! point-of-sale terminal, and the mobile network operator acting as
//! authentication centre and wallet) exchange the messages of the payment
//! flow over a deterministic simulated transport. The [`harness`] wires them
//! together, lets an on-path adversary record, replay, tamper with and drop
//! frames, and ships the attack scenarios the protocol is meant to resist.
//! The [`store`] module persists transcripts as JSON lines and verifies them
//! offline.

pub mod codec;
pub mod crypto;
pub mod harness;
pub mod mno;
pub mod mobile;
pub mod pos;
pub mod store;
pub mod types;

pub use codec::{decode, encode, DecodeError, Message};
pub use crypto::{Crypto, CryptoSuite, HashSuite, KeySet, Probe};
pub use types::{Lai, Nonce, Party, Plmn, ShopId, Step, Tmsi};
