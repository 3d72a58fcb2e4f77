//! JSON-lines transcript. Every record carries a sequence number and a
//! digest chained over all earlier records, so an edit anywhere shows up at
//! the first edited line.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::types::{Hop, Link, Millis, Pence, Step};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RecordBody {
    Header {
        scenario: String,
        seed: u64,
        suite: String,
        /// SHA-256 of the config the run was made with, as canonical TOML.
        config_digest: String,
    },
    /// One frame crossing a link.
    Message {
        time_ms: Millis,
        link: Link,
        direction: Hop,
        channel: u64,
        /// Absent when the frame does not decode.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        step: Option<Step>,
        raw: String,
        summary: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        adversary: Option<String>,
        /// Hex of the frame as its honest sender emitted it, when the
        /// adversary delivered something else.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        original: Option<String>,
    },
    LinkState {
        time_ms: Millis,
        link: Link,
        up: bool,
    },
    Ledger {
        txn_serial: u64,
        debit: String,
        credit: String,
        amount: Pence,
        ts_tr: Millis,
    },
    Balances {
        subscribers: BTreeMap<String, Pence>,
        credits: BTreeMap<String, Pence>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Record {
    pub seq: u64,
    #[serde(flatten)]
    pub body: RecordBody,
    pub digest: String,
}

#[derive(Serialize)]
struct Unsealed<'a> {
    seq: u64,
    #[serde(flatten)]
    body: &'a RecordBody,
}

/// Digest of the empty chain.
pub const GENESIS: &str = "0000000000000000000000000000000000000000000000000000000000000000";

/// SHA-256 over the previous digest and the record's JSON without its own digest.
pub fn chain_digest(prev: &str, seq: u64, body: &RecordBody) -> String {
    let json = serde_json::to_string(&Unsealed { seq, body }).expect("record serializes");
    let mut h = Sha256::new();
    h.update(prev.as_bytes());
    h.update(json.as_bytes());
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Transcript {
    records: Vec<Record>,
}

impl Transcript {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, body: RecordBody) -> u64 {
        let seq = self.records.len() as u64;
        let prev = self.records.last().map_or(GENESIS, |r| r.digest.as_str());
        let digest = chain_digest(prev, seq, &body);
        self.records.push(Record { seq, body, digest });
        seq
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn messages(&self) -> impl Iterator<Item = &Record> {
        self.records
            .iter()
            .filter(|r| matches!(r.body, RecordBody::Message { .. }))
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("record serializes"));
            out.push('\n');
        }
        out
    }
}

/// Parses JSON lines; on failure returns the 0-based line number.
pub fn parse_jsonl(text: &str) -> Result<Vec<Record>, (usize, serde_json::Error)> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| (i, e)))
        .collect()
}
