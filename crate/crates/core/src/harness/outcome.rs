use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;

use crate::crypto::KeyKind;
use crate::mno::LedgerEntry;
use crate::types::{Pence, Step};

/// How one session (an honest purchase or an attack attempt) ended.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "verdict", rename_all = "kebab-case")]
pub enum Verdict {
    Settled,
    Aborted {
        step: Step,
        reason: String,
    },
    Dispute {
        step: Step,
    },
    /// Nothing terminal happened; only attack attempts end like this.
    Incomplete,
}

impl Verdict {
    pub fn is_settled(&self) -> bool {
        matches!(self, Verdict::Settled)
    }

    pub fn aborted_at(&self) -> Option<Step> {
        match self {
            Verdict::Aborted { step, .. } => Some(*step),
            _ => None,
        }
    }

    pub fn reason(&self) -> Option<&str> {
        match self {
            Verdict::Aborted { reason, .. } => Some(reason),
            _ => None,
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Settled => f.write_str("settled"),
            Verdict::Aborted { step, reason } => write!(f, "aborted at step {step}: {reason}"),
            Verdict::Dispute { step } => write!(f, "dispute at step {step}"),
            Verdict::Incomplete => f.write_str("incomplete"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SessionReport {
    pub label: String,
    #[serde(flatten)]
    pub verdict: Verdict,
    /// Agreed price for honest purchases.
    pub price: Option<Pence>,
    pub debited: Pence,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Assertion {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Assertion {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }

    pub fn eq<T: PartialEq + fmt::Debug>(name: impl Into<String>, actual: T, expected: T) -> Self {
        let passed = actual == expected;
        Self::new(name, passed, format!("expected {expected:?}, got {actual:?}"))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ScenarioOutcome {
    pub scenario: String,
    pub seed: u64,
    pub sessions: Vec<SessionReport>,
    pub ledger: Vec<LedgerEntry>,
    /// Final wallet balance per IMSI.
    pub balances: BTreeMap<String, Pence>,
    /// Total credited per bank reference.
    pub credits: BTreeMap<String, Pence>,
    /// Every kind of key any terminal held during the run.
    pub pos_keys: BTreeSet<KeyKind>,
    pub assertions: Vec<Assertion>,
}

impl ScenarioOutcome {
    pub fn passed(&self) -> bool {
        self.assertions.iter().all(|a| a.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Assertion> {
        self.assertions.iter().filter(|a| !a.passed)
    }

    pub fn session(&self, label: &str) -> Option<&SessionReport> {
        self.sessions.iter().find(|s| s.label == label)
    }

    pub fn assertion(&self, name: &str) -> Option<&Assertion> {
        self.assertions.iter().find(|a| a.name == name)
    }
}
