use serde::Serialize;

use crate::types::{Imsi, Millis, Pence, TxnSerial};

/// One executed transaction: the subscriber's wallet is debited and the
/// shop's bank account credited with the same amount.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LedgerEntry {
    pub txn_serial: TxnSerial,
    pub debit_account: Imsi,
    pub credit_account: String,
    pub amount: Pence,
    pub ts_tr: Millis,
}

/// Append-only transaction log.
#[derive(Debug, Clone, Default)]
pub struct Ledger {
    entries: Vec<LedgerEntry>,
}

impl Ledger {
    pub(crate) fn append(&mut self, entry: LedgerEntry) {
        self.entries.push(entry);
    }

    pub fn entries(&self) -> &[LedgerEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn debits_from(&self, imsi: &Imsi) -> Pence {
        self.entries
            .iter()
            .filter(|e| &e.debit_account == imsi)
            .map(|e| e.amount)
            .sum()
    }

    pub fn credits_to(&self, account: &str) -> Pence {
        self.entries
            .iter()
            .filter(|e| e.credit_account == account)
            .map(|e| e.amount)
            .sum()
    }

    pub fn total(&self) -> Pence {
        self.entries.iter().map(|e| e.amount).sum()
    }
}
