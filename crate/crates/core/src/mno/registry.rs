use crate::crypto::{ShopKey, SubscriberKey, VerifyingKey};
use crate::types::{Imsi, Pence, ShopId, Tmsi};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubscriberStatus {
    Active,
    Suspended,
}

#[derive(Debug, Clone)]
pub struct SubscriberRecord {
    pub imsi: Imsi,
    pub tmsi: Tmsi,
    pub(crate) k_i: SubscriberKey,
    /// Counter value of the last executed transaction.
    pub tc_expected: u64,
    pub balance: Pence,
    pub status: SubscriberStatus,
}

#[derive(Debug, Clone)]
pub struct ShopRecord {
    pub shop_id: ShopId,
    pub(crate) k_p: ShopKey,
    pub bank_ref: String,
    pub verifying_key: VerifyingKey,
}

/// Returned by shop registration; the only place K_p is ever handed out.
#[derive(Debug)]
pub struct ShopRegistration {
    pub record: ShopRecord,
    pub k_p: ShopKey,
}
