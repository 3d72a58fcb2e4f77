//! Scenario configuration: one TOML file describing the network, its
//! subscribers and shops, the scripted purchases and policy overrides.
//! Secrets are hex strings.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{LineItem, ShoppingDetails};
use crate::mno::{DEFAULT_CAP, DEFAULT_TS_WINDOW_MS};
use crate::mobile::MAX_PIN_RETRIES;
use crate::types::{Imsi, Millis, Pence, Plmn, ShopId};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub scenario: Option<String>,
    pub network: NetworkConfig,
    #[serde(default)]
    pub policy: PolicyConfig,
    pub subscribers: Vec<SubscriberConfig>,
    pub shops: Vec<ShopConfig>,
    pub purchases: Vec<PurchaseConfig>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    /// "MCC-MNC", e.g. "234-15".
    pub plmn: String,
    #[serde(default = "default_lac")]
    pub lac: u16,
    #[serde(default = "default_mno_name")]
    pub name: String,
    /// 32-byte Ed25519 seed.
    pub mno_signing_key: String,
}

fn default_lac() -> u16 {
    1
}

fn default_mno_name() -> String {
    "home-mno".to_owned()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PolicyConfig {
    pub ts_window_ms: Millis,
    /// Terminal-side window for TS_U; defaults to the MNO's.
    pub pos_window_ms: Option<Millis>,
    pub cap: Pence,
    pub pin_retries: u8,
    pub hop_ms: Millis,
    pub user_delay_ms: Millis,
    pub rotate_tmsi: bool,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            ts_window_ms: DEFAULT_TS_WINDOW_MS,
            pos_window_ms: None,
            cap: DEFAULT_CAP,
            pin_retries: MAX_PIN_RETRIES,
            hop_ms: 10,
            user_delay_ms: 1_500,
            rotate_tmsi: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubscriberConfig {
    /// 8 bytes, hex.
    pub imsi: String,
    /// 16 bytes, hex.
    pub k_i: String,
    pub pin: String,
    pub balance: Pence,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShopConfig {
    /// 4 bytes, hex.
    pub shop_id: String,
    pub bank_ref: String,
    /// 32-byte Ed25519 seed.
    pub signing_key: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Consent {
    #[default]
    Agree,
    Decline,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PurchaseConfig {
    /// IMSI of the paying subscriber.
    pub subscriber: String,
    /// Shop ID of the terminal.
    pub shop: String,
    pub items: Vec<LineItem>,
    /// If present, must equal the sum of the item prices.
    #[serde(default)]
    pub total: Option<Pence>,
    #[serde(default)]
    pub consent: Consent,
    /// PINs typed in order; defaults to the subscriber's PIN.
    #[serde(default)]
    pub pin_attempts: Option<Vec<String>>,
}

fn hex_array<const N: usize>(what: &str, s: &str) -> Result<[u8; N], ConfigError> {
    let raw = hex::decode(s).map_err(|e| invalid(format!("{what}: {e}")))?;
    raw.try_into()
        .map_err(|v: Vec<u8>| invalid(format!("{what}: expected {N} bytes, got {}", v.len())))
}

/// A subscriber with its fields parsed.
#[derive(Debug, Clone)]
pub struct Subscriber {
    pub imsi: Imsi,
    pub k_i: [u8; 16],
    pub pin: String,
    pub balance: Pence,
}

#[derive(Debug, Clone)]
pub struct Shop {
    pub shop_id: ShopId,
    pub bank_ref: String,
    pub signing_seed: [u8; 32],
}

#[derive(Debug, Clone)]
pub struct Purchase {
    pub subscriber: usize,
    pub shop: usize,
    pub details: ShoppingDetails,
    pub consent: Consent,
    pub pin_attempts: Vec<String>,
}

/// A validated config.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub plmn: Plmn,
    pub lac: u16,
    pub mno_name: String,
    pub mno_signing_seed: [u8; 32],
    pub policy: PolicyConfig,
    pub subscribers: Vec<Subscriber>,
    pub shops: Vec<Shop>,
    pub purchases: Vec<Purchase>,
}

impl ScenarioConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let config: Self = toml::from_str(text)?;
        config.resolve()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Checks every field and cross-reference.
    pub fn resolve(&self) -> Result<Resolved, ConfigError> {
        let plmn = Plmn::parse(&self.network.plmn)
            .ok_or_else(|| invalid(format!("network.plmn {:?} is not MCC-MNC", self.network.plmn)))?;
        let p = &self.policy;
        if p.ts_window_ms == 0 || p.pos_window_ms == Some(0) {
            return Err(invalid("time windows must be positive"));
        }
        if p.cap == 0 {
            return Err(invalid("policy.cap must be positive"));
        }
        if !(1..=MAX_PIN_RETRIES).contains(&p.pin_retries) {
            return Err(invalid(format!("policy.pin_retries must be 1..={MAX_PIN_RETRIES}")));
        }
        if p.hop_ms == 0 {
            return Err(invalid("policy.hop_ms must be positive"));
        }

        let mut subscribers = Vec::new();
        for s in &self.subscribers {
            let imsi = Imsi::from_hex(&s.imsi).map_err(|e| invalid(format!("subscriber imsi: {e}")))?;
            if subscribers.iter().any(|x: &Subscriber| x.imsi == imsi) {
                return Err(invalid(format!("duplicate subscriber {imsi}")));
            }
            if !(4..=6).contains(&s.pin.len()) || !s.pin.bytes().all(|b| b.is_ascii_digit()) {
                return Err(invalid(format!("subscriber {imsi}: pin must be 4 to 6 digits")));
            }
            subscribers.push(Subscriber {
                imsi,
                k_i: hex_array(&format!("subscriber {imsi} k_i"), &s.k_i)?,
                pin: s.pin.clone(),
                balance: s.balance,
            });
        }
        let mut shops = Vec::new();
        for s in &self.shops {
            let shop_id = ShopId::from_hex(&s.shop_id).map_err(|e| invalid(format!("shop_id: {e}")))?;
            if shops.iter().any(|x: &Shop| x.shop_id == shop_id) {
                return Err(invalid(format!("duplicate shop {shop_id}")));
            }
            if s.bank_ref.is_empty() {
                return Err(invalid(format!("shop {shop_id}: empty bank_ref")));
            }
            shops.push(Shop {
                shop_id,
                bank_ref: s.bank_ref.clone(),
                signing_seed: hex_array(&format!("shop {shop_id} signing_key"), &s.signing_key)?,
            });
        }
        let banks: BTreeSet<_> = shops.iter().map(|s| &s.bank_ref).collect();
        if banks.len() != shops.len() {
            return Err(invalid("shops must have distinct bank_ref values"));
        }

        let mut purchases = Vec::new();
        for (i, p) in self.purchases.iter().enumerate() {
            let subscriber = subscribers
                .iter()
                .position(|s| s.imsi.to_string() == p.subscriber.to_ascii_lowercase())
                .ok_or_else(|| invalid(format!("purchase {i}: unknown subscriber {}", p.subscriber)))?;
            let shop = shops
                .iter()
                .position(|s| s.shop_id.to_string() == p.shop.to_ascii_lowercase())
                .ok_or_else(|| invalid(format!("purchase {i}: unknown shop {}", p.shop)))?;
            if p.items.iter().any(|item| item.price == 0) {
                return Err(invalid(format!("purchase {i}: prices must be positive")));
            }
            let details = ShoppingDetails::from_items(p.items.clone())
                .filter(|d| d.total > 0)
                .ok_or_else(|| invalid(format!("purchase {i}: total must be positive and fit 64 bits")))?;
            if p.total.is_some_and(|t| t != details.total) {
                return Err(invalid(format!(
                    "purchase {i}: total {} does not match items ({})",
                    p.total.unwrap_or_default(),
                    details.total
                )));
            }
            let pin_attempts = p
                .pin_attempts
                .clone()
                .unwrap_or_else(|| vec![subscribers[subscriber].pin.clone()]);
            if p.consent == Consent::Agree && pin_attempts.is_empty() {
                return Err(invalid(format!("purchase {i}: no pin attempts")));
            }
            purchases.push(Purchase {
                subscriber,
                shop,
                details,
                consent: p.consent,
                pin_attempts,
            });
        }
        if subscribers.is_empty() || shops.is_empty() || purchases.is_empty() {
            return Err(invalid("need at least one subscriber, shop and purchase"));
        }

        Ok(Resolved {
            plmn,
            lac: self.network.lac,
            mno_name: self.network.name.clone(),
            mno_signing_seed: hex_array("network.mno_signing_key", &self.network.mno_signing_key)?,
            policy: self.policy.clone(),
            subscribers,
            shops,
            purchases,
        })
    }
}

/// The configuration shipped as `configs/demo.toml`.
pub const DEMO_CONFIG: &str = include_str!("../../../../configs/demo.toml");

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn demo_config_resolves() {
        let c = ScenarioConfig::parse(DEMO_CONFIG).unwrap();
        let r = c.resolve().unwrap();
        assert!(!r.purchases.is_empty());
        assert_eq!(ScenarioConfig::parse(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn rejects_bad_references_and_values() {
        let base = ScenarioConfig::parse(DEMO_CONFIG).unwrap();
        let mut c = base.clone();
        c.purchases[0].shop = "ffffffff".into();
        assert!(c.resolve().is_err());

        let mut c = base.clone();
        c.purchases[0].total = Some(1);
        assert!(c.resolve().is_err());

        let mut c = base.clone();
        c.policy.pin_retries = 4;
        assert!(c.resolve().is_err());

        let mut c = base.clone();
        c.subscribers[0].k_i = "abcd".into();
        assert!(c.resolve().is_err());

        let mut c = base;
        c.purchases[0].items[0].price = 0;
        assert!(c.resolve().is_err());

        assert!(ScenarioConfig::parse("seed = 1").is_err());
    }
}
