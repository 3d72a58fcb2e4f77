//! Identifiers and scalar values shared by every party.
//!
//! Money is always an integer count of minor currency units (pence) and
//! time is always simulated milliseconds; neither is ever a float.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Simulated clock reading, milliseconds since the start of a run.
pub type Millis = u64;

/// Minor currency units.
pub type Pence = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("{what}: expected {expected} bytes, got {actual}")]
pub struct LengthError {
    pub what: &'static str,
    pub expected: usize,
    pub actual: usize,
}

fn fixed<const N: usize>(what: &'static str, bytes: &[u8]) -> Result<[u8; N], LengthError> {
    bytes.try_into().map_err(|_| LengthError {
        what,
        expected: N,
        actual: bytes.len(),
    })
}

macro_rules! byte_id {
    ($(#[$meta:meta])* $name:ident, $len:expr, $what:expr) => {
        $(#[$meta])*
        #[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub struct $name(pub [u8; $len]);

        impl $name {
            pub const LEN: usize = $len;

            pub fn from_slice(bytes: &[u8]) -> Result<Self, LengthError> {
                fixed::<$len>($what, bytes).map(Self)
            }

            pub fn as_bytes(&self) -> &[u8; $len] {
                &self.0
            }

            pub fn from_hex(s: &str) -> Result<Self, String> {
                let raw = hex::decode(s).map_err(|e| format!("{}: {e}", $what))?;
                Self::from_slice(&raw).map_err(|e| e.to_string())
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&hex::encode(self.0))
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}({})", stringify!($name), hex::encode(self.0))
            }
        }

        impl Serialize for $name {
            fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.serialize_str(&hex::encode(self.0))
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                Self::from_hex(&s).map_err(serde::de::Error::custom)
            }
        }
    };
}

byte_id!(
    /// 128-bit random value: the MNO challenge R or the SIM nonce R_s.
    Nonce,
    16,
    "nonce"
);
byte_id!(
    /// Temporary subscriber identity; the only identity sent over the air.
    Tmsi,
    4,
    "tmsi"
);
byte_id!(
    /// Permanent subscriber identity. Never leaves the SIM or the MNO.
    Imsi,
    8,
    "imsi"
);
byte_id!(
    /// Shop identifier registered with the MNO.
    ShopId,
    4,
    "shop id"
);

impl Nonce {
    /// `self ‖ other`, the plaintext layout of the authentication messages.
    pub fn concat(&self, other: &Nonce) -> [u8; 32] {
        let mut out = [0u8; 32];
        out[..16].copy_from_slice(&self.0);
        out[16..].copy_from_slice(&other.0);
        out
    }

    /// Inverse of [`Nonce::concat`].
    pub fn split_pair(bytes: &[u8]) -> Result<(Nonce, Nonce), LengthError> {
        let pair: [u8; 32] = fixed("nonce pair", bytes)?;
        let mut a = [0u8; 16];
        let mut b = [0u8; 16];
        a.copy_from_slice(&pair[..16]);
        b.copy_from_slice(&pair[16..]);
        Ok((Nonce(a), Nonce(b)))
    }
}

/// Mobile network code; two- and three-digit codes are distinct values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Plmn {
    pub mcc: u16,
    pub mnc: u16,
    pub mnc_three_digits: bool,
}

impl Plmn {
    pub fn new(mcc: u16, mnc: u16, mnc_three_digits: bool) -> Option<Self> {
        let mnc_max = if mnc_three_digits { 999 } else { 99 };
        (mcc <= 999 && mnc <= mnc_max).then_some(Self {
            mcc,
            mnc,
            mnc_three_digits,
        })
    }

    /// Parses `"234-15"` or `"310-260"`.
    pub fn parse(s: &str) -> Option<Self> {
        let (mcc, mnc) = s.split_once('-')?;
        if mcc.len() != 3 || !(mnc.len() == 2 || mnc.len() == 3) {
            return None;
        }
        Self::new(mcc.parse().ok()?, mnc.parse().ok()?, mnc.len() == 3)
    }
}

impl fmt::Display for Plmn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.mnc_three_digits {
            write!(f, "{:03}-{:03}", self.mcc, self.mnc)
        } else {
            write!(f, "{:03}-{:02}", self.mcc, self.mnc)
        }
    }
}

/// Location area identifier: network code plus a 16-bit location area code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Lai {
    pub plmn: Plmn,
    pub lac: u16,
}

impl fmt::Display for Lai {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{:04x}", self.plmn, self.lac)
    }
}

/// Receipt number, generated sequentially by each terminal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ReceiptNo(pub u64);

/// Serial number of an executed transaction, issued by the MNO.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TxnSerial(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Party {
    Mobile,
    Pos,
    Mno,
}

impl fmt::Display for Party {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Party::Mobile => "mobile",
            Party::Pos => "pos",
            Party::Mno => "mno",
        })
    }
}

/// The two kinds of link in the simulated network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Link {
    /// Mobile to terminal.
    Nfc,
    /// Terminal to MNO.
    Backhaul,
}

/// One direction of one link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Hop {
    #[serde(rename = "pos->mobile")]
    PosToMobile,
    #[serde(rename = "mobile->pos")]
    MobileToPos,
    #[serde(rename = "pos->mno")]
    PosToMno,
    #[serde(rename = "mno->pos")]
    MnoToPos,
}

impl Hop {
    pub const ALL: [Hop; 4] = [Hop::PosToMobile, Hop::MobileToPos, Hop::PosToMno, Hop::MnoToPos];

    pub fn link(self) -> Link {
        match self {
            Hop::PosToMobile | Hop::MobileToPos => Link::Nfc,
            Hop::PosToMno | Hop::MnoToPos => Link::Backhaul,
        }
    }

    pub fn destination(self) -> Party {
        match self {
            Hop::PosToMobile => Party::Mobile,
            Hop::MobileToPos | Hop::MnoToPos => Party::Pos,
            Hop::PosToMno => Party::Mno,
        }
    }

    /// The hop a reply to a frame on this hop travels on.
    pub fn reverse(self) -> Hop {
        match self {
            Hop::PosToMobile => Hop::MobileToPos,
            Hop::MobileToPos => Hop::PosToMobile,
            Hop::PosToMno => Hop::MnoToPos,
            Hop::MnoToPos => Hop::PosToMno,
        }
    }
}

impl fmt::Display for Hop {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Hop::PosToMobile => "pos->mobile",
            Hop::MobileToPos => "mobile->pos",
            Hop::PosToMno => "pos->mno",
            Hop::MnoToPos => "mno->pos",
        })
    }
}

/// Position in the 26-step payment flow. Outcomes and transcript records are
/// labelled with these so a halted run names the step it stopped at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Step {
    IdRequest,
    IdResponse,
    AuthForward,
    Declined,
    Challenge,
    AuthResponse,
    MnoVerify,
    MobileVerify,
    KeyDelivery,
    PriceOffer,
    PinEntry,
    Payment,
    PosVerify,
    Execute,
    Result,
    Settle,
    Bundle,
    CustomerVerify,
}

impl Step {
    pub const ALL: [Step; 18] = [
        Step::IdRequest,
        Step::IdResponse,
        Step::AuthForward,
        Step::Declined,
        Step::Challenge,
        Step::AuthResponse,
        Step::MnoVerify,
        Step::MobileVerify,
        Step::KeyDelivery,
        Step::PriceOffer,
        Step::PinEntry,
        Step::Payment,
        Step::PosVerify,
        Step::Execute,
        Step::Result,
        Step::Settle,
        Step::Bundle,
        Step::CustomerVerify,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Step::IdRequest => "1",
            Step::IdResponse => "2-3",
            Step::AuthForward => "4-5",
            Step::Declined => "5.1",
            Step::Challenge => "6",
            Step::AuthResponse => "7-8",
            Step::MnoVerify => "9-10",
            Step::MobileVerify => "11-12",
            Step::KeyDelivery => "13-14",
            Step::PriceOffer => "15",
            Step::PinEntry => "16-17",
            Step::Payment => "18-19",
            Step::PosVerify => "20-21",
            Step::Execute => "22",
            Step::Result => "23",
            Step::Settle => "24",
            Step::Bundle => "25",
            Step::CustomerVerify => "26",
        }
    }

    pub fn from_label(label: &str) -> Option<Step> {
        Step::ALL.into_iter().find(|s| s.label() == label)
    }
}

impl fmt::Display for Step {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl Serialize for Step {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.label())
    }
}

impl<'de> Deserialize<'de> for Step {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let label = String::deserialize(d)?;
        Step::from_label(&label).ok_or_else(|| serde::de::Error::custom(format!("unknown step {label:?}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plmn_parse_keeps_digit_count() {
        let two = Plmn::parse("234-15").unwrap();
        let three = Plmn::parse("234-015").unwrap();
        assert_ne!(two, three);
        assert_eq!(two.to_string(), "234-15");
        assert_eq!(three.to_string(), "234-015");
        assert!(Plmn::parse("23-15").is_none());
        assert!(Plmn::parse("234-1000").is_none());
    }

    #[test]
    fn step_labels_round_trip() {
        for step in Step::ALL {
            assert_eq!(Step::from_label(step.label()), Some(step));
        }
    }

    #[test]
    fn nonce_wrong_length() {
        let err = Nonce::from_slice(&[0u8; 15]).unwrap_err();
        assert_eq!(err.expected, 16);
        assert_eq!(err.actual, 15);
    }
}
