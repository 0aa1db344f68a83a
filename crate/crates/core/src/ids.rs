//! Identifier newtypes. Each renders with a fixed prefix (`REQ-0001`, `C2`, ...)
//! and serializes as that string.

use alloc::format;
use alloc::string::String;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::Error;

macro_rules! prefixed_id {
    ($(#[$meta:meta])* $name:ident, $prefix:literal, $width:literal, $kind:literal) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub struct $name(u32);

        impl $name {
            pub const fn new(n: u32) -> Self {
                $name(n)
            }

            pub const fn number(self) -> u32 {
                self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, concat!($prefix, "{:0", $width, "}"), self.0)
            }
        }

        impl FromStr for $name {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                let invalid = || Error::InvalidId { kind: $kind, value: s.into() };
                let digits = s.strip_prefix($prefix).ok_or_else(invalid)?;
                if digits.is_empty()
                    || ($width > 0 && digits.len() != $width)
                    || !digits.bytes().all(|b| b.is_ascii_digit())
                {
                    return Err(invalid());
                }
                digits.parse().map($name).map_err(|_| invalid())
            }
        }

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
                serializer.collect_str(self)
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
                let s = String::deserialize(deserializer)?;
                s.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

prefixed_id!(
    /// One traversal of the loop: `C1`, `C2`, ...
    CycleId, "C", 0, "cycle"
);
prefixed_id!(
    /// `REQ-\d{4}`.
    RequirementId, "REQ-", 4, "requirement"
);
prefixed_id!(ChangeRequestId, "CR-", 4, "change request");
prefixed_id!(FindingId, "RT-", 4, "finding");
prefixed_id!(RiskId, "RISK-", 4, "risk");

impl CycleId {
    pub const FIRST: CycleId = CycleId(1);

    pub const fn next(self) -> CycleId {
        CycleId(self.0 + 1)
    }
}

/// Agent session identifier, `S-<cycle>-<nn>`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SessionId(String);

impl SessionId {
    pub fn for_cycle(cycle: CycleId, seq: usize) -> Self {
        SessionId(format!("S-{cycle}-{seq:02}"))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl FromStr for SessionId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let ok = !s.is_empty()
            && s.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'_');
        if ok {
            Ok(SessionId(s.into()))
        } else {
            Err(Error::InvalidId { kind: "session", value: s.into() })
        }
    }
}

impl fmt::Display for SessionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}
