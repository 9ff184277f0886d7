//! Sequential identifiers for hypotheses and trajectory nodes.
//!
//! Both serialize as their display form (`hyp_3`, `node_12`) so the JSON
//! documents stay readable, but compare and sort by the numeric suffix.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid {kind} identifier {raw:?}")]
pub struct IdParseError {
    pub kind: &'static str,
    pub raw: String,
}

macro_rules! sequential_id {
    ($name:ident, $prefix:literal, $kind:literal) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub struct $name(pub u32);

        impl $name {
            pub const PREFIX: &'static str = $prefix;

            pub fn index(self) -> u32 {
                self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}{}", $prefix, self.0)
            }
        }

        impl FromStr for $name {
            type Err = IdParseError;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                s.strip_prefix($prefix)
                    .filter(|rest| !rest.is_empty() && rest.bytes().all(|b| b.is_ascii_digit()))
                    .and_then(|rest| rest.parse::<u32>().ok())
                    .map($name)
                    .ok_or_else(|| IdParseError {
                        kind: $kind,
                        raw: s.to_string(),
                    })
            }
        }

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
                serializer.collect_str(self)
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
                let raw = String::deserialize(deserializer)?;
                raw.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

sequential_id!(HypId, "hyp_", "hypothesis");
sequential_id!(NodeId, "node_", "node");

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn display_and_parse_agree() {
        assert_eq!(HypId(7).to_string(), "hyp_7");
        assert_eq!("node_12".parse::<NodeId>().unwrap(), NodeId(12));
        assert!("hyp_".parse::<HypId>().is_err());
        assert!("hyp_-1".parse::<HypId>().is_err());
        assert!("node_3".parse::<HypId>().is_err());
    }

    #[test]
    fn ordering_is_numeric() {
        let mut ids = vec![HypId(10), HypId(2), HypId(1)];
        ids.sort();
        assert_eq!(ids, vec![HypId(1), HypId(2), HypId(10)]);
    }

    #[test]
    fn serde_uses_display_form() {
        let json = serde_json::to_string(&NodeId(4)).unwrap();
        assert_eq!(json, "\"node_4\"");
        let back: NodeId = serde_json::from_str(&json).unwrap();
        assert_eq!(back, NodeId(4));
    }
}
