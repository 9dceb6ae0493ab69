use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Sieve alphabet: fragment, the five clear-cut intentions, and
/// intonation-dependent utterances. Codes 0..=6 in declaration order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum IntentLabel7 {
    Fragment,
    Statement,
    Question,
    Command,
    RhetoricalQ,
    RhetoricalC,
    IntoDepU,
}

/// Disambiguated alphabet: [`IntentLabel7`] without `IntoDepU`. Codes 0..=5.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum IntentLabel6 {
    Fragment,
    Statement,
    Question,
    Command,
    RhetoricalQ,
    RhetoricalC,
}

const NAMES: [&str; 7] = [
    "fragment",
    "statement",
    "question",
    "command",
    "rhetorical_question",
    "rhetorical_command",
    "intonation_dependent",
];

const SHORT: [&str; 7] = ["FR", "S", "Q", "C", "RQ", "RC", "IU"];

fn parse_code(s: &str, k: usize) -> Option<usize> {
    let t = s.trim().to_ascii_lowercase().replace(['-', ' '], "_");
    if let Ok(c) = t.parse::<usize>() {
        return (c < k).then_some(c);
    }
    let idx = match t.as_str() {
        "fragment" | "fr" => 0,
        "statement" | "s" => 1,
        "question" | "q" => 2,
        "command" | "c" => 3,
        "rhetorical_question" | "rhetoricalq" | "rhetorical_q" | "rq" => 4,
        "rhetorical_command" | "rhetoricalc" | "rhetorical_c" | "rc" => 5,
        "intonation_dependent" | "into_dep_u" | "intodepu" | "iu" => 6,
        _ => return None,
    };
    (idx < k).then_some(idx)
}

impl IntentLabel7 {
    pub const ALL: [IntentLabel7; 7] = [
        IntentLabel7::Fragment,
        IntentLabel7::Statement,
        IntentLabel7::Question,
        IntentLabel7::Command,
        IntentLabel7::RhetoricalQ,
        IntentLabel7::RhetoricalC,
        IntentLabel7::IntoDepU,
    ];

    pub fn code(self) -> usize {
        self as usize
    }

    pub fn from_code(code: usize) -> Option<Self> {
        Self::ALL.get(code).copied()
    }

    pub fn name(self) -> &'static str {
        NAMES[self.code()]
    }

    pub fn short(self) -> &'static str {
        SHORT[self.code()]
    }

    /// `None` for `IntoDepU`.
    pub fn to_six(self) -> Option<IntentLabel6> {
        IntentLabel6::from_code(self.code()).filter(|_| self != IntentLabel7::IntoDepU)
    }
}

impl IntentLabel6 {
    pub const ALL: [IntentLabel6; 6] = [
        IntentLabel6::Fragment,
        IntentLabel6::Statement,
        IntentLabel6::Question,
        IntentLabel6::Command,
        IntentLabel6::RhetoricalQ,
        IntentLabel6::RhetoricalC,
    ];

    pub fn code(self) -> usize {
        self as usize
    }

    pub fn from_code(code: usize) -> Option<Self> {
        Self::ALL.get(code).copied()
    }

    pub fn name(self) -> &'static str {
        NAMES[self.code()]
    }

    pub fn short(self) -> &'static str {
        SHORT[self.code()]
    }

    pub fn to_seven(self) -> IntentLabel7 {
        IntentLabel7::ALL[self.code()]
    }
}

impl FromStr for IntentLabel7 {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse_code(s, 7)
            .and_then(Self::from_code)
            .ok_or_else(|| Error::UnknownLabel {
                line: 0,
                label: s.to_string(),
            })
    }
}

impl FromStr for IntentLabel6 {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse_code(s, 6)
            .and_then(Self::from_code)
            .ok_or_else(|| Error::UnknownLabel {
                line: 0,
                label: s.to_string(),
            })
    }
}

impl fmt::Display for IntentLabel7 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl fmt::Display for IntentLabel6 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

macro_rules! serde_by_name {
    ($t:ty) => {
        impl Serialize for $t {
            fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
                s.serialize_str(self.name())
            }
        }

        impl<'de> Deserialize<'de> for $t {
            fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
                #[derive(Deserialize)]
                #[serde(untagged)]
                enum Raw {
                    Name(String),
                    Code(usize),
                }
                let raw = match Raw::deserialize(d)? {
                    Raw::Name(s) => s,
                    Raw::Code(c) => c.to_string(),
                };
                raw.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

serde_by_name!(IntentLabel7);
serde_by_name!(IntentLabel6);

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codes_are_stable() {
        for (i, l) in IntentLabel7::ALL.iter().enumerate() {
            assert_eq!(l.code(), i);
        }
        assert_eq!(IntentLabel7::IntoDepU.code(), 6);
        assert_eq!(IntentLabel6::RhetoricalC.code(), 5);
        assert_eq!(IntentLabel7::IntoDepU.to_six(), None);
        assert_eq!(IntentLabel7::Command.to_six(), Some(IntentLabel6::Command));
    }

    #[test]
    fn parses_names_codes_and_abbreviations() {
        assert_eq!("Question".parse::<IntentLabel7>().unwrap(), IntentLabel7::Question);
        assert_eq!("rq".parse::<IntentLabel7>().unwrap(), IntentLabel7::RhetoricalQ);
        assert_eq!("6".parse::<IntentLabel7>().unwrap(), IntentLabel7::IntoDepU);
        assert_eq!("Into-dep U".parse::<IntentLabel7>().unwrap(), IntentLabel7::IntoDepU);
        assert!("iu".parse::<IntentLabel6>().is_err());
        assert!("opinion".parse::<IntentLabel7>().is_err());
    }

    #[test]
    fn serde_uses_lowercase_names() {
        let s = serde_json::to_string(&IntentLabel7::RhetoricalC).unwrap();
        assert_eq!(s, "\"rhetorical_command\"");
        let back: IntentLabel7 = serde_json::from_str(&s).unwrap();
        assert_eq!(back, IntentLabel7::RhetoricalC);
        let code: IntentLabel6 = serde_json::from_str("2").unwrap();
        assert_eq!(code, IntentLabel6::Question);
    }
}
