use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// A UMLS concept unique identifier: `C` followed by exactly seven digits.
///
/// Stored as its numeric part so that ordering is the numeric order of the
/// seven digits, which is what every lowest-CUI tie-break relies on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Cui(u32);

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("not a CUI (expected C + 7 digits): {0:?}")]
pub struct ParseCuiError(pub String);

impl Cui {
    pub const MAX_NUMBER: u32 = 9_999_999;

    pub fn from_number(n: u32) -> Option<Cui> {
        (n <= Self::MAX_NUMBER).then_some(Cui(n))
    }

    pub fn number(self) -> u32 {
        self.0
    }
}

impl FromStr for Cui {
    type Err = ParseCuiError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let digits = s
            .strip_prefix('C')
            .filter(|d| d.len() == 7 && d.bytes().all(|b| b.is_ascii_digit()))
            .ok_or_else(|| ParseCuiError(s.to_string()))?;
        Ok(Cui(digits.parse().expect("seven ASCII digits fit in u32")))
    }
}

impl fmt::Display for Cui {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "C{:07}", self.0)
    }
}

impl Serialize for Cui {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Cui {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_displays() {
        let c: Cui = "C0041296".parse().unwrap();
        assert_eq!(c.number(), 41296);
        assert_eq!(c.to_string(), "C0041296");
    }

    #[test]
    fn rejects_bad_patterns() {
        for bad in ["X1234567", "C123456", "C12345678", "c0041296", "C00412a6", "", "C"] {
            assert!(bad.parse::<Cui>().is_err(), "{bad}");
        }
    }

    #[test]
    fn orders_numerically() {
        let a: Cui = "C0006826".parse().unwrap();
        let b: Cui = "C0041296".parse().unwrap();
        assert!(a < b);
    }
}
