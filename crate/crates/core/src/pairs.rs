//! The selection rule: exactly two concepts, one on each side of the cue.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::Citation;
use crate::cue::CueHit;
use crate::matcher::MatchGroup;
use crate::Cui;

/// Correct diagnosis (before the cue) and the disease it was mistaken for
/// (after the cue).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawPair {
    pub source_cui: Cui,
    pub dest_cui: Cui,
    pub pmid: String,
    pub title: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rejection {
    ZeroMatches,
    OneMatch,
    TooManyMatches,
    BothSameSide,
}

impl Rejection {
    pub const ALL: [Rejection; 4] = [
        Rejection::ZeroMatches,
        Rejection::OneMatch,
        Rejection::TooManyMatches,
        Rejection::BothSameSide,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Rejection::ZeroMatches => "zero_matches",
            Rejection::OneMatch => "one_match",
            Rejection::TooManyMatches => "too_many_matches",
            Rejection::BothSameSide => "both_same_side",
        }
    }
}

impl fmt::Display for Rejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Rejection {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Rejection::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| format!("unknown rejection reason {s:?}"))
    }
}

/// Per-reason rejection counts; every reason is always present.
pub fn empty_breakdown() -> BTreeMap<Rejection, u64> {
    Rejection::ALL.into_iter().map(|r| (r, 0)).collect()
}

/// `groups` must be sorted and disjoint, as produced by
/// [`group_and_disambiguate`](crate::matcher::group_and_disambiguate).
/// Spans touching the cue boundary count as being on that side.
pub fn extract_pair(citation: &Citation, cue: &CueHit, groups: &[MatchGroup]) -> Result<RawPair, Rejection> {
    match groups {
        [] => Err(Rejection::ZeroMatches),
        [_] => Err(Rejection::OneMatch),
        [before, after] if before.end <= cue.start && after.start >= cue.end => Ok(RawPair {
            source_cui: before.winner.cui,
            dest_cui: after.winner.cui,
            pmid: citation.pmid.clone(),
            title: citation.title.clone(),
        }),
        [_, _] => Err(Rejection::BothSameSide),
        _ => Err(Rejection::TooManyMatches),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matcher::ConceptMatch;

    fn group(start: usize, end: usize, cui: &str) -> MatchGroup {
        MatchGroup {
            winner: ConceptMatch {
                start,
                end,
                matched_text: String::new(),
                cui: cui.parse().unwrap(),
                preferred_term: String::new(),
                similarity: 1.0,
                tui: "T047".into(),
            },
            start,
            end,
        }
    }

    fn cite() -> Citation {
        Citation {
            pmid: "1".into(),
            title: "Tuberculosis misdiagnosed as carcinoma".into(),
        }
    }

    fn cue(start: usize, end: usize) -> CueHit {
        CueHit {
            phrase: "misdiagnosed as".into(),
            start,
            end,
        }
    }

    #[test]
    fn one_each_side() {
        let p = extract_pair(
            &cite(),
            &cue(13, 28),
            &[group(0, 12, "C0041296"), group(29, 38, "C0007097")],
        )
        .unwrap();
        assert_eq!(p.source_cui.to_string(), "C0041296");
        assert_eq!(p.dest_cui.to_string(), "C0007097");
        assert_eq!(p.pmid, "1");
    }

    #[test]
    fn both_before() {
        let r = extract_pair(
            &cite(),
            &cue(25, 40),
            &[group(0, 8, "C0000001"), group(9, 20, "C0000002")],
        );
        assert_eq!(r, Err(Rejection::BothSameSide));
    }

    #[test]
    fn both_after() {
        let r = extract_pair(
            &cite(),
            &cue(0, 10),
            &[group(11, 15, "C0000001"), group(16, 20, "C0000002")],
        );
        assert_eq!(r, Err(Rejection::BothSameSide));
    }

    #[test]
    fn counts() {
        assert_eq!(extract_pair(&cite(), &cue(13, 28), &[]), Err(Rejection::ZeroMatches));
        assert_eq!(
            extract_pair(&cite(), &cue(13, 28), &[group(0, 12, "C0000001")]),
            Err(Rejection::OneMatch)
        );
        let three = [
            group(0, 5, "C0000001"),
            group(6, 12, "C0000002"),
            group(29, 38, "C0000003"),
        ];
        assert_eq!(
            extract_pair(&cite(), &cue(13, 28), &three),
            Err(Rejection::TooManyMatches)
        );
    }

    #[test]
    fn tangent_spans_accepted() {
        let p = extract_pair(
            &cite(),
            &cue(13, 28),
            &[group(0, 13, "C0000001"), group(28, 38, "C0000002")],
        );
        assert!(p.is_ok());
    }

    #[test]
    fn reason_names_round_trip() {
        for r in Rejection::ALL {
            assert_eq!(r.as_str().parse::<Rejection>().unwrap(), r);
        }
    }
}
