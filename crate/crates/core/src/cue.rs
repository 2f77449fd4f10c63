//! Misdiagnosis cue-phrase detection.

use serde::{Deserialize, Serialize};

use crate::text::simple_lowercase;

pub const DEFAULT_PHRASES: [&str; 2] = ["misdiagnosed as", "masquerading as"];

pub fn default_phrases() -> Vec<String> {
    DEFAULT_PHRASES.iter().map(|s| s.to_string()).collect()
}

/// A cue phrase located in a title. Offsets are character offsets,
/// `end` exclusive.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CueHit {
    pub phrase: String,
    pub start: usize,
    pub end: usize,
}

/// Earliest occurrence of any phrase, case-insensitively, as a literal
/// substring. Ties at the same offset go to the phrase listed first.
pub fn find_cue(title: &str, phrases: &[String]) -> Option<CueHit> {
    let folded: Vec<char> = title.chars().map(simple_lowercase).collect();
    find_cue_folded(&folded, phrases)
}

pub(crate) fn find_cue_folded(folded_title: &[char], phrases: &[String]) -> Option<CueHit> {
    let mut best: Option<CueHit> = None;
    for phrase in phrases {
        let needle: Vec<char> = phrase.chars().map(simple_lowercase).collect();
        if needle.is_empty() || needle.len() > folded_title.len() {
            continue;
        }
        let limit = best.as_ref().map_or(folded_title.len(), |b| b.start);
        let found = folded_title
            .windows(needle.len())
            .take(limit)
            .position(|w| w == needle.as_slice());
        if let Some(start) = found {
            best = Some(CueHit {
                phrase: phrase.clone(),
                start,
                end: start + needle.len(),
            });
        }
    }
    best
}
