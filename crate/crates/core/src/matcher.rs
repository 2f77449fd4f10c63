//! Approximate dictionary matching of disease concepts in titles.
//!
//! Every window of up to `max_window_tokens` consecutive tokens is compared
//! with every dictionary term by Jaccard similarity of character n-gram sets.
//! An inverted index from n-gram to entries restricts the comparison to
//! entries sharing at least one n-gram with the window, which is exact:
//! entries sharing none have similarity 0, below any valid threshold.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cue::CueHit;
use crate::text::normalize;
use crate::{Cui, Error, Result};

pub const DEFAULT_GRAM_SIZE: usize = 3;
pub const DEFAULT_THRESHOLD: f64 = 0.7;
pub const DEFAULT_MAX_WINDOW_TOKENS: usize = 5;
pub const DEFAULT_TUIS: [&str; 2] = ["T047", "T191"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatcherParams {
    pub allowed_tuis: BTreeSet<String>,
    pub gram_size: usize,
    pub similarity_threshold: f64,
    pub max_window_tokens: usize,
}

impl Default for MatcherParams {
    fn default() -> Self {
        MatcherParams {
            allowed_tuis: DEFAULT_TUIS.iter().map(|s| s.to_string()).collect(),
            gram_size: DEFAULT_GRAM_SIZE,
            similarity_threshold: DEFAULT_THRESHOLD,
            max_window_tokens: DEFAULT_MAX_WINDOW_TOKENS,
        }
    }
}

impl MatcherParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.similarity_threshold > 0.0 && self.similarity_threshold <= 1.0) {
            return Err(Error::Config(format!(
                "similarity_threshold must be in (0, 1], got {}",
                self.similarity_threshold
            )));
        }
        if self.gram_size < 2 {
            return Err(Error::Config(format!("gram_size must be >= 2, got {}", self.gram_size)));
        }
        if self.max_window_tokens == 0 {
            return Err(Error::Config("max_window_tokens must be >= 1".into()));
        }
        if self.allowed_tuis.is_empty() {
            return Err(Error::Config("allowed_tuis is empty".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DictionaryEntry {
    pub cui: Cui,
    pub tui: String,
    pub term: String,
    pub preferred_term: String,
}

#[derive(Debug, Clone)]
struct IndexedEntry {
    entry: DictionaryEntry,
    gram_count: usize,
}

/// Immutable, shareable matcher state.
#[derive(Debug, Clone)]
pub struct DictionaryIndex {
    entries: Vec<IndexedEntry>,
    gram_index: HashMap<String, Vec<u32>>,
    labels: BTreeMap<Cui, String>,
    params: MatcherParams,
}

/// Contiguous character n-grams of `text`; a text shorter than `n` is its own
/// single gram.
pub fn gram_set(text: &str, n: usize) -> BTreeSet<String> {
    let chars: Vec<char> = text.chars().collect();
    if chars.len() < n {
        return BTreeSet::from([text.to_string()]);
    }
    chars.windows(n).map(|w| w.iter().collect()).collect()
}

pub fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    let shared = a.intersection(b).count();
    similarity_from_counts(shared, a.len(), b.len())
}

/// Jaccard similarity from the intersection size and both set sizes.
pub fn similarity_from_counts(shared: usize, a_len: usize, b_len: usize) -> f64 {
    let union = a_len + b_len - shared;
    if union == 0 {
        return 0.0;
    }
    shared as f64 / union as f64
}

pub fn load_dictionary(path: impl AsRef<Path>, params: &MatcherParams) -> Result<DictionaryIndex> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_dictionary(BufReader::new(file), path, params)
}

/// Parses the four-column dictionary TSV (`cui, tui, term, preferred_term`).
pub fn parse_dictionary<R: BufRead>(reader: R, path: &Path, params: &MatcherParams) -> Result<DictionaryIndex> {
    params.validate()?;
    let mut entries = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        let [cui, tui, term, preferred] = cols.as_slice() else {
            return Err(Error::load(
                path,
                lineno,
                format!("expected 4 tab-separated columns, found {}", cols.len()),
            ));
        };
        let cui: Cui = cui.parse().map_err(|e| Error::load(path, lineno, format!("{e}")))?;
        if term.trim().is_empty() {
            return Err(Error::load(path, lineno, "empty term"));
        }
        entries.push(DictionaryEntry {
            cui,
            tui: tui.trim().to_string(),
            term: term.to_string(),
            preferred_term: preferred.to_string(),
        });
    }
    let index = DictionaryIndex::from_entries(entries, params.clone())?;
    if index.is_empty() {
        return Err(Error::EmptyDictionary(path.to_path_buf()));
    }
    Ok(index)
}

impl DictionaryIndex {
    /// Builds an index from entries, keeping only allowed semantic types and
    /// the first row for each (normalized term, CUI).
    pub fn from_entries(entries: impl IntoIterator<Item = DictionaryEntry>, params: MatcherParams) -> Result<Self> {
        params.validate()?;
        let mut seen = HashSet::new();
        let mut index = DictionaryIndex {
            entries: Vec::new(),
            gram_index: HashMap::new(),
            labels: BTreeMap::new(),
            params,
        };
        for entry in entries {
            if !index.params.allowed_tuis.contains(&entry.tui) {
                continue;
            }
            let normalized = normalize(&entry.term);
            if normalized.is_empty() || !seen.insert((normalized.clone(), entry.cui)) {
                continue;
            }
            let grams = gram_set(&normalized, index.params.gram_size);
            let id = index.entries.len() as u32;
            for g in &grams {
                index.gram_index.entry(g.clone()).or_default().push(id);
            }
            index
                .labels
                .entry(entry.cui)
                .or_insert_with(|| entry.preferred_term.clone());
            index.entries.push(IndexedEntry {
                entry,
                gram_count: grams.len(),
            });
        }
        Ok(index)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn params(&self) -> &MatcherParams {
        &self.params
    }

    pub fn entries(&self) -> impl Iterator<Item = &DictionaryEntry> {
        self.entries.iter().map(|e| &e.entry)
    }

    /// Entry ids reachable from one n-gram.
    pub fn entries_with_gram(&self, gram: &str) -> &[u32] {
        self.gram_index.get(gram).map_or(&[], Vec::as_slice)
    }

    pub fn entry(&self, id: u32) -> &DictionaryEntry {
        &self.entries[id as usize].entry
    }

    /// Preferred term of each CUI (first one listed in the dictionary).
    pub fn labels(&self) -> &BTreeMap<Cui, String> {
        &self.labels
    }

    pub fn label(&self, cui: Cui) -> Option<&str> {
        self.labels.get(&cui).map(String::as_str)
    }

    /// All matches in `title` at or above the similarity threshold, one per
    /// (span, CUI) keeping that CUI's best-scoring term, sorted by
    /// (start asc, end desc, CUI asc).
    pub fn match_title(&self, title: &str) -> Vec<ConceptMatch> {
        let chars: Vec<char> = title.chars().collect();
        let tokens = tokenize(&chars);
        let mut counts = vec![0u32; self.entries.len()];
        let mut touched: Vec<u32> = Vec::new();
        let mut out = Vec::new();

        for (i, &(start, _)) in tokens.iter().enumerate() {
            let last = (i + self.params.max_window_tokens).min(tokens.len());
            for &(_, end) in &tokens[i..last] {
                let text: String = chars[start..end].iter().collect();
                let grams = gram_set(&normalize(&text), self.params.gram_size);
                for g in &grams {
                    for &id in self.entries_with_gram(g) {
                        if counts[id as usize] == 0 {
                            touched.push(id);
                        }
                        counts[id as usize] += 1;
                    }
                }

                let mut best: BTreeMap<Cui, (f64, &DictionaryEntry)> = BTreeMap::new();
                for id in touched.drain(..) {
                    let shared = std::mem::take(&mut counts[id as usize]) as usize;
                    let e = &self.entries[id as usize];
                    let sim = similarity_from_counts(shared, grams.len(), e.gram_count);
                    if sim < self.params.similarity_threshold {
                        continue;
                    }
                    best.entry(e.entry.cui)
                        .and_modify(|cur| {
                            let better = sim.total_cmp(&cur.0).then_with(|| cur.1.tui.cmp(&e.entry.tui));
                            if better == Ordering::Greater {
                                *cur = (sim, &e.entry);
                            }
                        })
                        .or_insert((sim, &e.entry));
                }
                for (cui, (sim, entry)) in best {
                    out.push(ConceptMatch {
                        start,
                        end,
                        matched_text: text.clone(),
                        cui,
                        preferred_term: self.labels[&cui].clone(),
                        similarity: sim,
                        tui: entry.tui.clone(),
                    });
                }
            }
        }
        out.sort_by(|a, b| a.start.cmp(&b.start).then(b.end.cmp(&a.end)).then(a.cui.cmp(&b.cui)));
        out
    }
}

/// Token boundaries as (start, end) character offsets: maximal runs of
/// letters and digits.
pub fn tokenize(chars: &[char]) -> Vec<(usize, usize)> {
    let mut tokens = Vec::new();
    let mut start = None;
    for (i, c) in chars.iter().enumerate() {
        match (c.is_alphanumeric(), start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                tokens.push((s, i));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        tokens.push((s, chars.len()));
    }
    tokens
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptMatch {
    pub start: usize,
    pub end: usize,
    pub matched_text: String,
    pub cui: Cui,
    pub preferred_term: String,
    pub similarity: f64,
    pub tui: String,
}

impl ConceptMatch {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }

    pub fn overlaps(&self, start: usize, end: usize) -> bool {
        self.start < end && start < self.end
    }
}

/// Disambiguation order: the greater match wins.
///
/// Longer span first, then higher similarity, then lower numeric CUI. The
/// remaining keys only make the order total.
pub fn disambiguation_order(a: &ConceptMatch, b: &ConceptMatch) -> Ordering {
    a.len()
        .cmp(&b.len())
        .then(a.similarity.total_cmp(&b.similarity))
        .then(b.cui.cmp(&a.cui))
        .then(b.start.cmp(&a.start))
        .then_with(|| b.tui.cmp(&a.tui))
        .then_with(|| b.matched_text.cmp(&a.matched_text))
        .then_with(|| b.preferred_term.cmp(&a.preferred_term))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchGroup {
    pub winner: ConceptMatch,
    pub start: usize,
    pub end: usize,
}

/// Drops matches overlapping the cue phrase.
pub fn discard_cue_overlaps(matches: Vec<ConceptMatch>, cue: &CueHit) -> Vec<ConceptMatch> {
    matches
        .into_iter()
        .filter(|m| !m.overlaps(cue.start, cue.end))
        .collect()
}

/// Clusters matches by transitive span overlap and picks one winner per
/// cluster. Groups come back sorted by start with disjoint spans.
pub fn group_and_disambiguate(mut matches: Vec<ConceptMatch>) -> Vec<MatchGroup> {
    matches.sort_by(|a, b| a.start.cmp(&b.start).then(a.end.cmp(&b.end)));
    let mut groups: Vec<MatchGroup> = Vec::new();
    for m in matches {
        match groups.last_mut() {
            Some(g) if m.start < g.end => {
                g.end = g.end.max(m.end);
                if disambiguation_order(&m, &g.winner) == Ordering::Greater {
                    g.winner = m;
                }
            }
            _ => groups.push(MatchGroup {
                start: m.start,
                end: m.end,
                winner: m,
            }),
        }
    }
    groups
}
