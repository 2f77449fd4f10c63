//! Canonicalization of extracted CUIs by parent/child and synonymy relations.
//!
//! Relations file rows read `cui_a <TAB> rel <TAB> cui_b`:
//!
//! | rel        | meaning                         |
//! |------------|---------------------------------|
//! | `PAR`/`RB` | `cui_a` is the parent of `cui_b` |
//! | `CHD`/`RN` | `cui_a` is a child of `cui_b`    |
//! | `SYN`/`RL` | `cui_a` and `cui_b` are synonyms |
//!
//! A child collapses onto its extracted parent and a synonym component
//! collapses onto the member that appeared first in the selected titles.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::pairs::RawPair;
use crate::{Cui, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Relation {
    #[serde(rename = "PAR")]
    Par,
    #[serde(rename = "CHD")]
    Chd,
    #[serde(rename = "RB")]
    Rb,
    #[serde(rename = "RN")]
    Rn,
    #[serde(rename = "SYN")]
    Syn,
    #[serde(rename = "RL")]
    Rl,
}

impl Relation {
    pub fn code(self) -> &'static str {
        match self {
            Relation::Par => "PAR",
            Relation::Chd => "CHD",
            Relation::Rb => "RB",
            Relation::Rn => "RN",
            Relation::Syn => "SYN",
            Relation::Rl => "RL",
        }
    }
}

impl FromStr for Relation {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s {
            "PAR" => Relation::Par,
            "CHD" => Relation::Chd,
            "RB" => Relation::Rb,
            "RN" => Relation::Rn,
            "SYN" => Relation::Syn,
            "RL" => Relation::Rl,
            other => return Err(format!("unknown relation code {other:?}")),
        })
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RelationRow {
    pub cui_a: Cui,
    pub rel: Relation,
    pub cui_b: Cui,
}

impl RelationRow {
    /// `(parent, child)` for hierarchical rows.
    pub fn parent_child(&self) -> Option<(Cui, Cui)> {
        match self.rel {
            Relation::Par | Relation::Rb => Some((self.cui_a, self.cui_b)),
            Relation::Chd | Relation::Rn => Some((self.cui_b, self.cui_a)),
            Relation::Syn | Relation::Rl => None,
        }
    }

    pub fn is_synonym(&self) -> bool {
        matches!(self.rel, Relation::Syn | Relation::Rl)
    }
}

pub fn load_relations(path: impl AsRef<Path>) -> Result<Vec<RelationRow>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_relations(BufReader::new(file), path)
}

/// Parses and validates relation rows, dropping exact duplicates while
/// keeping first-seen order.
pub fn parse_relations<R: BufRead>(reader: R, path: &Path) -> Result<Vec<RelationRow>> {
    let mut seen = BTreeSet::new();
    let mut rows = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        let [a, rel, b] = cols.as_slice() else {
            return Err(Error::load(
                path,
                lineno,
                format!("expected 3 tab-separated columns, found {}", cols.len()),
            ));
        };
        let cui_a: Cui = a.parse().map_err(|e| Error::load(path, lineno, format!("{e}")))?;
        let cui_b: Cui = b.parse().map_err(|e| Error::load(path, lineno, format!("{e}")))?;
        let rel: Relation = rel.parse().map_err(|e: String| Error::load(path, lineno, e))?;
        if cui_a == cui_b {
            return Err(Error::load(path, lineno, format!("{cui_a} related to itself")));
        }
        let row = RelationRow { cui_a, rel, cui_b };
        if seen.insert(row) {
            rows.push(row);
        }
    }
    Ok(rows)
}

pub fn write_relations<W: Write>(mut out: W, rows: &[RelationRow]) -> std::io::Result<()> {
    for r in rows {
        writeln!(out, "{}\t{}\t{}", r.cui_a, r.rel, r.cui_b)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParentMode {
    /// Chains collapse to the topmost extracted ancestor.
    #[default]
    Transitive,
    /// A child collapses onto its direct parent only; a CUI chosen as some
    /// other CUI's parent stays its own representative.
    SingleStep,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleOrder {
    #[default]
    ParentsFirst,
    SynonymsFirst,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CanonicalOptions {
    pub parent_mode: ParentMode,
    pub rule_order: RuleOrder,
}

/// Total map from every extracted CUI to its representative.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CanonicalMap {
    mapping: BTreeMap<Cui, Cui>,
    first_appearance: BTreeMap<Cui, u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CanonicalPair {
    pub source_cui: Cui,
    pub dest_cui: Cui,
    pub pmid: String,
    pub self_loop: bool,
}

impl CanonicalMap {
    pub fn identity(cuis: impl IntoIterator<Item = Cui>) -> Self {
        CanonicalMap {
            mapping: cuis.into_iter().map(|c| (c, c)).collect(),
            first_appearance: BTreeMap::new(),
        }
    }

    pub fn get(&self, cui: Cui) -> Option<Cui> {
        self.mapping.get(&cui).copied()
    }

    pub fn mapping(&self) -> &BTreeMap<Cui, Cui> {
        &self.mapping
    }

    pub fn first_appearance(&self) -> &BTreeMap<Cui, u64> {
        &self.first_appearance
    }

    pub fn len(&self) -> usize {
        self.mapping.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mapping.is_empty()
    }

    /// CUIs mapped somewhere other than themselves.
    pub fn collapsed(&self) -> impl Iterator<Item = (Cui, Cui)> + '_ {
        self.mapping.iter().filter(|(k, v)| k != v).map(|(k, v)| (*k, *v))
    }

    pub fn apply(&self, pair: &RawPair) -> Result<CanonicalPair> {
        let lookup = |c: Cui| {
            self.get(c)
                .ok_or_else(|| Error::Internal(format!("{c} (PMID {}) missing from canonical map", pair.pmid)))
        };
        let source_cui = lookup(pair.source_cui)?;
        let dest_cui = lookup(pair.dest_cui)?;
        Ok(CanonicalPair {
            source_cui,
            dest_cui,
            pmid: pair.pmid.clone(),
            self_loop: source_cui == dest_cui,
        })
    }
}

pub fn apply_map(map: &CanonicalMap, pair: &RawPair) -> Result<CanonicalPair> {
    map.apply(pair)
}

/// Builds the canonical map over `extracted`.
///
/// Only relations with both endpoints extracted are considered.
/// `first_appearance` orders synonym members; CUIs absent from it sort last.
pub fn build_canonical_map(
    extracted: &BTreeSet<Cui>,
    first_appearance: &BTreeMap<Cui, u64>,
    relations: &[RelationRow],
    options: CanonicalOptions,
) -> CanonicalMap {
    let relevant: Vec<RelationRow> = relations
        .iter()
        .filter(|r| extracted.contains(&r.cui_a) && extracted.contains(&r.cui_b))
        .copied()
        .collect();

    let identity: BTreeMap<Cui, Cui> = extracted.iter().map(|&c| (c, c)).collect();
    let (first, second): (Step, Step) = match options.rule_order {
        RuleOrder::ParentsFirst => (Step::Parents, Step::Synonyms),
        RuleOrder::SynonymsFirst => (Step::Synonyms, Step::Parents),
    };
    let mut mapping = identity;
    for step in [first, second] {
        let step_map = match step {
            Step::Parents => parent_step(&mapping, &relevant, options.parent_mode),
            Step::Synonyms => synonym_step(&mapping, &relevant, first_appearance),
        };
        for rep in mapping.values_mut() {
            *rep = step_map[rep];
        }
    }
    compress(&mut mapping);

    CanonicalMap {
        first_appearance: first_appearance
            .iter()
            .filter(|(c, _)| extracted.contains(c))
            .map(|(c, o)| (*c, *o))
            .collect(),
        mapping,
    }
}

#[derive(Clone, Copy)]
enum Step {
    Parents,
    Synonyms,
}

fn representatives(current: &BTreeMap<Cui, Cui>) -> BTreeSet<Cui> {
    current.values().copied().collect()
}

/// Parent collapse over the current representatives, with relations lifted
/// through `current`.
fn parent_step(current: &BTreeMap<Cui, Cui>, relations: &[RelationRow], mode: ParentMode) -> BTreeMap<Cui, Cui> {
    let nodes = representatives(current);
    let mut parents: BTreeMap<Cui, BTreeSet<Cui>> = BTreeMap::new();
    for (parent, child) in relations.iter().filter_map(RelationRow::parent_child) {
        let (p, c) = (current[&parent], current[&child]);
        if p != c {
            parents.entry(c).or_default().insert(p);
        }
    }
    // lowest numeric CUI among a child's parents
    let direct: BTreeMap<Cui, Cui> = parents
        .iter()
        .map(|(c, ps)| (*c, *ps.first().expect("non-empty parent set")))
        .collect();

    match mode {
        ParentMode::Transitive => resolve_functional_graph(&nodes, &direct),
        ParentMode::SingleStep => {
            let chosen: BTreeSet<Cui> = direct.values().copied().collect();
            nodes
                .iter()
                .map(|&n| match direct.get(&n) {
                    Some(&p) if !chosen.contains(&n) => (n, p),
                    _ => (n, n),
                })
                .collect()
        }
    }
}

/// Follows `next` from every node to a root, or to the lowest member of the
/// cycle the walk falls into.
fn resolve_functional_graph(nodes: &BTreeSet<Cui>, next: &BTreeMap<Cui, Cui>) -> BTreeMap<Cui, Cui> {
    let mut resolved: BTreeMap<Cui, Cui> = BTreeMap::new();
    for &start in nodes {
        if resolved.contains_key(&start) {
            continue;
        }
        let mut path: Vec<Cui> = Vec::new();
        let mut position: BTreeMap<Cui, usize> = BTreeMap::new();
        let mut node = start;
        let target = loop {
            if let Some(&r) = resolved.get(&node) {
                break r;
            }
            if let Some(&i) = position.get(&node) {
                let cycle_min = *path[i..].iter().min().expect("cycle is non-empty");
                break cycle_min;
            }
            position.insert(node, path.len());
            path.push(node);
            match next.get(&node) {
                Some(&n) => node = n,
                None => break node,
            }
        };
        for n in path {
            resolved.insert(n, target);
        }
    }
    resolved
}

fn synonym_step(
    current: &BTreeMap<Cui, Cui>,
    relations: &[RelationRow],
    first_appearance: &BTreeMap<Cui, u64>,
) -> BTreeMap<Cui, Cui> {
    let nodes = representatives(current);
    let mut uf = UnionFind::new(&nodes);
    for r in relations.iter().filter(|r| r.is_synonym()) {
        uf.union(current[&r.cui_a], current[&r.cui_b]);
    }
    let key = |c: Cui| (first_appearance.get(&c).copied().unwrap_or(u64::MAX), c);
    let mut chosen: BTreeMap<Cui, Cui> = BTreeMap::new();
    for &n in &nodes {
        let root = uf.find(n);
        chosen
            .entry(root)
            .and_modify(|best| {
                if key(n) < key(*best) {
                    *best = n;
                }
            })
            .or_insert(n);
    }
    nodes.iter().map(|&n| (n, chosen[&uf.find(n)])).collect()
}

fn compress(mapping: &mut BTreeMap<Cui, Cui>) {
    let keys: Vec<Cui> = mapping.keys().copied().collect();
    for k in keys {
        let mut v = mapping[&k];
        for _ in 0..mapping.len() {
            let next = mapping.get(&v).copied().unwrap_or(v);
            if next == v {
                break;
            }
            v = next;
        }
        mapping.insert(k, v);
    }
}

struct UnionFind {
    parent: BTreeMap<Cui, Cui>,
}

impl UnionFind {
    fn new(nodes: &BTreeSet<Cui>) -> Self {
        UnionFind {
            parent: nodes.iter().map(|&n| (n, n)).collect(),
        }
    }

    fn find(&mut self, x: Cui) -> Cui {
        let mut root = x;
        while self.parent[&root] != root {
            root = self.parent[&root];
        }
        let mut cur = x;
        while cur != root {
            let next = self.parent[&cur];
            self.parent.insert(cur, root);
            cur = next;
        }
        root
    }

    fn union(&mut self, a: Cui, b: Cui) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // smaller CUI as root keeps the structure order-independent
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent.insert(hi, lo);
        }
    }
}
