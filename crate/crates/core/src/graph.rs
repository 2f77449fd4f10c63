//! The directed misdiagnosis graph.
//!
//! An edge `S -> D` means "S (the correct diagnosis) was misdiagnosed as D".
//! Its weight is the pair count divided by the number of retained pairs with
//! S as source, kept as an exact ratio.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::ops::AddAssign;

use serde::{Deserialize, Serialize};

use crate::canonical::CanonicalPair;
use crate::Cui;

/// Exact non-negative fraction. Equality and order compare values, so
/// `1/2 == 2/4`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Ratio {
    pub num: u64,
    pub den: u64,
}

impl Ratio {
    pub fn new(num: u64, den: u64) -> Self {
        assert!(den > 0, "zero denominator");
        Ratio { num, den }
    }

    pub fn to_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// Decimal rendering rounded half-up to `places` digits.
    pub fn to_fixed(self, places: u32) -> String {
        let scale = 10u128.pow(places);
        let (num, den) = (self.num as u128, self.den as u128);
        let scaled = (2 * num * scale + den) / (2 * den);
        let int = scaled / scale;
        if places == 0 {
            return int.to_string();
        }
        format!("{int}.{:0width$}", scaled % scale, width = places as usize)
    }
}

impl Ord for Ratio {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.num as u128 * other.den as u128).cmp(&(other.num as u128 * self.den as u128))
    }
}

impl PartialEq for Ratio {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Ratio {}

impl PartialOrd for Ratio {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Ratio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_fixed(4))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeStat {
    pub source_cui: Cui,
    pub dest_cui: Cui,
    pub pair_count: u64,
    pub weight: Ratio,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeStat {
    pub cui: Cui,
    pub label: String,
    pub source_frequency: u64,
    pub destination_frequency: u64,
    pub out_degree: u64,
    pub in_degree: u64,
    pub out_degree_centrality: Ratio,
}

/// Commutative pair-count accumulator; shards merge with `+=`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PairCounts {
    counts: BTreeMap<(Cui, Cui), u64>,
    self_loops: u64,
}

impl PairCounts {
    pub fn add(&mut self, pair: &CanonicalPair) {
        self.add_edge(pair.source_cui, pair.dest_cui);
    }

    pub fn add_edge(&mut self, source: Cui, dest: Cui) {
        if source == dest {
            self.self_loops += 1;
        } else {
            *self.counts.entry((source, dest)).or_default() += 1;
        }
    }

    pub fn finalize(self, labels: &BTreeMap<Cui, String>) -> MisdxGraph {
        MisdxGraph::from_counts(self.counts, self.self_loops, labels)
    }
}

impl AddAssign for PairCounts {
    fn add_assign(&mut self, rhs: Self) {
        for (k, v) in rhs.counts {
            *self.counts.entry(k).or_default() += v;
        }
        self.self_loops += rhs.self_loops;
    }
}

impl<'a> FromIterator<&'a CanonicalPair> for PairCounts {
    fn from_iter<I: IntoIterator<Item = &'a CanonicalPair>>(iter: I) -> Self {
        let mut counts = PairCounts::default();
        for p in iter {
            counts.add(p);
        }
        counts
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MisdxGraph {
    nodes: BTreeMap<Cui, NodeStat>,
    edges: BTreeMap<(Cui, Cui), EdgeStat>,
    self_loops_dropped: u64,
}

/// A ranked table row: the node and its strongest edge with that edge's
/// conditional frequency.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RankedRow {
    pub node: NodeStat,
    pub best_cui: Cui,
    pub best_label: String,
    pub best_pair_count: u64,
    pub best_frequency: Ratio,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ReverseRow {
    pub source_cui: Cui,
    pub best_dest_cui: Cui,
    pub forward_weight: Ratio,
    /// Weight of `best_dest -> source`, `None` when never reported.
    pub reverse_weight: Option<Ratio>,
}

/// Labels fall back to the CUI itself when the dictionary has none.
fn label_for(labels: &BTreeMap<Cui, String>, cui: Cui) -> String {
    labels.get(&cui).cloned().unwrap_or_else(|| cui.to_string())
}

pub fn build_graph<'a>(
    pairs: impl IntoIterator<Item = &'a CanonicalPair>,
    labels: &BTreeMap<Cui, String>,
) -> MisdxGraph {
    pairs.into_iter().collect::<PairCounts>().finalize(labels)
}

impl MisdxGraph {
    fn from_counts(counts: BTreeMap<(Cui, Cui), u64>, self_loops: u64, labels: &BTreeMap<Cui, String>) -> Self {
        let mut source_freq: BTreeMap<Cui, u64> = BTreeMap::new();
        let mut dest_freq: BTreeMap<Cui, u64> = BTreeMap::new();
        let mut out_deg: BTreeMap<Cui, u64> = BTreeMap::new();
        let mut in_deg: BTreeMap<Cui, u64> = BTreeMap::new();
        for (&(s, d), &n) in &counts {
            *source_freq.entry(s).or_default() += n;
            *dest_freq.entry(d).or_default() += n;
            *out_deg.entry(s).or_default() += 1;
            *in_deg.entry(d).or_default() += 1;
        }
        let cuis: BTreeSet<Cui> = counts.keys().flat_map(|&(s, d)| [s, d]).collect();
        let denom = (cuis.len() as u64).saturating_sub(1);
        let get = |m: &BTreeMap<Cui, u64>, c: Cui| m.get(&c).copied().unwrap_or(0);
        let nodes = cuis
            .iter()
            .map(|&c| {
                let out_degree = get(&out_deg, c);
                let centrality = if denom == 0 {
                    Ratio::new(0, 1)
                } else {
                    Ratio::new(out_degree, denom)
                };
                (
                    c,
                    NodeStat {
                        cui: c,
                        label: label_for(labels, c),
                        source_frequency: get(&source_freq, c),
                        destination_frequency: get(&dest_freq, c),
                        out_degree,
                        in_degree: get(&in_deg, c),
                        out_degree_centrality: centrality,
                    },
                )
            })
            .collect();
        let edges = counts
            .into_iter()
            .map(|((s, d), n)| {
                (
                    (s, d),
                    EdgeStat {
                        source_cui: s,
                        dest_cui: d,
                        pair_count: n,
                        weight: Ratio::new(n, source_freq[&s]),
                    },
                )
            })
            .collect();
        MisdxGraph {
            nodes,
            edges,
            self_loops_dropped: self_loops,
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = &NodeStat> {
        self.nodes.values()
    }

    pub fn edges(&self) -> impl Iterator<Item = &EdgeStat> {
        self.edges.values()
    }

    pub fn node(&self, cui: Cui) -> Option<&NodeStat> {
        self.nodes.get(&cui)
    }

    pub fn edge(&self, source: Cui, dest: Cui) -> Option<&EdgeStat> {
        self.edges.get(&(source, dest))
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn self_loops_dropped(&self) -> u64 {
        self.self_loops_dropped
    }

    pub fn total_pair_count(&self) -> u64 {
        self.edges.values().map(|e| e.pair_count).sum()
    }

    pub fn out_edges(&self, source: Cui) -> impl Iterator<Item = &EdgeStat> {
        self.edges
            .range((source, Cui::from_number(0).unwrap())..=(source, Cui::from_number(Cui::MAX_NUMBER).unwrap()))
            .map(|(_, e)| e)
    }

    pub fn in_edges(&self, dest: Cui) -> impl Iterator<Item = &EdgeStat> + '_ {
        self.edges.values().filter(move |e| e.dest_cui == dest)
    }

    /// Strongest out-edge: max weight, then pair count desc, then dest asc.
    pub fn best_out_edge(&self, source: Cui) -> Option<&EdgeStat> {
        self.out_edges(source).min_by(|a, b| {
            b.weight
                .cmp(&a.weight)
                .then(b.pair_count.cmp(&a.pair_count))
                .then(a.dest_cui.cmp(&b.dest_cui))
        })
    }

    /// Strongest in-edge by share of the destination's frequency, then pair
    /// count desc, then source asc.
    pub fn best_in_edge(&self, dest: Cui) -> Option<(&EdgeStat, Ratio)> {
        let freq = self.nodes.get(&dest)?.destination_frequency;
        if freq == 0 {
            return None;
        }
        self.in_edges(dest)
            .map(|e| (e, Ratio::new(e.pair_count, freq)))
            .min_by(|(a, ra), (b, rb)| {
                rb.cmp(ra)
                    .then(b.pair_count.cmp(&a.pair_count))
                    .then(a.source_cui.cmp(&b.source_cui))
            })
    }

    /// Most frequently misdiagnosed diseases.
    pub fn top_sources(&self, k: usize) -> Vec<RankedRow> {
        let mut ranked: Vec<&NodeStat> = self.nodes.values().filter(|n| n.source_frequency > 0).collect();
        ranked.sort_by(|a, b| b.source_frequency.cmp(&a.source_frequency).then(a.cui.cmp(&b.cui)));
        ranked
            .into_iter()
            .take(k)
            .map(|n| {
                let e = self.best_out_edge(n.cui).expect("source node has an out-edge");
                RankedRow {
                    node: n.clone(),
                    best_cui: e.dest_cui,
                    best_label: self.nodes[&e.dest_cui].label.clone(),
                    best_pair_count: e.pair_count,
                    best_frequency: e.weight,
                }
            })
            .collect()
    }

    /// Diseases most often given as the wrong diagnosis.
    pub fn top_destinations(&self, k: usize) -> Vec<RankedRow> {
        let mut ranked: Vec<&NodeStat> = self.nodes.values().filter(|n| n.destination_frequency > 0).collect();
        ranked.sort_by(|a, b| {
            b.destination_frequency
                .cmp(&a.destination_frequency)
                .then(a.cui.cmp(&b.cui))
        });
        ranked
            .into_iter()
            .take(k)
            .map(|n| {
                let (e, share) = self.best_in_edge(n.cui).expect("destination node has an in-edge");
                RankedRow {
                    node: n.clone(),
                    best_cui: e.source_cui,
                    best_label: self.nodes[&e.source_cui].label.clone(),
                    best_pair_count: e.pair_count,
                    best_frequency: share,
                }
            })
            .collect()
    }

    /// For each top source, whether its strongest misdiagnosis is ever
    /// reported in the opposite direction.
    pub fn reverse_pair_report(&self, k: usize) -> Vec<ReverseRow> {
        self.top_sources(k)
            .into_iter()
            .map(|row| ReverseRow {
                source_cui: row.node.cui,
                best_dest_cui: row.best_cui,
                forward_weight: row.best_frequency,
                reverse_weight: self.edge(row.best_cui, row.node.cui).map(|e| e.weight),
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(n: u32) -> Cui {
        Cui::from_number(n).unwrap()
    }

    fn graph(pairs: &[(u32, u32)]) -> MisdxGraph {
        let mut counts = PairCounts::default();
        for &(s, d) in pairs {
            counts.add_edge(c(s), c(d));
        }
        counts.finalize(&BTreeMap::new())
    }

    const A: u32 = 1;
    const B: u32 = 2;
    const C: u32 = 3;
    const D: u32 = 4;

    #[test]
    fn ratio_rendering() {
        assert_eq!(Ratio::new(1, 3).to_fixed(4), "0.3333");
        assert_eq!(Ratio::new(2, 3).to_fixed(4), "0.6667");
        assert_eq!(Ratio::new(7, 68).to_fixed(4), "0.1029");
        assert_eq!(Ratio::new(1, 1).to_fixed(4), "1.0000");
        assert_eq!(Ratio::new(1, 8).to_fixed(3), "0.125");
        assert_eq!(Ratio::new(1, 16).to_fixed(3), "0.063");
        assert_eq!(Ratio::new(0, 5).to_fixed(4), "0.0000");
        assert!(Ratio::new(1, 3) < Ratio::new(34, 100));
    }

    #[test]
    fn weights_and_frequencies() {
        let g = graph(&[(A, B), (A, B), (A, C)]);
        let a = g.node(c(A)).unwrap();
        assert_eq!(a.source_frequency, 3);
        assert_eq!(a.out_degree, 2);
        assert_eq!(g.edge(c(A), c(B)).unwrap().weight.to_fixed(4), "0.6667");
        assert_eq!(g.edge(c(A), c(C)).unwrap().weight.to_fixed(4), "0.3333");
    }

    #[test]
    fn self_loops_dropped_first() {
        let g = graph(&[(A, A)]);
        assert_eq!(g.node_count(), 0);
        assert_eq!(g.self_loops_dropped(), 1);
    }

    #[test]
    fn table_precision() {
        let mut pairs = vec![(A, B); 7];
        pairs.extend(std::iter::repeat_n((A, C), 61));
        let g = graph(&pairs);
        assert_eq!(g.node(c(A)).unwrap().source_frequency, 68);
        assert_eq!(g.edge(c(A), c(B)).unwrap().weight.to_fixed(4), "0.1029");
    }

    #[test]
    fn ranking_sources() {
        let g = graph(&[(A, B), (A, B), (A, C), (D, B)]);
        let rows = g.top_sources(2);
        let got: Vec<_> = rows.iter().map(|r| (r.node.cui, r.node.source_frequency)).collect();
        assert_eq!(got, vec![(c(A), 3), (c(D), 1)]);
        assert_eq!(rows[0].best_cui, c(B));
        assert!(graph(&[]).top_sources(5).is_empty());
    }

    #[test]
    fn ranking_destinations() {
        let g = graph(&[(A, B), (A, B), (C, B)]);
        let rows = g.top_destinations(1);
        assert_eq!(rows.len(), 1);
        let r = &rows[0];
        assert_eq!(
            (r.node.cui, r.node.destination_frequency, r.node.in_degree),
            (c(B), 3, 2)
        );
        assert_eq!(r.best_cui, c(A));
        assert_eq!(r.best_frequency.to_fixed(4), "0.6667");
        assert!(graph(&[]).top_destinations(5).is_empty());
    }

    #[test]
    fn reverse_report() {
        let g = graph(&[(A, B), (B, A)]);
        let r = g.reverse_pair_report(1);
        assert_eq!(r[0].reverse_weight.unwrap().to_fixed(4), "1.0000");
        let g = graph(&[(A, B)]);
        assert_eq!(g.reverse_pair_report(5)[0].reverse_weight, None);
    }

    #[test]
    fn best_edge_ties() {
        let g = graph(&[(A, C), (A, B)]);
        assert_eq!(g.best_out_edge(c(A)).unwrap().dest_cui, c(B));
        let g = graph(&[(C, D), (B, D)]);
        assert_eq!(g.best_in_edge(c(D)).unwrap().0.source_cui, c(B));
    }

    #[test]
    fn centrality() {
        let g = graph(&[(A, B), (A, C), (B, C)]);
        assert_eq!(g.node(c(A)).unwrap().out_degree_centrality, Ratio::new(2, 2));
        assert_eq!(g.node(c(C)).unwrap().out_degree_centrality.num, 0);
    }

    /// Naive recomputation straight from the pair list.
    fn naive(pairs: &[(u32, u32)]) -> (BTreeMap<(u32, u32), (u64, f64)>, BTreeMap<u32, [u64; 4]>) {
        let kept: Vec<_> = pairs.iter().filter(|(s, d)| s != d).collect();
        let mut edges = BTreeMap::new();
        let mut nodes = BTreeMap::new();
        for &&(s, d) in &kept {
            let n = kept.iter().filter(|&&&(a, b)| a == s && b == d).count() as u64;
            let sf = kept.iter().filter(|&&&(a, _)| a == s).count() as u64;
            edges.insert((s, d), (n, n as f64 / sf as f64));
        }
        let all: BTreeSet<u32> = kept.iter().flat_map(|&&(s, d)| [s, d]).collect();
        for &v in &all {
            let sf = kept.iter().filter(|p| p.0 == v).count() as u64;
            let df = kept.iter().filter(|p| p.1 == v).count() as u64;
            let od = edges.keys().filter(|k| k.0 == v).count() as u64;
            let id = edges.keys().filter(|k| k.1 == v).count() as u64;
            nodes.insert(v, [sf, df, od, id]);
        }
        (edges, nodes)
    }

    proptest! {
        #[test]
        fn matches_naive_and_sums_to_one(pairs in prop::collection::vec((1u32..8, 1u32..8), 0..50), rot in 0usize..50) {
            let g = graph(&pairs);
            let (edges, nodes) = naive(&pairs);
            prop_assert_eq!(g.edge_count(), edges.len());
            for ((s, d), (n, w)) in &edges {
                let e = g.edge(c(*s), c(*d)).unwrap();
                prop_assert_eq!(e.pair_count, *n);
                prop_assert!((e.weight.to_f64() - w).abs() < 1e-12);
            }
            for (v, [sf, df, od, id]) in &nodes {
                let n = g.node(c(*v)).unwrap();
                prop_assert_eq!([n.source_frequency, n.destination_frequency, n.out_degree, n.in_degree], [*sf, *df, *od, *id]);
            }
            for n in g.nodes().filter(|n| n.out_degree > 0) {
                let sum: f64 = g.out_edges(n.cui).map(|e| e.weight.to_f64()).sum();
                prop_assert!((sum - 1.0).abs() <= 1e-9);
            }
            prop_assert_eq!(g.total_pair_count() + g.self_loops_dropped(), pairs.len() as u64);

            let mut rotated = pairs.clone();
            rotated.rotate_left(rot % pairs.len().max(1));
            prop_assert_eq!(graph(&rotated), g);
        }
    }
}
