//! Deterministic writers for the graph, the run report and stage checkpoints.
//!
//! All weights and centralities are rendered with four decimals, rounded
//! half-up from their exact ratios.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use quick_xml::escape::escape;
use serde::{Deserialize, Serialize};

use crate::config::ConfigEcho;
use crate::corpus::Citation;
use crate::graph::{EdgeStat, MisdxGraph, RankedRow, ReverseRow};
use crate::pairs::{RawPair, Rejection};
use crate::{Cui, Error, Result};

pub const EDGES_FILE: &str = "edges.tsv";
pub const NODES_FILE: &str = "nodes.tsv";
pub const DOT_FILE: &str = "graph.dot";
pub const GRAPHML_FILE: &str = "graph.graphml";
pub const REPORT_FILE: &str = "report.json";
pub const REJECTS_FILE: &str = "rejects.tsv";
pub const PAIRS_FILE: &str = "pairs.tsv";
pub const TITLES_FILE: &str = "titles.tsv";
pub const CORPUS_STATS_FILE: &str = "corpus_stats.json";
pub const CANONICAL_FILE: &str = "canonical.tsv";
pub const TOP_SOURCES_FILE: &str = "top_sources.tsv";
pub const TOP_DESTINATIONS_FILE: &str = "top_destinations.tsv";
pub const REVERSE_FILE: &str = "reverse_pairs.tsv";

const PLACES: u32 = 4;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub files_read: u64,
    pub files_failed: u64,
    pub citations_scanned: u64,
    pub records_skipped_malformed: u64,
    pub titles_with_cue: u64,
    pub titles_selected: u64,
    pub pairs_extracted: u64,
    pub self_loops_dropped: u64,
    pub node_count: u64,
    pub edge_count: u64,
    pub rejection_breakdown: BTreeMap<Rejection, u64>,
    pub config_echo: ConfigEcho,
}

impl RunReport {
    pub fn rejected(&self) -> u64 {
        self.rejection_breakdown.values().sum()
    }

    /// Both bookkeeping identities of a finished run.
    pub fn is_consistent(&self) -> bool {
        self.titles_selected == self.pairs_extracted && self.titles_with_cue == self.titles_selected + self.rejected()
    }
}

/// Creates `path` and hands a buffered writer to `write`.
pub fn write_file(path: &Path, write: impl FnOnce(&mut dyn Write) -> io::Result<()>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    write(&mut out)
        .and_then(|_| out.flush())
        .map_err(|e| Error::io(path, e))
}

fn field(text: &str) -> String {
    text.replace(['\t', '\n', '\r'], " ")
}

/// Edges sorted by source, then weight descending, then destination.
pub fn sorted_edges(graph: &MisdxGraph) -> Vec<&EdgeStat> {
    let mut edges: Vec<&EdgeStat> = graph.edges().collect();
    edges.sort_by(|a, b| {
        a.source_cui
            .cmp(&b.source_cui)
            .then(b.weight.cmp(&a.weight))
            .then(a.dest_cui.cmp(&b.dest_cui))
    });
    edges
}

fn label(graph: &MisdxGraph, cui: Cui) -> &str {
    graph.node(cui).map_or("", |n| n.label.as_str())
}

pub fn write_edge_table(out: &mut dyn Write, graph: &MisdxGraph) -> io::Result<()> {
    writeln!(
        out,
        "source_cui\tsource_label\tdest_cui\tdest_label\tpair_count\tsource_frequency\tweight"
    )?;
    for e in sorted_edges(graph) {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            e.source_cui,
            field(label(graph, e.source_cui)),
            e.dest_cui,
            field(label(graph, e.dest_cui)),
            e.pair_count,
            e.weight.den,
            e.weight.to_fixed(PLACES)
        )?;
    }
    Ok(())
}

pub fn write_node_table(out: &mut dyn Write, graph: &MisdxGraph) -> io::Result<()> {
    writeln!(
        out,
        "cui\tlabel\tsource_frequency\tdestination_frequency\tout_degree\tin_degree\tout_degree_centrality"
    )?;
    for n in graph.nodes() {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            n.cui,
            field(&n.label),
            n.source_frequency,
            n.destination_frequency,
            n.out_degree,
            n.in_degree,
            n.out_degree_centrality.to_fixed(PLACES)
        )?;
    }
    Ok(())
}

fn dot_quote(text: &str) -> String {
    let mut s = String::with_capacity(text.len() + 2);
    s.push('"');
    for c in text.chars() {
        match c {
            '"' => s.push_str("\\\""),
            '\\' => s.push_str("\\\\"),
            '\n' | '\r' => s.push(' '),
            c => s.push(c),
        }
    }
    s.push('"');
    s
}

/// Node size follows `out_degree_centrality`, edge darkness follows `weight`.
pub fn write_dot(out: &mut dyn Write, graph: &MisdxGraph) -> io::Result<()> {
    writeln!(out, "digraph misdiagnosis {{")?;
    for n in graph.nodes() {
        writeln!(
            out,
            "  {} [label={}, out_degree_centrality=\"{}\"];",
            dot_quote(&n.cui.to_string()),
            dot_quote(&n.label),
            n.out_degree_centrality.to_fixed(PLACES)
        )?;
    }
    for e in graph.edges() {
        writeln!(
            out,
            "  {} -> {} [weight=\"{}\", pair_count={}];",
            dot_quote(&e.source_cui.to_string()),
            dot_quote(&e.dest_cui.to_string()),
            e.weight.to_fixed(PLACES),
            e.pair_count
        )?;
    }
    writeln!(out, "}}")
}

pub fn write_graphml(out: &mut dyn Write, graph: &MisdxGraph) -> io::Result<()> {
    writeln!(out, r#"<?xml version="1.0" encoding="UTF-8"?>"#)?;
    writeln!(
        out,
        r#"<graphml xmlns="http://graphml.graphdrawing.org/xmlns" xmlns:xsi="http://www.w3.org/2001/XMLSchema-instance" xsi:schemaLocation="http://graphml.graphdrawing.org/xmlns http://graphml.graphdrawing.org/xmlns/1.0/graphml.xsd">"#
    )?;
    let keys = [
        ("label", "node", "string"),
        ("source_frequency", "node", "int"),
        ("destination_frequency", "node", "int"),
        ("out_degree", "node", "int"),
        ("in_degree", "node", "int"),
        ("out_degree_centrality", "node", "double"),
        ("weight", "edge", "double"),
        ("pair_count", "edge", "int"),
    ];
    for (id, domain, ty) in keys {
        writeln!(
            out,
            r#"  <key id="{id}" for="{domain}" attr.name="{id}" attr.type="{ty}"/>"#
        )?;
    }
    writeln!(out, r#"  <graph id="misdiagnosis" edgedefault="directed">"#)?;
    for n in graph.nodes() {
        writeln!(out, r#"    <node id="{}">"#, n.cui)?;
        writeln!(out, r#"      <data key="label">{}</data>"#, escape(n.label.as_str()))?;
        writeln!(
            out,
            r#"      <data key="source_frequency">{}</data>"#,
            n.source_frequency
        )?;
        writeln!(
            out,
            r#"      <data key="destination_frequency">{}</data>"#,
            n.destination_frequency
        )?;
        writeln!(out, r#"      <data key="out_degree">{}</data>"#, n.out_degree)?;
        writeln!(out, r#"      <data key="in_degree">{}</data>"#, n.in_degree)?;
        writeln!(
            out,
            r#"      <data key="out_degree_centrality">{}</data>"#,
            n.out_degree_centrality.to_fixed(PLACES)
        )?;
        writeln!(out, "    </node>")?;
    }
    for (i, e) in graph.edges().enumerate() {
        writeln!(
            out,
            r#"    <edge id="e{i}" source="{}" target="{}">"#,
            e.source_cui, e.dest_cui
        )?;
        writeln!(out, r#"      <data key="weight">{}</data>"#, e.weight.to_fixed(PLACES))?;
        writeln!(out, r#"      <data key="pair_count">{}</data>"#, e.pair_count)?;
        writeln!(out, "    </edge>")?;
    }
    writeln!(out, "  </graph>")?;
    writeln!(out, "</graphml>")
}

pub fn write_report(out: &mut dyn Write, report: &RunReport) -> io::Result<()> {
    serde_json::to_writer_pretty(&mut *out, report)?;
    writeln!(out)
}

pub fn write_top_table(out: &mut dyn Write, rows: &[RankedRow], incoming: bool) -> io::Result<()> {
    let (freq, degree, best) = if incoming {
        ("destination_frequency", "in_degree", "most_frequent_correct")
    } else {
        ("source_frequency", "out_degree", "most_frequently_mistaken_as")
    };
    writeln!(
        out,
        "rank\tcui\tlabel\t{freq}\t{degree}\t{best}_cui\t{best}_label\tpair_count\tfrequency"
    )?;
    for (i, r) in rows.iter().enumerate() {
        let (f, d) = if incoming {
            (r.node.destination_frequency, r.node.in_degree)
        } else {
            (r.node.source_frequency, r.node.out_degree)
        };
        writeln!(
            out,
            "{}\t{}\t{}\t{f}\t{d}\t{}\t{}\t{}\t{}",
            i + 1,
            r.node.cui,
            field(&r.node.label),
            r.best_cui,
            field(&r.best_label),
            r.best_pair_count,
            r.best_frequency.to_fixed(PLACES)
        )?;
    }
    Ok(())
}

pub fn write_reverse_table(out: &mut dyn Write, rows: &[ReverseRow]) -> io::Result<()> {
    writeln!(out, "source_cui\tbest_dest_cui\tforward_weight\treverse_weight")?;
    for r in rows {
        let reverse = r
            .reverse_weight
            .map_or_else(|| "absent".to_string(), |w| w.to_fixed(PLACES));
        writeln!(
            out,
            "{}\t{}\t{}\t{reverse}",
            r.source_cui,
            r.best_dest_cui,
            r.forward_weight.to_fixed(PLACES)
        )?;
    }
    Ok(())
}

pub fn write_rejects(out: &mut dyn Write, rejects: &[(String, Rejection)]) -> io::Result<()> {
    writeln!(out, "pmid\treason")?;
    for (pmid, reason) in rejects {
        writeln!(out, "{pmid}\t{reason}")?;
    }
    Ok(())
}

/// Pairs checkpoint: `pmid, source_cui, dest_cui, title`.
pub fn write_pairs(out: &mut dyn Write, pairs: &[RawPair]) -> io::Result<()> {
    writeln!(out, "pmid\tsource_cui\tdest_cui\ttitle")?;
    for p in pairs {
        writeln!(out, "{}\t{}\t{}\t{}", p.pmid, p.source_cui, p.dest_cui, field(&p.title))?;
    }
    Ok(())
}

pub fn write_titles(out: &mut dyn Write, titles: &[Citation]) -> io::Result<()> {
    writeln!(out, "pmid\ttitle")?;
    for c in titles {
        writeln!(out, "{}\t{}", c.pmid, field(&c.title))?;
    }
    Ok(())
}

pub fn write_canonical(out: &mut dyn Write, mapping: &BTreeMap<Cui, Cui>) -> io::Result<()> {
    writeln!(out, "cui\tcanonical_cui")?;
    for (k, v) in mapping {
        writeln!(out, "{k}\t{v}")?;
    }
    Ok(())
}

/// Reads a headed TSV, skipping the header, returning (line number, columns).
fn read_rows(path: &Path, expected_cols: usize) -> Result<Vec<(usize, Vec<String>)>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if i == 0 || line.is_empty() {
            continue;
        }
        let cols: Vec<String> = line.splitn(expected_cols, '\t').map(str::to_string).collect();
        if cols.len() != expected_cols {
            return Err(Error::load(
                path,
                i + 1,
                format!("expected {expected_cols} columns, found {}", cols.len()),
            ));
        }
        rows.push((i + 1, cols));
    }
    Ok(rows)
}

pub fn read_pairs(path: &Path) -> Result<Vec<RawPair>> {
    read_rows(path, 4)?
        .into_iter()
        .map(|(line, cols)| {
            let cui = |s: &str| s.parse::<Cui>().map_err(|e| Error::load(path, line, e.to_string()));
            Ok(RawPair {
                pmid: cols[0].clone(),
                source_cui: cui(&cols[1])?,
                dest_cui: cui(&cols[2])?,
                title: cols[3].clone(),
            })
        })
        .collect()
}

pub fn read_rejects(path: &Path) -> Result<Vec<(String, Rejection)>> {
    read_rows(path, 2)?
        .into_iter()
        .map(|(line, cols)| {
            let reason = cols[1].parse().map_err(|e: String| Error::load(path, line, e))?;
            Ok((cols[0].clone(), reason))
        })
        .collect()
}

pub fn read_titles(path: &Path) -> Result<Vec<Citation>> {
    Ok(read_rows(path, 2)?
        .into_iter()
        .map(|(_, mut cols)| Citation {
            title: cols.pop().unwrap_or_default(),
            pmid: cols.pop().unwrap_or_default(),
        })
        .collect())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoredCorpusStats {
    pub files_read: u64,
    pub files_failed: u64,
    pub citations_scanned: u64,
    pub records_skipped_malformed: u64,
}
