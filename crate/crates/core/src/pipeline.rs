//! End-to-end orchestration and the stage-wise entry points.
//!
//! Files are scanned in parallel and, inside a file, citations are matched
//! in parallel batches; results are reassembled in corpus order before
//! anything order-sensitive (first appearance, checkpoints) happens, so
//! output is identical for any worker count.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::canonical::{build_canonical_map, load_relations, CanonicalPair, RelationRow};
use crate::config::{PipelineConfig, RelationsSource};
use crate::corpus::{self, Citation, Compression, CorpusStats};
use crate::cue::find_cue;
use crate::export::{self as ex, write_file, RunReport, StoredCorpusStats};
use crate::graph::{MisdxGraph, PairCounts};
use crate::matcher::{discard_cue_overlaps, group_and_disambiguate, load_dictionary, DictionaryIndex};
use crate::pairs::{empty_breakdown, extract_pair, RawPair, Rejection};
use crate::remote::{fetch_relations_remote, ApiKey, FetchConfig};
use crate::{Cui, Error, Result};

const BATCH: usize = 2048;

/// Outcome for one cue-bearing title.
#[derive(Debug, Clone, PartialEq)]
pub struct TitleOutcome {
    pub pmid: String,
    pub result: std::result::Result<RawPair, Rejection>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScanResult {
    pub stats: CorpusStats,
    pub files_failed: u64,
    /// Cue-bearing titles in corpus order.
    pub cue_titles: Vec<Citation>,
}

/// Cue detection, matching, disambiguation and pair selection for one title.
/// `None` when the title carries no cue phrase.
pub fn process_title(index: &DictionaryIndex, phrases: &[String], citation: &Citation) -> Option<TitleOutcome> {
    let cue = find_cue(&citation.title, phrases)?;
    let matches = discard_cue_overlaps(index.match_title(&citation.title), &cue);
    let groups = group_and_disambiguate(matches);
    Some(TitleOutcome {
        pmid: citation.pmid.clone(),
        result: extract_pair(citation, &cue, &groups),
    })
}

/// Lists baseline files: explicit files as given, directories expanded to
/// their `.xml`/`.xml.gz` files in name order.
pub fn expand_baseline(paths: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(p)
                .map_err(|e| Error::io(p, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| {
                    let name = f.file_name().and_then(|n| n.to_str()).unwrap_or("");
                    f.is_file() && (name.ends_with(".xml") || name.ends_with(".xml.gz"))
                })
                .collect();
            found.sort();
            files.extend(found);
        } else {
            files.push(p.clone());
        }
    }
    Ok(files)
}

fn thread_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {workers} workers: {e}")))
}

/// Streams one file keeping only cue-bearing titles. A file that turns out
/// not to be well-formed XML keeps what was read before the error and is
/// reported as failed.
fn scan_file(path: &Path, phrases: &[String]) -> Result<ScanResult> {
    let mut stream = corpus::open(path, Compression::Auto)?;
    let mut result = ScanResult::default();
    let mut batch = Vec::with_capacity(BATCH);
    loop {
        let mut failed = false;
        for item in stream.by_ref() {
            match item {
                Ok(c) => batch.push(c),
                Err(e) => {
                    log::error!("{}: {e}", path.display());
                    failed = true;
                    break;
                }
            }
            if batch.len() == BATCH {
                break;
            }
        }
        let done = batch.len() < BATCH;
        let hits: Vec<Citation> = batch
            .par_drain(..)
            .filter(|c| find_cue(&c.title, phrases).is_some())
            .collect();
        result.cue_titles.extend(hits);
        if failed {
            result.files_failed = 1;
            break;
        }
        if done {
            break;
        }
    }
    result.stats = stream.stats();
    Ok(result)
}

/// Stage 1: stream the corpus and keep cue-bearing titles.
pub fn scan_corpus(config: &PipelineConfig) -> Result<ScanResult> {
    let files = expand_baseline(&config.baseline)?;
    let pool = thread_pool(config.workers)?;
    let per_file: Vec<Result<ScanResult>> =
        pool.install(|| files.par_iter().map(|f| scan_file(f, &config.phrases)).collect());
    let mut total = ScanResult::default();
    for r in per_file {
        let r = r?;
        total.stats += r.stats;
        total.files_failed += r.files_failed;
        total.cue_titles.extend(r.cue_titles);
    }
    Ok(total)
}

/// Stage 2: match and select pairs for cue-bearing titles, in input order.
pub fn extract_outcomes(
    config: &PipelineConfig,
    index: &DictionaryIndex,
    titles: &[Citation],
) -> Result<Vec<TitleOutcome>> {
    let pool = thread_pool(config.workers)?;
    Ok(pool.install(|| {
        titles
            .par_iter()
            .filter_map(|c| process_title(index, &config.phrases, c))
            .collect()
    }))
}

pub fn split_outcomes(outcomes: Vec<TitleOutcome>) -> (Vec<RawPair>, Vec<(String, Rejection)>) {
    let mut pairs = Vec::new();
    let mut rejects = Vec::new();
    for o in outcomes {
        match o.result {
            Ok(p) => pairs.push(p),
            Err(r) => rejects.push((o.pmid, r)),
        }
    }
    (pairs, rejects)
}

/// Ordinal of first appearance in the selected titles: pair `i` contributes
/// `2i` for its source and `2i + 1` for its destination, so within a title
/// the earlier mention comes first.
pub fn first_appearance(pairs: &[RawPair]) -> BTreeMap<Cui, u64> {
    let mut first = BTreeMap::new();
    for (i, p) in pairs.iter().enumerate() {
        let i = i as u64;
        first.entry(p.source_cui).or_insert(2 * i);
        first.entry(p.dest_cui).or_insert(2 * i + 1);
    }
    first
}

fn load_index(config: &PipelineConfig) -> Result<DictionaryIndex> {
    if !config.dictionary.is_file() {
        return Err(Error::Config(format!(
            "dictionary {} not found",
            config.dictionary.display()
        )));
    }
    load_dictionary(&config.dictionary, &config.matcher)
}

fn check_remote_key(config: &PipelineConfig) -> Result<Option<ApiKey>> {
    match config.relations {
        RelationsSource::Remote { .. } => ApiKey::from_env().map(Some),
        _ => Ok(None),
    }
}

fn resolve_relations(
    config: &PipelineConfig,
    key: Option<ApiKey>,
    extracted: &BTreeSet<Cui>,
) -> Result<Vec<RelationRow>> {
    match &config.relations {
        RelationsSource::None => Ok(Vec::new()),
        RelationsSource::File(p) => load_relations(p),
        RelationsSource::Remote { cache } => {
            let key = key.ok_or_else(|| Error::Internal("remote relations without key".into()))?;
            let fetch = FetchConfig {
                cache_path: Some(
                    cache
                        .clone()
                        .unwrap_or_else(|| config.out_dir.join("relations_cache.json")),
                ),
                ..FetchConfig::default()
            };
            let outcome = fetch_relations_remote(extracted, key, fetch)?;
            if !outcome.errors.is_empty() {
                log::warn!(
                    "relations unavailable for {} CUIs; they stay uncollapsed",
                    outcome.errors.len()
                );
            }
            let path = config.out_dir.join("relations.fetched.tsv");
            write_file(&path, |w| crate::canonical::write_relations(w, &outcome.rows))?;
            Ok(outcome.rows)
        }
    }
}

/// Everything downstream of pair extraction, shared by `run` and `graph`.
pub fn finish(
    config: &PipelineConfig,
    key: Option<ApiKey>,
    corpus: StoredCorpusStats,
    pairs: &[RawPair],
    rejects: &[(String, Rejection)],
    labels: &BTreeMap<Cui, String>,
) -> Result<(RunReport, MisdxGraph)> {
    let out = &config.out_dir;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;

    let extracted: BTreeSet<Cui> = pairs.iter().flat_map(|p| [p.source_cui, p.dest_cui]).collect();
    let relations = resolve_relations(config, key, &extracted)?;
    let map = build_canonical_map(&extracted, &first_appearance(pairs), &relations, config.canonical);
    let canonical: Vec<CanonicalPair> = pairs.iter().map(|p| map.apply(p)).collect::<Result<_>>()?;
    let graph = canonical.iter().collect::<PairCounts>().finalize(labels);

    let mut breakdown = empty_breakdown();
    for (_, r) in rejects {
        *breakdown.entry(*r).or_default() += 1;
    }
    let report = RunReport {
        files_read: corpus.files_read,
        files_failed: corpus.files_failed,
        citations_scanned: corpus.citations_scanned,
        records_skipped_malformed: corpus.records_skipped_malformed,
        titles_with_cue: (pairs.len() + rejects.len()) as u64,
        titles_selected: pairs.len() as u64,
        pairs_extracted: pairs.len() as u64,
        self_loops_dropped: graph.self_loops_dropped(),
        node_count: graph.node_count() as u64,
        edge_count: graph.edge_count() as u64,
        rejection_breakdown: breakdown,
        config_echo: config.echo(),
    };
    if graph.total_pair_count() + graph.self_loops_dropped() != report.pairs_extracted || !report.is_consistent() {
        return Err(Error::Internal("run bookkeeping does not balance".into()));
    }

    let k = config.top_k;
    write_file(&out.join(ex::PAIRS_FILE), |w| ex::write_pairs(w, pairs))?;
    write_file(&out.join(ex::REJECTS_FILE), |w| ex::write_rejects(w, rejects))?;
    write_file(&out.join(ex::CANONICAL_FILE), |w| ex::write_canonical(w, map.mapping()))?;
    write_file(&out.join(ex::EDGES_FILE), |w| ex::write_edge_table(w, &graph))?;
    write_file(&out.join(ex::NODES_FILE), |w| ex::write_node_table(w, &graph))?;
    write_file(&out.join(ex::DOT_FILE), |w| ex::write_dot(w, &graph))?;
    write_file(&out.join(ex::GRAPHML_FILE), |w| ex::write_graphml(w, &graph))?;
    write_file(&out.join(ex::TOP_SOURCES_FILE), |w| {
        ex::write_top_table(w, &graph.top_sources(k), false)
    })?;
    write_file(&out.join(ex::TOP_DESTINATIONS_FILE), |w| {
        ex::write_top_table(w, &graph.top_destinations(k), true)
    })?;
    write_file(&out.join(ex::REVERSE_FILE), |w| {
        ex::write_reverse_table(w, &graph.reverse_pair_report(k))
    })?;
    write_file(&out.join(ex::REPORT_FILE), |w| ex::write_report(w, &report))?;
    Ok((report, graph))
}

fn stored(scan: &ScanResult) -> StoredCorpusStats {
    StoredCorpusStats {
        files_read: scan.stats.files_read,
        files_failed: scan.files_failed,
        citations_scanned: scan.stats.citations_scanned,
        records_skipped_malformed: scan.stats.records_skipped_malformed,
    }
}

/// Single-shot run: corpus to graph and reports in `config.out_dir`.
pub fn run_pipeline(config: &PipelineConfig) -> Result<RunReport> {
    config.validate()?;
    let key = check_remote_key(config)?;
    let index = load_index(config)?;
    let scan = scan_corpus(config)?;
    let outcomes = extract_outcomes(config, &index, &scan.cue_titles)?;
    let (pairs, rejects) = split_outcomes(outcomes);
    let (report, _) = finish(config, key, stored(&scan), &pairs, &rejects, index.labels())?;
    Ok(report)
}

/// `filter` stage: writes `titles.tsv` and `corpus_stats.json`.
pub fn run_filter(config: &PipelineConfig) -> Result<StoredCorpusStats> {
    config.validate()?;
    let scan = scan_corpus(config)?;
    let out = &config.out_dir;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write_file(&out.join(ex::TITLES_FILE), |w| ex::write_titles(w, &scan.cue_titles))?;
    let stats = stored(&scan);
    write_file(&out.join(ex::CORPUS_STATS_FILE), |w| {
        serde_json::to_writer_pretty(&mut *w, &stats)?;
        writeln!(w)
    })?;
    Ok(stats)
}

/// `extract` stage: reads a titles checkpoint, writes `pairs.tsv` and
/// `rejects.tsv`.
pub fn run_extract(config: &PipelineConfig, titles: &Path) -> Result<(usize, usize)> {
    config.validate_common()?;
    let index = load_index(config)?;
    let titles = ex::read_titles(titles)?;
    let (pairs, rejects) = split_outcomes(extract_outcomes(config, &index, &titles)?);
    let out = &config.out_dir;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write_file(&out.join(ex::PAIRS_FILE), |w| ex::write_pairs(w, &pairs))?;
    write_file(&out.join(ex::REJECTS_FILE), |w| ex::write_rejects(w, &rejects))?;
    Ok((pairs.len(), rejects.len()))
}

/// `graph` stage: reads a pairs checkpoint (plus the rejects and corpus
/// statistics beside it, when present) and writes every graph output.
/// Labels come from the dictionary when one is configured.
pub fn run_graph(config: &PipelineConfig, pairs_path: &Path) -> Result<RunReport> {
    config.validate_common()?;
    let key = check_remote_key(config)?;
    let labels = if config.dictionary.as_os_str().is_empty() {
        BTreeMap::new()
    } else {
        load_index(config)?.labels().clone()
    };
    let pairs = ex::read_pairs(pairs_path)?;
    let dir = pairs_path.parent().unwrap_or(Path::new("."));
    let rejects_path = dir.join(ex::REJECTS_FILE);
    let rejects = if rejects_path.is_file() {
        ex::read_rejects(&rejects_path)?
    } else {
        Vec::new()
    };
    let stats_path = dir.join(ex::CORPUS_STATS_FILE);
    let corpus = match fs::read_to_string(&stats_path) {
        Ok(text) => serde_json::from_str(&text).map_err(|e| Error::load(&stats_path, e.line(), e.to_string()))?,
        Err(_) => StoredCorpusStats::default(),
    };
    let (report, _) = finish(config, key, corpus, &pairs, &rejects, &labels)?;
    Ok(report)
}
