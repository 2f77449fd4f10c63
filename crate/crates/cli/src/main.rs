//! `misdx`: mine misdiagnosis pairs from MEDLINE titles into a weighted graph.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use misdx_core::canonical::{CanonicalOptions, ParentMode, RuleOrder};
use misdx_core::config::{PipelineConfig, RelationsSource};
use misdx_core::export::{PAIRS_FILE, TITLES_FILE};
use misdx_core::pipeline;

#[derive(Parser, Debug)]
#[command(name = "misdx", version, about = "Misdiagnosis graph mining over MEDLINE titles")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run every stage and write all outputs.
    Run(Common),
    /// Stream the baseline and keep cue-bearing titles (titles.tsv).
    Filter(Common),
    /// Match concepts in a titles checkpoint (pairs.tsv, rejects.tsv).
    Extract {
        #[command(flatten)]
        common: Common,
        /// Titles checkpoint; defaults to titles.tsv in the output directory.
        #[arg(long)]
        titles: Option<PathBuf>,
    },
    /// Canonicalize a pairs checkpoint and write the graph outputs.
    Graph {
        #[command(flatten)]
        common: Common,
        /// Pairs checkpoint; defaults to pairs.tsv in the output directory.
        #[arg(long)]
        pairs: Option<PathBuf>,
    },
}

#[derive(Args, Debug, Default)]
struct Common {
    /// TOML config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Baseline XML files or directories (.xml / .xml.gz).
    #[arg(long, num_args = 1..)]
    baseline: Vec<PathBuf>,
    /// Dictionary TSV: cui, tui, term, preferred term.
    #[arg(long)]
    dictionary: Option<PathBuf>,
    /// Relations TSV: cui_a, rel, cui_b.
    #[arg(long, conflicts_with = "fetch_relations")]
    relations: Option<PathBuf>,
    /// Fetch relations from the UMLS REST API (needs UMLS_API_KEY).
    #[arg(long)]
    fetch_relations: bool,
    /// Cache file for fetched relations.
    #[arg(long)]
    relations_cache: Option<PathBuf>,
    /// Comma-separated cue phrases.
    #[arg(long, value_delimiter = ',')]
    phrases: Option<Vec<String>>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    gram: Option<usize>,
    /// Maximum tokens per candidate span.
    #[arg(long)]
    window: Option<usize>,
    /// Comma-separated semantic types to keep.
    #[arg(long, value_delimiter = ',')]
    tuis: Option<Vec<String>>,
    #[arg(long, value_enum)]
    parent_mode: Option<ParentModeArg>,
    #[arg(long, value_enum)]
    rule_order: Option<RuleOrderArg>,
    /// Rows in the ranked tables.
    #[arg(long)]
    top_k: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(clap::ValueEnum, Clone, Copy, Debug)]
enum ParentModeArg {
    Transitive,
    SingleStep,
}

#[derive(clap::ValueEnum, Clone, Copy, Debug)]
enum RuleOrderArg {
    ParentsFirst,
    SynonymsFirst,
}

/// Config file layout. Relative paths resolve against the file's directory.
#[derive(Deserialize, Debug, Default)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    baseline: Option<Vec<PathBuf>>,
    dictionary: Option<PathBuf>,
    relations: Option<PathBuf>,
    fetch_relations: Option<bool>,
    relations_cache: Option<PathBuf>,
    phrases: Option<Vec<String>>,
    similarity_threshold: Option<f64>,
    gram_size: Option<usize>,
    max_window_tokens: Option<usize>,
    allowed_tuis: Option<Vec<String>>,
    parent_mode: Option<ParentMode>,
    rule_order: Option<RuleOrder>,
    top_k: Option<usize>,
    out_dir: Option<PathBuf>,
    workers: Option<usize>,
}

impl FileConfig {
    fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg: FileConfig = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        cfg.baseline.iter_mut().flatten().for_each(rebase);
        for p in [
            &mut cfg.dictionary,
            &mut cfg.relations,
            &mut cfg.relations_cache,
            &mut cfg.out_dir,
        ]
        .into_iter()
        .flatten()
        {
            rebase(p);
        }
        Ok(cfg)
    }
}

fn build_config(args: Common) -> anyhow::Result<PipelineConfig> {
    let file = match &args.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let mut cfg = PipelineConfig {
        baseline: if args.baseline.is_empty() {
            file.baseline.unwrap_or_default()
        } else {
            args.baseline
        },
        ..PipelineConfig::default()
    };
    if let Some(d) = args.dictionary.or(file.dictionary) {
        cfg.dictionary = d;
    }
    let cache = args.relations_cache.or(file.relations_cache);
    cfg.relations = if let Some(r) = args.relations {
        RelationsSource::File(r)
    } else if args.fetch_relations {
        RelationsSource::Remote { cache }
    } else {
        match (file.relations, file.fetch_relations.unwrap_or(false)) {
            (Some(_), true) => bail!("config sets both relations and fetch_relations"),
            (Some(r), false) => RelationsSource::File(r),
            (None, true) => RelationsSource::Remote { cache },
            (None, false) => RelationsSource::None,
        }
    };
    if let Some(p) = args.phrases.or(file.phrases) {
        cfg.phrases = p;
    }
    if let Some(t) = args.threshold.or(file.similarity_threshold) {
        cfg.matcher.similarity_threshold = t;
    }
    if let Some(g) = args.gram.or(file.gram_size) {
        cfg.matcher.gram_size = g;
    }
    if let Some(w) = args.window.or(file.max_window_tokens) {
        cfg.matcher.max_window_tokens = w;
    }
    if let Some(t) = args.tuis.or(file.allowed_tuis) {
        cfg.matcher.allowed_tuis = t.into_iter().map(|s| s.trim().to_string()).collect::<BTreeSet<_>>();
    }
    cfg.canonical = CanonicalOptions {
        parent_mode: args
            .parent_mode
            .map(|m| match m {
                ParentModeArg::Transitive => ParentMode::Transitive,
                ParentModeArg::SingleStep => ParentMode::SingleStep,
            })
            .or(file.parent_mode)
            .unwrap_or_default(),
        rule_order: args
            .rule_order
            .map(|o| match o {
                RuleOrderArg::ParentsFirst => RuleOrder::ParentsFirst,
                RuleOrderArg::SynonymsFirst => RuleOrder::SynonymsFirst,
            })
            .or(file.rule_order)
            .unwrap_or_default(),
    };
    if let Some(k) = args.top_k.or(file.top_k) {
        cfg.top_k = k;
    }
    if let Some(o) = args.out.or(file.out_dir) {
        cfg.out_dir = o;
    }
    if let Some(w) = args.workers.or(file.workers) {
        cfg.workers = w;
    }
    Ok(cfg)
}

fn execute(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Run(common) => {
            let cfg = build_config(common)?;
            let report = pipeline::run_pipeline(&cfg)?;
            log::info!(
                "{} citations, {} cue titles, {} pairs, {} nodes, {} edges",
                report.citations_scanned,
                report.titles_with_cue,
                report.pairs_extracted,
                report.node_count,
                report.edge_count
            );
            println!("{}", cfg.out_dir.display());
        }
        Command::Filter(common) => {
            let cfg = build_config(common)?;
            let stats = pipeline::run_filter(&cfg)?;
            log::info!(
                "{} files, {} citations scanned",
                stats.files_read,
                stats.citations_scanned
            );
            println!("{}", cfg.out_dir.join(TITLES_FILE).display());
        }
        Command::Extract { common, titles } => {
            let cfg = build_config(common)?;
            if cfg.dictionary.as_os_str().is_empty() {
                bail!("extract needs --dictionary");
            }
            let titles = titles.unwrap_or_else(|| cfg.out_dir.join(TITLES_FILE));
            let (pairs, rejects) = pipeline::run_extract(&cfg, &titles)?;
            log::info!("{pairs} pairs, {rejects} rejected titles");
            println!("{}", cfg.out_dir.join(PAIRS_FILE).display());
        }
        Command::Graph { common, pairs } => {
            let cfg = build_config(common)?;
            let pairs = pairs.unwrap_or_else(|| cfg.out_dir.join(PAIRS_FILE));
            let report = pipeline::run_graph(&cfg, &pairs)?;
            log::info!("{} nodes, {} edges", report.node_count, report.edge_count);
            println!("{}", cfg.out_dir.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
