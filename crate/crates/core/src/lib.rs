//! Misdiagnosis-pattern mining over MEDLINE/PubMed article titles.
//!
//! The pipeline streams citations out of baseline XML, keeps titles that
//! carry a misdiagnosis cue phrase ("misdiagnosed as", "masquerading as"),
//! resolves disease mentions against a UMLS-derived dictionary, keeps titles
//! with exactly one concept on each side of the cue, collapses concepts by
//! parent/child and synonymy relations, and aggregates the surviving pairs
//! into a directed graph whose edge weights are normalized by the frequency
//! of the correct diagnosis.
//!
//! Each stage is usable on its own:
//!
//! - [`corpus`]: streaming PMID + title extraction from plain or gzip XML.
//! - [`cue`]: cue-phrase detection with character offsets.
//! - [`matcher`]: character n-gram dictionary matching and disambiguation.
//! - [`pairs`]: the exactly-two-concepts selection rule.
//! - [`canonical`]: parent/synonym canonicalization of extracted CUIs.
//! - [`remote`]: optional terminology-service client for relations.
//! - [`graph`]: the weighted misdiagnosis graph and ranked tables.
//! - [`export`]: TSV, DOT, GraphML and JSON writers.
//! - [`pipeline`]: end-to-end orchestration and stage checkpoints.

pub mod canonical;
pub mod config;
pub mod corpus;
pub mod cue;
mod cui;
mod error;
pub mod export;
pub mod graph;
pub mod matcher;
pub mod pairs;
pub mod pipeline;
pub mod remote;
mod text;

pub use cui::{Cui, ParseCuiError};
pub use error::{Error, Result};
pub use text::{collapse_whitespace, normalize, simple_lowercase};
