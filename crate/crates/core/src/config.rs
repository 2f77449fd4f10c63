//! Effective pipeline configuration.

use std::path::PathBuf;

use serde::Serialize;

use crate::canonical::CanonicalOptions;
use crate::cue::default_phrases;
use crate::matcher::MatcherParams;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Default)]
pub enum RelationsSource {
    /// No canonicalization: every CUI is its own representative.
    #[default]
    None,
    File(PathBuf),
    /// Query the terminology service, caching to `cache` (defaults to
    /// `relations_cache.json` in the output directory).
    Remote {
        cache: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub baseline: Vec<PathBuf>,
    pub dictionary: PathBuf,
    pub relations: RelationsSource,
    pub phrases: Vec<String>,
    pub matcher: MatcherParams,
    pub canonical: CanonicalOptions,
    /// Rows in the ranked tables.
    pub top_k: usize,
    pub out_dir: PathBuf,
    pub workers: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            baseline: Vec::new(),
            dictionary: PathBuf::new(),
            relations: RelationsSource::None,
            phrases: default_phrases(),
            matcher: MatcherParams::default(),
            canonical: CanonicalOptions::default(),
            top_k: 5,
            out_dir: PathBuf::from("out"),
            workers: 1,
        }
    }
}

/// The analysis-relevant part of the configuration, echoed into the run
/// report. Output location and worker count are left out: they cannot
/// change any result.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfigEcho {
    pub baseline: Vec<String>,
    pub dictionary: String,
    pub relations: Option<String>,
    pub fetch_relations: bool,
    pub phrases: Vec<String>,
    pub similarity_threshold: f64,
    pub gram_size: usize,
    pub max_window_tokens: usize,
    pub allowed_tuis: Vec<String>,
    pub parent_mode: crate::canonical::ParentMode,
    pub rule_order: crate::canonical::RuleOrder,
    pub top_k: usize,
}

impl PipelineConfig {
    /// Checks everything that can be checked without reading inputs.
    pub fn validate(&self) -> Result<()> {
        self.validate_common()?;
        if self.baseline.is_empty() {
            return Err(Error::Config("at least one baseline path is required".into()));
        }
        for p in &self.baseline {
            if !p.exists() {
                return Err(Error::Config(format!("baseline path {} does not exist", p.display())));
            }
        }
        Ok(())
    }

    /// Validation shared by every stage, baseline paths excepted.
    pub fn validate_common(&self) -> Result<()> {
        self.matcher.validate()?;
        if self.workers == 0 {
            return Err(Error::Config("worker count must be >= 1".into()));
        }
        if self.top_k == 0 {
            return Err(Error::Config("top_k must be >= 1".into()));
        }
        if self.phrases.is_empty() || self.phrases.iter().any(|p| p.trim().is_empty()) {
            return Err(Error::Config(
                "cue phrase list must be non-empty with non-empty phrases".into(),
            ));
        }
        if let RelationsSource::File(p) = &self.relations {
            if !p.is_file() {
                return Err(Error::Config(format!("relations file {} not found", p.display())));
            }
        }
        Ok(())
    }

    pub fn echo(&self) -> ConfigEcho {
        ConfigEcho {
            baseline: self.baseline.iter().map(|p| p.display().to_string()).collect(),
            dictionary: self.dictionary.display().to_string(),
            relations: match &self.relations {
                RelationsSource::File(p) => Some(p.display().to_string()),
                _ => None,
            },
            fetch_relations: matches!(self.relations, RelationsSource::Remote { .. }),
            phrases: self.phrases.clone(),
            similarity_threshold: self.matcher.similarity_threshold,
            gram_size: self.matcher.gram_size,
            max_window_tokens: self.matcher.max_window_tokens,
            allowed_tuis: self.matcher.allowed_tuis.iter().cloned().collect(),
            parent_mode: self.canonical.parent_mode,
            rule_order: self.canonical.rule_order,
            top_k: self.top_k,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_echo_threshold() {
        let echo = PipelineConfig::default().echo();
        assert_eq!(echo.similarity_threshold, 0.7);
        assert_eq!(echo.allowed_tuis, ["T047", "T191"]);
        assert_eq!(echo.phrases, ["misdiagnosed as", "masquerading as"]);
    }

    #[test]
    fn rejects_bad_values() {
        let mut c = PipelineConfig::default();
        assert!(c.validate().is_err(), "no baseline");
        c.baseline = vec![PathBuf::from(".")];
        assert!(c.validate().is_ok());
        c.workers = 0;
        assert!(c.validate().is_err());
        c.workers = 2;
        c.matcher.similarity_threshold = 1.5;
        assert!(c.validate().is_err());
        c.matcher.similarity_threshold = 0.7;
        c.phrases.clear();
        assert!(c.validate().is_err());
    }
}
