//! Relations lookup against the UMLS terminology service (UTS) REST API.
//!
//! Each CUI is queried at `{base}/content/{version}/CUI/{cui}/relations`.
//! Results are filtered to the six hierarchy/synonymy codes and emitted in
//! the local relations-file convention: a related concept `R` reported with
//! label `L` for the queried concept `Q` becomes the row `R L Q` ("R is the
//! parent of Q" for `PAR`). Successful lookups are cached to a JSON file so
//! that repeat runs need no network.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::PathBuf;
use std::thread;
use std::time::Duration;

use serde::Deserialize;

use crate::canonical::{Relation, RelationRow};
use crate::{Cui, Error, Result};

pub const API_KEY_ENV: &str = "UMLS_API_KEY";
pub const DEFAULT_BASE_URL: &str = "https://uts-ws.nlm.nih.gov/rest";

/// Secret credential; never printed.
#[derive(Clone, PartialEq, Eq)]
pub struct ApiKey(String);

impl ApiKey {
    pub fn new(key: impl Into<String>) -> Self {
        ApiKey(key.into())
    }

    pub fn from_env() -> Result<Self> {
        match std::env::var(API_KEY_ENV) {
            Ok(k) if !k.trim().is_empty() => Ok(ApiKey(k.trim().to_string())),
            _ => Err(Error::Config(format!(
                "remote relation fetch requires the {API_KEY_ENV} environment variable"
            ))),
        }
    }

    fn expose(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for ApiKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("ApiKey(<redacted>)")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpResponse {
    pub status: u16,
    pub body: String,
}

/// Minimal HTTP GET abstraction so the client can be driven without a network.
pub trait Transport {
    /// `Err` only for transport-level failures (DNS, connect, timeout).
    fn get(&self, url: &str) -> std::result::Result<HttpResponse, String>;
}

pub struct UreqTransport {
    agent: ureq::Agent,
}

impl UreqTransport {
    pub fn new(timeout: Duration) -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build();
        UreqTransport {
            agent: ureq::Agent::new_with_config(config),
        }
    }
}

impl Transport for UreqTransport {
    fn get(&self, url: &str) -> std::result::Result<HttpResponse, String> {
        let mut resp = self.agent.get(url).call().map_err(|e| strip_query(&e.to_string()))?;
        let status = resp.status().as_u16();
        let body = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| strip_query(&e.to_string()))?;
        Ok(HttpResponse { status, body })
    }
}

// transport errors may echo the URL, which carries the key
fn strip_query(message: &str) -> String {
    message
        .split_whitespace()
        .map(|w| match w.find('?') {
            Some(i) if w.contains("apiKey=") => &w[..i],
            _ => w,
        })
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Debug, Clone)]
pub struct FetchConfig {
    pub base_url: String,
    pub version: String,
    pub page_size: usize,
    pub max_retries: u32,
    pub initial_backoff: Duration,
    pub max_backoff: Duration,
    pub cache_path: Option<PathBuf>,
}

impl Default for FetchConfig {
    fn default() -> Self {
        FetchConfig {
            base_url: DEFAULT_BASE_URL.to_string(),
            version: "current".to_string(),
            page_size: 200,
            max_retries: 4,
            initial_backoff: Duration::from_millis(500),
            max_backoff: Duration::from_secs(8),
            cache_path: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FetchOutcome {
    /// Sorted, deduplicated rows for every CUI that resolved.
    pub rows: Vec<RelationRow>,
    /// CUIs whose lookup failed after retries, with the last error.
    pub errors: BTreeMap<Cui, String>,
    pub requests: u64,
    pub served_from_cache: usize,
}

pub struct RelationsClient<T: Transport> {
    transport: T,
    key: ApiKey,
    config: FetchConfig,
}

#[derive(Deserialize)]
struct Page {
    #[serde(rename = "pageCount", default)]
    page_count: Option<u64>,
    #[serde(default)]
    result: Vec<RelationResult>,
}

#[derive(Deserialize)]
struct RelationResult {
    #[serde(rename = "relationLabel")]
    relation_label: String,
    #[serde(rename = "relatedId")]
    related_id: String,
}

type Cache = BTreeMap<Cui, Vec<RelationRow>>;

enum Attempt {
    Done(HttpResponse),
    Retry(String),
    Fail(String),
}

impl<T: Transport> RelationsClient<T> {
    pub fn new(transport: T, key: ApiKey, config: FetchConfig) -> Self {
        RelationsClient { transport, key, config }
    }

    pub fn fetch(&self, cuis: &BTreeSet<Cui>) -> Result<FetchOutcome> {
        let mut outcome = FetchOutcome::default();
        if cuis.is_empty() {
            return Ok(outcome);
        }
        let mut cache = self.load_cache()?;
        let mut dirty = false;
        for &cui in cuis {
            if cache.contains_key(&cui) {
                outcome.served_from_cache += 1;
                continue;
            }
            match self.fetch_one(cui, &mut outcome.requests) {
                Ok(rows) => {
                    cache.insert(cui, rows);
                    dirty = true;
                }
                Err(e) => {
                    log::warn!("relations lookup for {cui} failed: {e}");
                    outcome.errors.insert(cui, e);
                }
            }
        }
        if dirty {
            self.store_cache(&cache)?;
        }
        let rows: BTreeSet<RelationRow> = cuis.iter().filter_map(|c| cache.get(c)).flatten().copied().collect();
        outcome.rows = rows.into_iter().collect();
        Ok(outcome)
    }

    fn url(&self, cui: Cui, page: u64) -> String {
        format!(
            "{}/content/{}/CUI/{}/relations?pageNumber={}&pageSize={}&apiKey={}",
            self.config.base_url.trim_end_matches('/'),
            self.config.version,
            cui,
            page,
            self.config.page_size,
            self.key.expose()
        )
    }

    fn fetch_one(&self, cui: Cui, requests: &mut u64) -> std::result::Result<Vec<RelationRow>, String> {
        let mut rows = BTreeSet::new();
        let mut page = 1u64;
        loop {
            let resp = self.get_with_retry(&self.url(cui, page), requests)?;
            if resp.status == 404 {
                // the service answers 404 for concepts without relations
                break;
            }
            let parsed: Page = serde_json::from_str(&resp.body).map_err(|e| format!("bad JSON: {e}"))?;
            for r in parsed.result {
                if let Some(row) = to_row(cui, &r) {
                    rows.insert(row);
                }
            }
            match parsed.page_count {
                Some(n) if page < n => page += 1,
                _ => break,
            }
        }
        Ok(rows.into_iter().collect())
    }

    fn get_with_retry(&self, url: &str, requests: &mut u64) -> std::result::Result<HttpResponse, String> {
        let mut delay = self.config.initial_backoff;
        let mut attempt = 0;
        loop {
            *requests += 1;
            let result = match self.transport.get(url) {
                Ok(r) if r.status == 200 || r.status == 404 => Attempt::Done(r),
                Ok(r) if matches!(r.status, 401 | 403 | 408 | 429) || r.status >= 500 => {
                    Attempt::Retry(format!("HTTP {}", r.status))
                }
                Ok(r) => Attempt::Fail(format!("HTTP {}", r.status)),
                Err(e) => Attempt::Retry(e),
            };
            match result {
                Attempt::Done(r) => return Ok(r),
                Attempt::Fail(e) => return Err(e),
                Attempt::Retry(e) if attempt >= self.config.max_retries => return Err(e),
                Attempt::Retry(_) => {
                    attempt += 1;
                    if !delay.is_zero() {
                        thread::sleep(delay);
                    }
                    delay = (delay * 2).min(self.config.max_backoff);
                }
            }
        }
    }

    fn load_cache(&self) -> Result<Cache> {
        let Some(path) = &self.config.cache_path else {
            return Ok(Cache::new());
        };
        match fs::read_to_string(path) {
            Ok(text) => serde_json::from_str(&text)
                .map_err(|e| Error::Remote(format!("unreadable cache {}: {e}", path.display()))),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Cache::new()),
            Err(e) => Err(Error::io(path, e)),
        }
    }

    fn store_cache(&self, cache: &Cache) -> Result<()> {
        let Some(path) = &self.config.cache_path else {
            return Ok(());
        };
        let text = serde_json::to_string_pretty(cache).expect("cache serializes");
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, text).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }
}

fn to_row(queried: Cui, r: &RelationResult) -> Option<RelationRow> {
    let rel: Relation = r.relation_label.parse().ok()?;
    let related: Cui = r.related_id.rsplit('/').next()?.parse().ok()?;
    (related != queried).then_some(RelationRow {
        cui_a: related,
        rel,
        cui_b: queried,
    })
}

/// Fetches relations for `cuis` over HTTPS with default settings.
pub fn fetch_relations_remote(cuis: &BTreeSet<Cui>, key: ApiKey, config: FetchConfig) -> Result<FetchOutcome> {
    RelationsClient::new(UreqTransport::new(Duration::from_secs(30)), key, config).fetch(cuis)
}
