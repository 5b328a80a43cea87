//! MediaWiki Action API client with pagination, retries, and an on-disk
//! response cache so re-runs are offline-reproducible.

use std::path::PathBuf;
use std::time::Duration;

use sha2::{Digest, Sha256};

use super::parse::{api_continue_token, parse_api_page};
use super::{BotPolicy, IngestError, PageHistory};

/// Environment variable overriding the API base URL.
pub const API_URL_ENV: &str = "EDIT_DYNAMICS_API_URL";

/// Default public endpoint.
pub const DEFAULT_ENDPOINT: &str = "https://en.wikipedia.org/w/api.php";

/// Minimal HTTP GET abstraction; swapped out in tests.
pub trait Transport: Send + Sync {
    fn get(&self, url: &str) -> Result<Vec<u8>, String>;
}

/// Blocking reqwest transport.
pub struct HttpTransport {
    client: reqwest::blocking::Client,
}

impl HttpTransport {
    pub fn new() -> Self {
        let client = reqwest::blocking::Client::builder()
            .user_agent("edit-dynamics/0.1 (research toolkit)")
            .timeout(Duration::from_secs(30))
            .build()
            .expect("reqwest client");
        Self { client }
    }
}

impl Default for HttpTransport {
    fn default() -> Self {
        Self::new()
    }
}

impl Transport for HttpTransport {
    fn get(&self, url: &str) -> Result<Vec<u8>, String> {
        let resp = self.client.get(url).send().map_err(|e| e.to_string())?;
        if !resp.status().is_success() {
            return Err(format!("http status {}", resp.status()));
        }
        resp.bytes().map(|b| b.to_vec()).map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone)]
pub struct ClientConfig {
    pub endpoint: String,
    pub cache_dir: Option<PathBuf>,
    pub offline: bool,
    pub max_attempts: u32,
    pub retry_backoff: Duration,
}

impl Default for ClientConfig {
    fn default() -> Self {
        Self {
            endpoint: std::env::var(API_URL_ENV).unwrap_or_else(|_| DEFAULT_ENDPOINT.into()),
            cache_dir: None,
            offline: false,
            max_attempts: 3,
            retry_backoff: Duration::from_millis(250),
        }
    }
}

pub struct ApiClient {
    config: ClientConfig,
    transport: Box<dyn Transport>,
    bot_policy: BotPolicy,
}

/// Percent-encode a query value (RFC 3986 unreserved set kept).
fn urlencode(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for b in s.bytes() {
        match b {
            b'A'..=b'Z' | b'a'..=b'z' | b'0'..=b'9' | b'-' | b'_' | b'.' | b'~' => {
                out.push(b as char)
            }
            _ => out.push_str(&format!("%{b:02X}")),
        }
    }
    out
}

impl ApiClient {
    pub fn new(config: ClientConfig, transport: Box<dyn Transport>, bot_policy: BotPolicy) -> Self {
        Self { config, transport, bot_policy }
    }

    pub fn with_http(config: ClientConfig, bot_policy: BotPolicy) -> Self {
        Self::new(config, Box::new(HttpTransport::new()), bot_policy)
    }

    fn request_url(&self, title: &str, batch: u32, token: Option<&str>) -> String {
        let mut url = format!(
            "{}?action=query&format=json&formatversion=2&prop=revisions&titles={}\
             &rvprop=ids%7Ctimestamp%7Cuser%7Csha1%7Csize%7Ccomment%7Ctags%7Cflags\
             &rvdir=newer&rvlimit={}",
            self.config.endpoint,
            urlencode(title),
            batch
        );
        if let Some(t) = token {
            url.push_str(&format!("&rvcontinue={}", urlencode(t)));
        }
        url
    }

    /// Cache path for one request, keyed by (endpoint, title, continuation).
    fn cache_path(&self, title: &str, token: Option<&str>) -> Option<PathBuf> {
        let dir = self.config.cache_dir.as_ref()?;
        let mut hasher = Sha256::new();
        hasher.update(self.config.endpoint.as_bytes());
        hasher.update(b"\0");
        hasher.update(title.as_bytes());
        hasher.update(b"\0");
        hasher.update(token.unwrap_or("").as_bytes());
        let digest = hasher.finalize();
        Some(dir.join(format!("{:x}.json", digest)))
    }

    fn fetch_raw(&self, title: &str, batch: u32, token: Option<&str>) -> Result<Vec<u8>, IngestError> {
        let cache = self.cache_path(title, token);
        if let Some(path) = &cache {
            if path.exists() {
                return Ok(std::fs::read(path)?);
            }
        }
        if self.config.offline {
            return Err(IngestError::OfflineForbidsNetwork);
        }
        let url = self.request_url(title, batch, token);
        let mut last_err = String::new();
        for attempt in 1..=self.config.max_attempts {
            match self.transport.get(&url) {
                Ok(body) => {
                    if let Some(path) = &cache {
                        write_atomic(path, &body)?;
                    }
                    return Ok(body);
                }
                Err(e) => {
                    last_err = e;
                    if attempt < self.config.max_attempts {
                        std::thread::sleep(self.config.retry_backoff);
                    }
                }
            }
        }
        Err(IngestError::Transport { attempts: self.config.max_attempts, message: last_err })
    }

    /// Fetch a page's full revision history, merging paginated responses,
    /// up to `page_limit` revisions.
    pub fn fetch_history(&self, title: &str, page_limit: usize) -> Result<PageHistory, IngestError> {
        if title.is_empty() {
            return Err(IngestError::parse("title", "title must be non-empty"));
        }
        let mut revisions = Vec::new();
        let mut token: Option<String> = None;
        let mut page_id = 0u64;
        let mut resolved_title = title.to_string();
        loop {
            let remaining = page_limit.saturating_sub(revisions.len());
            if remaining == 0 {
                break;
            }
            let batch = remaining.min(500) as u32;
            let raw = self.fetch_raw(title, batch, token.as_deref())?;
            let (pid, ptitle, mut revs) = parse_api_page(&raw)?;
            page_id = pid;
            if !ptitle.is_empty() {
                resolved_title = ptitle;
            }
            revisions.append(&mut revs);
            match api_continue_token(&raw) {
                Some(next) => token = Some(next),
                None => break,
            }
        }
        revisions.truncate(page_limit);
        let mut history = PageHistory::canonicalize(page_id, resolved_title, revisions)?;
        // deltas and bot flags resolve after the merged list is canonical
        let mut revs = std::mem::take(&mut history.revisions);
        super::parse::fill_deltas_and_bots(&mut revs, &self.bot_policy);
        PageHistory::canonicalize(history.page_id, history.title, revs)
    }
}

fn write_atomic(path: &std::path::Path, body: &[u8]) -> Result<(), IngestError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, body)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}
