//! Acquisition and normalization of page revision histories.
//!
//! Histories come from the MediaWiki Action API, from dump XML, or from
//! fixture CSV files, and normalize into one canonical [`PageHistory`]
//! regardless of source format.

mod client;
mod parse;

pub use client::{ApiClient, ClientConfig, HttpTransport, Transport};
pub use parse::{parse_history, parse_history_with_meta, write_fixture_csv, HistoryFormat};

use std::collections::HashSet;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("page not found: {0}")]
    NotFound(String),
    #[error("transport failure after {attempts} attempts: {message}")]
    Transport { attempts: u32, message: String },
    #[error("parse error at {locus}: {message}")]
    Parse { locus: String, message: String },
    #[error("empty history")]
    EmptyHistory,
    #[error("offline mode forbids network access")]
    OfflineForbidsNetwork,
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl IngestError {
    pub fn parse(locus: impl Into<String>, message: impl Into<String>) -> Self {
        IngestError::Parse { locus: locus.into(), message: message.into() }
    }
}

/// One edit event.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Revision {
    pub rev_id: u64,
    pub parent_id: Option<u64>,
    /// UTC seconds since epoch.
    pub timestamp: i64,
    /// Stable actor identifier: registered name or anonymized address token.
    pub user_key: String,
    /// Hex digest of the page text after the edit; empty when unavailable.
    pub content_hash: String,
    /// Page size after the edit, bytes.
    pub byte_size: u64,
    /// Bytes changed vs parent; equals `byte_size` for a first revision.
    pub size_delta: i64,
    pub comment: String,
    pub tags: Vec<String>,
    pub is_minor: bool,
    pub is_bot: bool,
}

/// Canonical revision timeline of one page.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PageHistory {
    pub page_id: u64,
    pub title: String,
    /// Strictly sorted ascending by `(timestamp, rev_id)`, no duplicate ids.
    pub revisions: Vec<Revision>,
    /// Bytes of the current snapshot; last revision's size when no snapshot
    /// is fetched separately.
    pub article_length: u64,
}

impl PageHistory {
    /// Sort canonically, recompute deltas where the source lacked them, and
    /// check the structural invariants.
    pub fn canonicalize(
        page_id: u64,
        title: String,
        mut revisions: Vec<Revision>,
    ) -> Result<Self, IngestError> {
        if revisions.is_empty() {
            return Err(IngestError::EmptyHistory);
        }
        revisions.sort_by_key(|r| (r.timestamp, r.rev_id));
        let mut seen = HashSet::new();
        for r in &revisions {
            if !seen.insert(r.rev_id) {
                return Err(IngestError::parse(
                    format!("rev_id {}", r.rev_id),
                    "duplicate revision id",
                ));
            }
        }
        if revisions[0].parent_id.is_none() {
            revisions[0].size_delta = revisions[0].byte_size as i64;
        }
        let article_length = revisions.last().map(|r| r.byte_size).unwrap_or(0);
        Ok(PageHistory { page_id, title, revisions, article_length })
    }

    pub fn len(&self) -> usize {
        self.revisions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.revisions.is_empty()
    }

    /// Fraction of revisions made by bot accounts.
    pub fn bot_edit_fraction(&self) -> f64 {
        if self.revisions.is_empty() {
            return 0.0;
        }
        self.revisions.iter().filter(|r| r.is_bot).count() as f64 / self.revisions.len() as f64
    }
}

/// Bot classification policy: platform flag, name heuristic, and explicit
/// allow/deny lists.
#[derive(Debug, Clone, Default)]
pub struct BotPolicy {
    /// Accounts always treated as bots regardless of name.
    pub deny: HashSet<String>,
    /// Accounts never treated as bots regardless of name.
    pub allow: HashSet<String>,
}

impl BotPolicy {
    /// Parse a policy file: one account per line, `+name` forces human,
    /// `-name` (or bare `name`) forces bot. `#` starts a comment.
    pub fn from_file(path: &std::path::Path) -> Result<Self, IngestError> {
        let text = std::fs::read_to_string(path)?;
        let mut policy = BotPolicy::default();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('+') {
                policy.allow.insert(name.trim().to_string());
            } else {
                policy.deny.insert(line.trim_start_matches('-').trim().to_string());
            }
        }
        Ok(policy)
    }
}

/// IPv4/IPv6-shaped keys are anonymous editors, never name-matched as bots.
fn is_anonymous(user_key: &str) -> bool {
    user_key.parse::<std::net::IpAddr>().is_ok()
}

/// True iff the revision flags carry a platform bot marker or the account
/// name matches the bot-name heuristic (case-insensitive "bot" suffix on a
/// registered account). Deterministic.
pub fn classify_bot(user_key: &str, flags: &HashSet<String>, policy: &BotPolicy) -> bool {
    if policy.allow.contains(user_key) {
        return false;
    }
    if flags.iter().any(|f| f.eq_ignore_ascii_case("bot")) {
        return true;
    }
    if policy.deny.contains(user_key) {
        return true;
    }
    name_has_bot_suffix(user_key)
}

fn name_has_bot_suffix(user_key: &str) -> bool {
    if is_anonymous(user_key) {
        return false;
    }
    // suffix match on the last whitespace-separated token as well, so
    // "ClueBot NG" classifies via its "ClueBot" token
    user_key
        .split_whitespace()
        .any(|tok| tok.to_lowercase().ends_with("bot"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flags(items: &[&str]) -> HashSet<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn bot_by_name_convention() {
        let policy = BotPolicy::default();
        assert!(classify_bot("ClueBot NG", &flags(&[]), &policy));
        assert!(classify_bot("SineBot", &flags(&[]), &policy));
        assert!(!classify_bot("Alice", &flags(&[]), &policy));
    }

    #[test]
    fn platform_flag_dominates() {
        let policy = BotPolicy::default();
        assert!(classify_bot("Alice", &flags(&["bot"]), &policy));
    }

    #[test]
    fn anonymous_addresses_never_name_matched() {
        let policy = BotPolicy::default();
        assert!(!classify_bot("192.168.1.1", &flags(&[]), &policy));
        assert!(!classify_bot("2001:db8::1", &flags(&[]), &policy));
    }

    #[test]
    fn allow_list_overrides() {
        let mut policy = BotPolicy::default();
        policy.allow.insert("Abbot".into());
        assert!(!classify_bot("Abbot", &flags(&[]), &policy));
        policy.deny.insert("Carol".into());
        assert!(classify_bot("Carol", &flags(&[]), &policy));
    }

    #[test]
    fn canonicalize_sorts_and_sets_delta() {
        let rev = |id: u64, ts: i64| Revision {
            rev_id: id,
            parent_id: if id == 1 { None } else { Some(id - 1) },
            timestamp: ts,
            user_key: "A".into(),
            content_hash: format!("h{id}"),
            byte_size: 100 * id,
            size_delta: 0,
            comment: String::new(),
            tags: vec![],
            is_minor: false,
            is_bot: false,
        };
        let h = PageHistory::canonicalize(1, "T".into(), vec![rev(3, 30), rev(1, 10), rev(2, 20)])
            .unwrap();
        let ids: Vec<u64> = h.revisions.iter().map(|r| r.rev_id).collect();
        assert_eq!(ids, vec![1, 2, 3]);
        assert_eq!(h.revisions[0].size_delta, 100);
        assert_eq!(h.article_length, 300);
    }

    #[test]
    fn canonicalize_rejects_duplicates_and_empty() {
        let rev = Revision {
            rev_id: 1,
            parent_id: None,
            timestamp: 0,
            user_key: "A".into(),
            content_hash: "h".into(),
            byte_size: 1,
            size_delta: 1,
            comment: String::new(),
            tags: vec![],
            is_minor: false,
            is_bot: false,
        };
        assert!(matches!(
            PageHistory::canonicalize(1, "T".into(), vec![rev.clone(), rev]),
            Err(IngestError::Parse { .. })
        ));
        assert!(matches!(
            PageHistory::canonicalize(1, "T".into(), vec![]),
            Err(IngestError::EmptyHistory)
        ));
    }

    #[test]
    fn timestamp_ties_break_by_rev_id() {
        let rev = |id: u64| Revision {
            rev_id: id,
            parent_id: None,
            timestamp: 100,
            user_key: "A".into(),
            content_hash: format!("h{id}"),
            byte_size: id,
            size_delta: 0,
            comment: String::new(),
            tags: vec![],
            is_minor: false,
            is_bot: false,
        };
        let h = PageHistory::canonicalize(1, "T".into(), vec![rev(9), rev(4)]).unwrap();
        let ids: Vec<u64> = h.revisions.iter().map(|r| r.rev_id).collect();
        assert_eq!(ids, vec![4, 9]);
    }
}
