//! Detection of contention events (one user undoing another's contribution)
//! and the contention-vs-group-size curve whose peak locates the model's
//! group scale.

use std::collections::{BTreeMap, HashMap, HashSet};

use regex::Regex;
use std::sync::OnceLock;

use crate::episodes::Episode;
use crate::ingest::PageHistory;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RevertKind {
    HashIdentity,
    TagMarker,
    CommentMarker,
}

impl RevertKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            RevertKind::HashIdentity => "hash-identity",
            RevertKind::TagMarker => "tag-marker",
            RevertKind::CommentMarker => "comment-marker",
        }
    }
}

/// One detected undo event.
#[derive(Debug, Clone, PartialEq)]
pub struct RevertEvent {
    pub page_id: u64,
    pub reverting_rev: u64,
    /// Revision whose content was restored; absent when the marker did not
    /// identify it.
    pub restored_rev: Option<u64>,
    pub undone_revs: Vec<u64>,
    pub reverting_user: String,
    pub undone_users: HashSet<String>,
    pub kind: RevertKind,
}

impl RevertEvent {
    /// A revert counts toward contention only when someone else's work was
    /// undone.
    pub fn is_cross_user(&self) -> bool {
        !self.undone_users.is_empty() && !self.undone_users.contains(&self.reverting_user)
    }
}

/// Platform tags marking undo/rollback actions.
const REVERT_TAGS: &[&str] = &["mw-undo", "mw-rollback", "undo", "rollback", "mw-manual-revert"];

/// Default comment markers; extend via [`detect_reverts_with_markers`].
pub const DEFAULT_COMMENT_MARKERS: &[&str] =
    &["undid", "undo", "revert", "reverted", "rv", "rvv", "rollback"];

fn undid_revision_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)undid\s+revision\s+(\d+)").unwrap())
}

fn marker_regex(markers: &[&str]) -> Regex {
    let alternation = markers
        .iter()
        .map(|m| regex::escape(m))
        .collect::<Vec<_>>()
        .join("|");
    Regex::new(&format!(r"(?i)\b(?:{alternation})\b")).unwrap()
}

/// Union of three detectors, deduplicated by reverting revision (hash
/// identity wins over tags, tags over comments), sorted by reverting
/// revision order.
pub fn detect_reverts(history: &PageHistory) -> Vec<RevertEvent> {
    detect_reverts_with_markers(history, DEFAULT_COMMENT_MARKERS)
}

pub fn detect_reverts_with_markers(history: &PageHistory, markers: &[&str]) -> Vec<RevertEvent> {
    let revs = &history.revisions;
    let comment_re = marker_regex(markers);
    let mut by_reverting: BTreeMap<usize, RevertEvent> = BTreeMap::new();
    let rank = |k: RevertKind| match k {
        RevertKind::HashIdentity => 0,
        RevertKind::TagMarker => 1,
        RevertKind::CommentMarker => 2,
    };
    let mut insert = |idx: usize, event: RevertEvent| match by_reverting.get(&idx) {
        Some(existing) if rank(existing.kind) <= rank(event.kind) => {}
        _ => {
            by_reverting.insert(idx, event);
        }
    };

    // (a) hash identity: revision i restoring the state of some j < i-1
    let mut last_hash_index: HashMap<&str, usize> = HashMap::new();
    for i in 0..revs.len() {
        if i >= 2 {
            let past = &revs[i - 2];
            if !past.content_hash.is_empty() {
                last_hash_index.insert(past.content_hash.as_str(), i - 2);
            }
            if !revs[i].content_hash.is_empty() {
                if let Some(&j) = last_hash_index.get(revs[i].content_hash.as_str()) {
                    let undone: Vec<&crate::ingest::Revision> = revs[j + 1..i].iter().collect();
                    insert(
                        i,
                        RevertEvent {
                            page_id: history.page_id,
                            reverting_rev: revs[i].rev_id,
                            restored_rev: Some(revs[j].rev_id),
                            undone_revs: undone.iter().map(|r| r.rev_id).collect(),
                            reverting_user: revs[i].user_key.clone(),
                            undone_users: undone.iter().map(|r| r.user_key.clone()).collect(),
                            kind: RevertKind::HashIdentity,
                        },
                    );
                }
            }
        }
    }

    // (b) platform undo/rollback tags; (c) comment markers
    for i in 1..revs.len() {
        let r = &revs[i];
        let tagged = r
            .tags
            .iter()
            .any(|t| REVERT_TAGS.iter().any(|m| t.eq_ignore_ascii_case(m)));
        let commented = comment_re.is_match(&r.comment);
        if !tagged && !commented {
            continue;
        }
        // "Undid revision NNN by X" names the undone revision; otherwise the
        // immediately preceding revision is taken as undone.
        let undone_idx = undid_revision_regex()
            .captures(&r.comment)
            .and_then(|c| c[1].parse::<u64>().ok())
            .and_then(|id| revs[..i].iter().position(|p| p.rev_id == id))
            .unwrap_or(i - 1);
        let undone = &revs[undone_idx];
        insert(
            i,
            RevertEvent {
                page_id: history.page_id,
                reverting_rev: r.rev_id,
                restored_rev: undone.parent_id,
                undone_revs: vec![undone.rev_id],
                reverting_user: r.user_key.clone(),
                undone_users: [undone.user_key.clone()].into_iter().collect(),
                kind: if tagged { RevertKind::TagMarker } else { RevertKind::CommentMarker },
            },
        );
    }

    by_reverting.into_values().collect()
}

/// Count contention events inside one episode and write the count back.
///
/// An event counts when its reverting revision lies in the episode range
/// and the reverting user differs from every undone user (self-reverts are
/// excluded).
pub fn count_contention(
    episode: &mut Episode,
    events: &[RevertEvent],
    history: &PageHistory,
) -> u32 {
    let index_of: HashMap<u64, usize> = history
        .revisions
        .iter()
        .enumerate()
        .map(|(i, r)| (r.rev_id, i))
        .collect();
    let count = events
        .iter()
        .filter(|ev| {
            index_of
                .get(&ev.reverting_rev)
                .is_some_and(|&i| episode.contains_rev_index(i))
                && ev.is_cross_user()
        })
        .count() as u32;
    episode.contention_count = count;
    count
}

/// True when two users exchange reverts in both directions inside the
/// episode ("duel"); reporting-only, never changes counts.
pub fn detect_duel(episode: &Episode, events: &[RevertEvent], history: &PageHistory) -> bool {
    let index_of: HashMap<u64, usize> = history
        .revisions
        .iter()
        .enumerate()
        .map(|(i, r)| (r.rev_id, i))
        .collect();
    let mut directed: HashSet<(String, String)> = HashSet::new();
    for ev in events {
        let inside = index_of
            .get(&ev.reverting_rev)
            .is_some_and(|&i| episode.contains_rev_index(i));
        if !inside || !ev.is_cross_user() {
            continue;
        }
        for undone in &ev.undone_users {
            if directed.contains(&(undone.clone(), ev.reverting_user.clone())) {
                return true;
            }
            directed.insert((ev.reverting_user.clone(), undone.clone()));
        }
    }
    false
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveRow {
    pub n: u32,
    pub episode_count: usize,
    /// Mean contention per episode at this group size, I(N).
    pub mean_contention: f64,
    pub std_error: f64,
}

/// Location of the contention maximum, estimated two ways; their spread is
/// the sampling-variation band.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ContentionPeak {
    /// All-zero contention leaves the peak undefined.
    NoPeak,
    Found {
        /// Discrete argmax of I(N).
        argmax_n: u32,
        /// Contention-weighted mean group size.
        weighted_n: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContentionCurve {
    pub rows: Vec<CurveRow>,
    pub peak: ContentionPeak,
}

/// Mean contention per episode as a function of group size, with the peak
/// location. Episode order never affects the result.
pub fn contention_curve(episodes: &[Episode], include_bots: bool) -> ContentionCurve {
    let mut by_n: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
    for e in episodes {
        let n = if include_bots { e.n_users } else { e.n_users_human };
        if n == 0 {
            continue;
        }
        by_n.entry(n).or_default().push(e.contention_count as f64);
    }
    let rows: Vec<CurveRow> = by_n
        .into_iter()
        .map(|(n, xs)| {
            let count = xs.len();
            let mean = xs.iter().sum::<f64>() / count as f64;
            let se = if count > 1 {
                let var =
                    xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (count as f64 - 1.0);
                (var / count as f64).sqrt()
            } else {
                0.0
            };
            CurveRow { n, episode_count: count, mean_contention: mean, std_error: se }
        })
        .collect();

    let total_contention: f64 =
        rows.iter().map(|r| r.mean_contention * r.episode_count as f64).sum();
    let peak = if total_contention <= 0.0 {
        ContentionPeak::NoPeak
    } else {
        let argmax_n = rows
            .iter()
            .max_by(|a, b| {
                a.mean_contention
                    .partial_cmp(&b.mean_contention)
                    .unwrap()
                    .then(b.n.cmp(&a.n)) // ties toward the lowest N
            })
            .map(|r| r.n)
            .unwrap();
        let weighted_n = rows
            .iter()
            .map(|r| r.n as f64 * r.mean_contention * r.episode_count as f64)
            .sum::<f64>()
            / total_contention;
        ContentionPeak::Found { argmax_n, weighted_n }
    };
    ContentionCurve { rows, peak }
}
