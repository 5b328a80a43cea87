//! Segmentation of a revision timeline into causally independent bursts
//! ("episodes") and per-episode group statistics.

use std::collections::HashSet;

use crate::ingest::PageHistory;

pub const SECONDS_PER_DAY: f64 = 86_400.0;

/// Default adaptive threshold floor: 48 hours.
pub const DEFAULT_GAP_FLOOR_S: i64 = 48 * 3600;

/// Default adaptive multiplier on the median inter-arrival gap.
pub const DEFAULT_GAP_MULTIPLIER: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GapMode {
    Absolute,
    Adaptive,
}

/// Gap threshold rule splitting a timeline into episodes.
#[derive(Debug, Clone, Copy)]
pub struct GapPolicy {
    pub mode: GapMode,
    pub absolute_gap_s: i64,
    pub adaptive_multiplier: f64,
}

impl GapPolicy {
    pub fn absolute(gap_s: i64) -> Self {
        assert!(gap_s > 0, "absolute gap must be positive");
        Self { mode: GapMode::Absolute, absolute_gap_s: gap_s, adaptive_multiplier: DEFAULT_GAP_MULTIPLIER }
    }

    pub fn adaptive(multiplier: f64, floor_s: i64) -> Self {
        assert!(floor_s > 0, "gap floor must be positive");
        assert!(multiplier > 1.0, "adaptive multiplier must exceed 1");
        Self { mode: GapMode::Adaptive, absolute_gap_s: floor_s, adaptive_multiplier: multiplier }
    }

    /// Effective threshold in seconds for one page: the absolute gap, or the
    /// multiplier times the page's median inter-arrival gap floored at it.
    pub fn threshold_s(&self, history: &PageHistory) -> i64 {
        match self.mode {
            GapMode::Absolute => self.absolute_gap_s,
            GapMode::Adaptive => {
                let mut gaps: Vec<i64> = history
                    .revisions
                    .windows(2)
                    .map(|w| w[1].timestamp - w[0].timestamp)
                    .collect();
                if gaps.is_empty() {
                    return self.absolute_gap_s;
                }
                gaps.sort_unstable();
                let median = if gaps.len() % 2 == 1 {
                    gaps[gaps.len() / 2] as f64
                } else {
                    (gaps[gaps.len() / 2 - 1] + gaps[gaps.len() / 2]) as f64 / 2.0
                };
                ((self.adaptive_multiplier * median) as i64).max(self.absolute_gap_s)
            }
        }
    }
}

impl Default for GapPolicy {
    fn default() -> Self {
        Self::adaptive(DEFAULT_GAP_MULTIPLIER, DEFAULT_GAP_FLOOR_S)
    }
}

/// A contiguous burst of revisions on one page.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub page_id: u64,
    pub start_ts: i64,
    pub end_ts: i64,
    /// Inclusive index interval into the page's revision list.
    pub revision_range: (usize, usize),
    /// Distinct actors, bots included.
    pub n_users: u32,
    /// Distinct actors, bots excluded; zero marks a bot-only burst.
    pub n_users_human: u32,
    pub duration_days: f64,
    /// Filled by the contention module.
    pub contention_count: u32,
    /// Sum of absolute size deltas over the episode's revisions.
    pub work_chars: u64,
}

impl Episode {
    pub fn is_bot_only(&self) -> bool {
        self.n_users_human == 0
    }

    pub fn contains_rev_index(&self, idx: usize) -> bool {
        idx >= self.revision_range.0 && idx <= self.revision_range.1
    }
}

/// Split a page timeline at inter-arrival gaps exceeding the policy
/// threshold. Every revision lands in exactly one episode; episodes are
/// ordered by start time.
pub fn segment_episodes(history: &PageHistory, policy: &GapPolicy) -> Vec<Episode> {
    if history.is_empty() {
        return Vec::new();
    }
    let threshold = policy.threshold_s(history);
    let mut episodes = Vec::new();
    let mut start = 0usize;
    for i in 1..history.revisions.len() {
        let gap = history.revisions[i].timestamp - history.revisions[i - 1].timestamp;
        if gap > threshold {
            episodes.push(make_episode(history, start, i - 1));
            start = i;
        }
    }
    episodes.push(make_episode(history, start, history.revisions.len() - 1));
    episodes
}

fn make_episode(history: &PageHistory, lo: usize, hi: usize) -> Episode {
    let revs = &history.revisions[lo..=hi];
    let start_ts = revs[0].timestamp;
    let end_ts = revs[revs.len() - 1].timestamp;
    let all: HashSet<&str> = revs.iter().map(|r| r.user_key.as_str()).collect();
    let human: HashSet<&str> =
        revs.iter().filter(|r| !r.is_bot).map(|r| r.user_key.as_str()).collect();
    Episode {
        page_id: history.page_id,
        start_ts,
        end_ts,
        revision_range: (lo, hi),
        n_users: all.len() as u32,
        n_users_human: human.len() as u32,
        duration_days: (end_ts - start_ts) as f64 / SECONDS_PER_DAY,
        contention_count: 0,
        work_chars: revs.iter().map(|r| r.size_delta.unsigned_abs()).sum(),
    }
}

/// Distinct actor count of one episode under the given bot policy.
pub fn episode_group_size(episode: &Episode, history: &PageHistory, include_bots: bool) -> u32 {
    let (lo, hi) = episode.revision_range;
    let users: HashSet<&str> = history.revisions[lo..=hi]
        .iter()
        .filter(|r| include_bots || !r.is_bot)
        .map(|r| r.user_key.as_str())
        .collect();
    users.len() as u32
}

/// One log-spaced article-length bin; empty bins keep `count = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct LengthBin {
    pub length_lo: f64,
    pub length_hi: f64,
    pub count: usize,
    pub mean_n: Option<f64>,
    pub std_error: Option<f64>,
}

/// Mean per-episode group size as a function of article length, binned
/// log-uniformly over the corpus length range.
pub fn mean_group_size_vs_length(
    corpus: &[(&PageHistory, &[Episode])],
    bins: usize,
    include_bots: bool,
) -> Vec<LengthBin> {
    assert!(bins >= 1, "bins must be >= 1");
    if corpus.is_empty() {
        return Vec::new();
    }
    let lengths: Vec<f64> = corpus
        .iter()
        .map(|(h, _)| (h.article_length.max(1)) as f64)
        .collect();
    let lo = lengths.iter().cloned().fold(f64::INFINITY, f64::min).ln();
    let mut hi = lengths.iter().cloned().fold(0.0f64, f64::max).ln();
    if hi <= lo {
        hi = lo + 1e-9;
    }
    let width = (hi - lo) / bins as f64;

    let mut samples: Vec<Vec<f64>> = vec![Vec::new(); bins];
    for ((h, eps), l) in corpus.iter().zip(&lengths) {
        let idx = (((l.ln() - lo) / width) as usize).min(bins - 1);
        for e in eps.iter() {
            let n = if include_bots { e.n_users } else { e.n_users_human };
            if n > 0 {
                samples[idx].push(n as f64);
            }
            let _ = h;
        }
    }

    (0..bins)
        .map(|i| {
            let xs = &samples[i];
            let count = xs.len();
            let (mean, se) = if count == 0 {
                (None, None)
            } else {
                let m = xs.iter().sum::<f64>() / count as f64;
                let se = if count > 1 {
                    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>()
                        / (count as f64 - 1.0);
                    (var / count as f64).sqrt()
                } else {
                    0.0
                };
                (Some(m), Some(se))
            };
            LengthBin {
                length_lo: (lo + i as f64 * width).exp(),
                length_hi: (lo + (i + 1) as f64 * width).exp(),
                count,
                mean_n: mean,
                std_error: se,
            }
        })
        .collect()
}

/// Duration statistics for one group-size class.
#[derive(Debug, Clone, PartialEq)]
pub struct DurationRow {
    pub n: u32,
    pub count: usize,
    pub mean_duration_days: f64,
    pub variance_days: f64,
    /// Same durations normalized per user (duration / N).
    pub mean_duration_per_user_days: f64,
}

/// Duration-vs-N table plus a two-component split of the log-duration
/// distribution (exact 1-D 2-means), reported as day-scale centers.
#[derive(Debug, Clone, PartialEq)]
pub struct DurationTable {
    pub rows: Vec<DurationRow>,
    pub cluster_centers_days: (f64, f64),
}

const LOG_DURATION_EPS: f64 = 1e-6;

pub fn duration_vs_n(episodes: &[Episode], include_bots: bool) -> DurationTable {
    let mut by_n: std::collections::BTreeMap<u32, Vec<f64>> = Default::default();
    let mut all_log = Vec::new();
    for e in episodes {
        let n = if include_bots { e.n_users } else { e.n_users_human };
        if n == 0 {
            continue;
        }
        by_n.entry(n).or_default().push(e.duration_days);
        all_log.push((e.duration_days.max(LOG_DURATION_EPS)).ln());
    }
    let rows = by_n
        .into_iter()
        .map(|(n, ds)| {
            let count = ds.len();
            let mean = ds.iter().sum::<f64>() / count as f64;
            let variance = ds.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / count as f64;
            DurationRow {
                n,
                count,
                mean_duration_days: mean,
                variance_days: variance,
                mean_duration_per_user_days: mean / n as f64,
            }
        })
        .collect();
    DurationTable { rows, cluster_centers_days: two_means_log(&mut all_log) }
}

/// Exact 1-D 2-means: sort, scan every split point, keep the minimum
/// within-cluster sum of squares. Returns centers mapped back to days.
fn two_means_log(values: &mut [f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    if values.len() == 1 {
        let c = values[0].exp();
        return (c, c);
    }
    let prefix: Vec<f64> = std::iter::once(0.0)
        .chain(values.iter().scan(0.0, |acc, v| {
            *acc += v;
            Some(*acc)
        }))
        .collect();
    let prefix_sq: Vec<f64> = std::iter::once(0.0)
        .chain(values.iter().scan(0.0, |acc, v| {
            *acc += v * v;
            Some(*acc)
        }))
        .collect();
    let sse = |a: usize, b: usize| -> f64 {
        // sum of squared deviations of values[a..b]
        let n = (b - a) as f64;
        let s = prefix[b] - prefix[a];
        let sq = prefix_sq[b] - prefix_sq[a];
        sq - s * s / n
    };
    let mut best = (f64::INFINITY, 1usize);
    for split in 1..values.len() {
        let total = sse(0, split) + sse(split, values.len());
        if total < best.0 {
            best = (total, split);
        }
    }
    let split = best.1;
    let low = (prefix[split] / split as f64).exp();
    let high = ((prefix[values.len()] - prefix[split]) / (values.len() - split) as f64).exp();
    (low, high)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{PageHistory, Revision};

    pub(crate) fn rev(id: u64, ts: i64, user: &str, bot: bool) -> Revision {
        Revision {
            rev_id: id,
            parent_id: if id == 1 { None } else { Some(id - 1) },
            timestamp: ts,
            user_key: user.into(),
            content_hash: format!("h{id}"),
            byte_size: 100,
            size_delta: 10,
            comment: String::new(),
            tags: vec![],
            is_minor: false,
            is_bot: bot,
        }
    }

    fn history(revs: Vec<Revision>) -> PageHistory {
        PageHistory::canonicalize(1, "T".into(), revs).unwrap()
    }

    #[test]
    fn single_revision_single_episode() {
        let h = history(vec![rev(1, 1000, "A", false)]);
        let eps = segment_episodes(&h, &GapPolicy::default());
        assert_eq!(eps.len(), 1);
        assert_eq!(eps[0].n_users, 1);
        assert_eq!(eps[0].duration_days, 0.0);
    }

    #[test]
    fn thirty_day_silence_splits_in_two() {
        // 10 revisions, hourly, with a 30-day gap after index 5
        let day = 86_400i64;
        let mut revs = Vec::new();
        for i in 0..6 {
            revs.push(rev(i as u64 + 1, i * 3600, "A", false));
        }
        let resume = 5 * 3600 + 30 * day;
        for i in 0..4 {
            revs.push(rev(i as u64 + 7, resume + i * 3600, "B", false));
        }
        let h = history(revs);
        let eps = segment_episodes(&h, &GapPolicy::absolute(7 * day));
        assert_eq!(eps.len(), 2);
        assert_eq!(eps[0].revision_range, (0, 5));
        assert_eq!(eps[1].revision_range, (6, 9));
    }

    #[test]
    fn equal_gaps_below_threshold_one_episode() {
        let g = 1000i64;
        let revs: Vec<Revision> = (0..8).map(|i| rev(i + 1, i as i64 * g, "A", false)).collect();
        let h = history(revs);
        let eps = segment_episodes(&h, &GapPolicy::absolute(g + 1));
        assert_eq!(eps.len(), 1);
        assert_eq!(eps[0].revision_range, (0, 7));
    }

    #[test]
    fn adaptive_threshold_floors_at_absolute() {
        // median gap 60s, multiplier 10 -> 600s, floored to 48h
        let revs: Vec<Revision> = (0..5).map(|i| rev(i + 1, i as i64 * 60, "A", false)).collect();
        let h = history(revs);
        let p = GapPolicy::default();
        assert_eq!(p.threshold_s(&h), DEFAULT_GAP_FLOOR_S);
    }

    #[test]
    fn group_size_filters_bots() {
        let h = history(vec![
            rev(1, 0, "A", false),
            rev(2, 60, "B", false),
            rev(3, 120, "C", false),
            rev(4, 180, "BotX", true),
            rev(5, 240, "A", false),
        ]);
        let eps = segment_episodes(&h, &GapPolicy::absolute(3600));
        assert_eq!(eps.len(), 1);
        assert_eq!(episode_group_size(&eps[0], &h, false), 3);
        assert_eq!(episode_group_size(&eps[0], &h, true), 4);
        assert_eq!(eps[0].n_users, 4);
        assert_eq!(eps[0].n_users_human, 3);
    }

    #[test]
    fn single_actor_group_size_one() {
        let revs: Vec<Revision> = (0..5).map(|i| rev(i + 1, i as i64 * 60, "A", false)).collect();
        let h = history(revs);
        let eps = segment_episodes(&h, &GapPolicy::absolute(3600));
        assert_eq!(episode_group_size(&eps[0], &h, true), 1);
    }

    fn episode_with(n: u32, duration_days: f64) -> Episode {
        Episode {
            page_id: 1,
            start_ts: 0,
            end_ts: (duration_days * SECONDS_PER_DAY) as i64,
            revision_range: (0, 0),
            n_users: n,
            n_users_human: n,
            duration_days,
            contention_count: 0,
            work_chars: 0,
        }
    }

    #[test]
    fn length_binning_two_pages() {
        let mut h1 = history(vec![rev(1, 0, "A", false)]);
        h1.article_length = 1000;
        let mut h2 = history(vec![rev(1, 0, "A", false)]);
        h2.article_length = 100_000;
        let e1 = vec![episode_with(2, 1.0), episode_with(4, 1.0)];
        let e2 = vec![episode_with(6, 1.0)];
        let corpus: Vec<(&PageHistory, &[Episode])> =
            vec![(&h1, e1.as_slice()), (&h2, e2.as_slice())];
        let table = mean_group_size_vs_length(&corpus, 2, true);
        assert_eq!(table.len(), 2);
        assert_eq!(table[0].mean_n, Some(3.0));
        assert_eq!(table[1].mean_n, Some(6.0));
    }

    #[test]
    fn length_binning_single_point_and_empty() {
        let h = history(vec![rev(1, 0, "A", false)]);
        let eps = vec![episode_with(3, 0.5)];
        let corpus: Vec<(&PageHistory, &[Episode])> = vec![(&h, eps.as_slice())];
        let table = mean_group_size_vs_length(&corpus, 3, true);
        assert_eq!(table.iter().filter(|b| b.count > 0).count(), 1);
        assert_eq!(table.iter().find(|b| b.count > 0).unwrap().mean_n, Some(3.0));

        let empty: Vec<(&PageHistory, &[Episode])> = vec![];
        assert!(mean_group_size_vs_length(&empty, 3, true).is_empty());
    }

    #[test]
    fn duration_rows_constant_durations() {
        let eps = vec![episode_with(2, 5.0), episode_with(2, 5.0), episode_with(3, 5.0)];
        let t = duration_vs_n(&eps, true);
        for row in &t.rows {
            assert_eq!(row.mean_duration_days, 5.0);
            assert_eq!(row.variance_days, 0.0);
        }
        let row3 = t.rows.iter().find(|r| r.n == 3).unwrap();
        assert!((row3.mean_duration_per_user_days - 5.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn duration_two_clusters() {
        let eps = vec![
            episode_with(3, 1.0),
            episode_with(3, 1.0),
            episode_with(3, 100.0),
            episode_with(3, 100.0),
        ];
        let t = duration_vs_n(&eps, true);
        assert_eq!(t.rows.len(), 1);
        assert!((t.rows[0].mean_duration_days - 50.5).abs() < 1e-9);
        let (lo, hi) = t.cluster_centers_days;
        assert!((lo - 1.0).abs() < 1e-6, "low center {lo}");
        assert!((hi - 100.0).abs() < 1e-4, "high center {hi}");
    }

    #[test]
    fn duration_single_episode() {
        let t = duration_vs_n(&[episode_with(4, 2.0)], true);
        assert_eq!(t.rows.len(), 1);
        assert_eq!(t.rows[0].variance_days, 0.0);
    }
}
