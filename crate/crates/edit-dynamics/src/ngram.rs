//! Language-independent n-gram fragmentation and a character-count work
//! measure for edits.

use std::collections::BTreeMap;

/// Relative frequency spectrum of character n-grams.
#[derive(Debug, Clone, PartialEq)]
pub struct NgramSpectrum {
    pub n: usize,
    pub counts: BTreeMap<String, u64>,
    pub total: u64,
}

impl NgramSpectrum {
    pub fn relative(&self, gram: &str) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.counts.get(gram).copied().unwrap_or(0) as f64 / self.total as f64
        }
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }
}

/// Casefold and collapse whitespace runs to a single separator.
fn normalize(text: &str) -> Vec<char> {
    let mut out = Vec::with_capacity(text.len());
    let mut in_ws = false;
    for c in text.chars() {
        if c.is_whitespace() {
            in_ws = true;
            continue;
        }
        if in_ws && !out.is_empty() {
            out.push(' ');
        }
        in_ws = false;
        out.extend(c.to_lowercase());
    }
    out
}

/// Sliding-window gram counts over the normalized symbol sequence.
///
/// Text shorter than `n` symbols yields an empty spectrum.
pub fn ngram_spectrum(text: &str, n: usize) -> NgramSpectrum {
    assert!(n >= 1, "gram length must be >= 1");
    let symbols = normalize(text);
    let mut counts = BTreeMap::new();
    let mut total = 0u64;
    if symbols.len() >= n {
        for window in symbols.windows(n) {
            *counts.entry(window.iter().collect::<String>()).or_insert(0) += 1;
            total += 1;
        }
    }
    NgramSpectrum { n, counts, total }
}

/// Top-k grams by relative-frequency ratio against a background spectrum.
///
/// Ratio is `relative(page) / (relative(background) + eps)` with
/// `eps = 1/(background.total + 1)`; an empty background ranks by raw
/// relative frequency. Ties break lexicographically.
pub fn significant_grams(
    spectrum: &NgramSpectrum,
    background: &NgramSpectrum,
    k: usize,
) -> Vec<(String, f64)> {
    assert_eq!(spectrum.n, background.n, "spectra must share gram length");
    let eps = 1.0 / (background.total as f64 + 1.0);
    let mut ranked: Vec<(String, f64)> = spectrum
        .counts
        .keys()
        .map(|gram| {
            let score = if background.is_empty() {
                spectrum.relative(gram)
            } else {
                spectrum.relative(gram) / (background.relative(gram) + eps)
            };
            (gram.clone(), score)
        })
        .collect();
    ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(k);
    ranked
}

/// Alphabetic characters inserted plus deleted between two texts, under an
/// LCS alignment at line granularity then character granularity within the
/// changed blocks. An absent parent counts the whole new text.
pub fn work_measure(parent_text: Option<&str>, new_text: &str) -> u64 {
    let parent = match parent_text {
        Some(p) => p,
        None => return alpha_count(new_text),
    };
    if parent == new_text {
        return 0;
    }
    // Trim unchanged lines at both ends, then align the remaining blocks at
    // character level. Inserted + deleted = |A| + |B| - 2*LCS over the
    // alphabetic symbols, which is symmetric even when the LCS is not
    // unique.
    let old_lines: Vec<&str> = parent.lines().collect();
    let new_lines: Vec<&str> = new_text.lines().collect();
    let prefix = old_lines
        .iter()
        .zip(&new_lines)
        .take_while(|(a, b)| a == b)
        .count();
    let max_suffix = old_lines.len().min(new_lines.len()) - prefix;
    let suffix = (0..max_suffix)
        .take_while(|&k| old_lines[old_lines.len() - 1 - k] == new_lines[new_lines.len() - 1 - k])
        .count();

    let old_block: Vec<char> = old_lines[prefix..old_lines.len() - suffix]
        .join("\n")
        .chars()
        .filter(|c| c.is_alphabetic())
        .collect();
    let new_block: Vec<char> = new_lines[prefix..new_lines.len() - suffix]
        .join("\n")
        .chars()
        .filter(|c| c.is_alphabetic())
        .collect();
    let common = lcs_length(&old_block, &new_block) as u64;
    old_block.len() as u64 + new_block.len() as u64 - 2 * common
}

fn alpha_count(text: &str) -> u64 {
    text.chars().filter(|c| c.is_alphabetic()).count() as u64
}

/// LCS length, standard two-row DP.
fn lcs_length<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let m = b.len();
    let mut prev = vec![0usize; m + 1];
    let mut cur = vec![0usize; m + 1];
    for item in a {
        for j in 0..m {
            cur[j + 1] = if *item == b[j] {
                prev[j] + 1
            } else {
                prev[j + 1].max(cur[j])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[m]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_window_counts() {
        let s = ngram_spectrum("aaaa", 2);
        assert_eq!(s.counts.get("aa"), Some(&3));
        assert_eq!(s.total, 3);
        assert!((s.relative("aa") - 1.0).abs() < 1e-12);
    }

    #[test]
    fn enumerated_bigrams() {
        let s = ngram_spectrum("abab", 2);
        assert_eq!(s.counts.get("ab"), Some(&2));
        assert_eq!(s.counts.get("ba"), Some(&1));
        assert!((s.relative("ab") - 2.0 / 3.0).abs() < 1e-12);
        assert!((s.relative("ba") - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn short_text_empty_spectrum() {
        let s = ngram_spectrum("a", 3);
        assert!(s.is_empty());
        assert_eq!(s.total, 0);
    }

    #[test]
    fn normalization_casefold_and_whitespace() {
        let a = ngram_spectrum("Foo   Bar", 3);
        let b = ngram_spectrum("foo bar", 3);
        assert_eq!(a, b);
    }

    #[test]
    fn relative_sums_to_one() {
        let s = ngram_spectrum("the quick brown fox", 3);
        let sum: f64 = s.counts.keys().map(|g| s.relative(g)).sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn significant_equal_spectra_lexicographic() {
        let s = ngram_spectrum("abcd", 2);
        let top = significant_grams(&s, &s, 2);
        let grams: Vec<&str> = top.iter().map(|(g, _)| g.as_str()).collect();
        assert_eq!(grams, vec!["ab", "bc"]);
        assert!(top.iter().all(|&(_, v)| (v - top[0].1).abs() < 1e-12));
    }

    #[test]
    fn significant_rare_background_gram_first() {
        let mut page = NgramSpectrum { n: 2, counts: BTreeMap::new(), total: 0 };
        page.counts.insert("qx".into(), 50);
        page.counts.insert("th".into(), 50);
        page.total = 100;
        let mut bg = NgramSpectrum { n: 2, counts: BTreeMap::new(), total: 0 };
        bg.counts.insert("qx".into(), 1);
        bg.counts.insert("th".into(), 999);
        bg.total = 1000;
        let top = significant_grams(&page, &bg, 1);
        assert_eq!(top[0].0, "qx");
    }

    #[test]
    fn significant_k_exceeding_grams() {
        let s = ngram_spectrum("abc", 2);
        let top = significant_grams(&s, &s, 100);
        assert_eq!(top.len(), 2);
    }

    #[test]
    fn work_measure_creation_identity_diff() {
        assert_eq!(work_measure(None, "abc"), 3);
        assert_eq!(work_measure(Some("abc"), "abc"), 0);
        assert_eq!(work_measure(Some("the cat"), "the black cat"), 5);
    }

    #[test]
    fn work_measure_symmetric() {
        let a = "one line\ntwo line";
        let b = "one line\nthree lines here";
        assert_eq!(work_measure(Some(a), b), work_measure(Some(b), a));
    }

    #[test]
    fn work_measure_line_insertion() {
        let a = "alpha\ngamma";
        let b = "alpha\nbeta\ngamma";
        assert_eq!(work_measure(Some(a), b), 4);
    }
}
