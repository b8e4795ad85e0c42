//! Fuzzy matching of detected mentions to speaker identities.
//!
//! Two strings are compared with normalized Levenshtein similarity
//! `theta = (l_sum - d) / l_sum`, where `l_sum` is the total length of the two
//! strings and `d` their edit distance. A mention is bound to the speaker with
//! the highest similarity when it reaches the threshold (0.8 by default), and
//! to `"null"` otherwise. Each speaker is represented by their full gold name
//! plus each of its whitespace tokens, max-pooled, so a first-name-only
//! mention still matches its owner.

use crate::types::{GoldRoster, LabeledMention, NameMention, Transcript, NULL_SPEAKER};
use serde::{Deserialize, Serialize};

/// Similarity threshold below which a mention is labeled `"null"`.
pub const DEFAULT_MATCH_THRESHOLD: f64 = 0.8;

/// Outcome of matching one mention against a gold roster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    /// Winning speaker_id, or `"null"` when below threshold.
    pub best_speaker: String,
    /// Similarity of the winning comparison, in [0, 1].
    pub theta: f64,
    /// Total character length of the two compared strings.
    pub l_sum: usize,
    /// Edit distance of the winning comparison.
    pub d: usize,
}

/// Minimum number of single-character insertions, deletions, or substitutions
/// transforming `a` into `b`. Operates on Unicode scalar values.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    // Two-row DP over the edit matrix.
    let mut cur: Vec<usize> = (0..=b.len()).collect();
    for (i, &ca) in a.iter().enumerate() {
        let mut diag = cur[0];
        cur[0] = i + 1;
        for (j, &cb) in b.iter().enumerate() {
            let up = cur[j + 1];
            let subst = diag + usize::from(ca != cb);
            cur[j + 1] = subst.min(up + 1).min(cur[j] + 1);
            diag = up;
        }
    }
    cur[b.len()]
}

/// Normalized similarity `theta = (l_sum - d) / l_sum`; 1 when both strings
/// are empty.
pub fn similarity(a: &str, b: &str) -> f64 {
    let l_sum = a.chars().count() + b.chars().count();
    if l_sum == 0 {
        return 1.0;
    }
    let d = levenshtein(a, b);
    (l_sum - d) as f64 / l_sum as f64
}

/// Case-folds and collapses runs of whitespace to single spaces.
pub fn fold(s: &str) -> String {
    s.split_whitespace()
        .map(|t| t.to_lowercase())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Best similarity of `surface` against a speaker's gold name: the maximum
/// over the folded full name and each of its tokens. Also returns the
/// winning comparison's `(l_sum, d)`.
fn best_against_name(surface_folded: &str, gold_name: &str) -> (f64, usize, usize) {
    let full = fold(gold_name);
    let mut candidates: Vec<&str> = vec![&full];
    candidates.extend(full.split(' '));

    let mut best = (-1.0, 0usize, 0usize);
    for cand in candidates {
        let l_sum = surface_folded.chars().count() + cand.chars().count();
        let d = levenshtein(surface_folded, cand);
        let theta = if l_sum == 0 {
            1.0
        } else {
            (l_sum - d) as f64 / l_sum as f64
        };
        if theta > best.0 {
            best = (theta, l_sum, d);
        }
    }
    (best.0, best.1, best.2)
}

/// Similarity of a predicted or mentioned surface against one speaker's gold
/// name (token-max, case-folded). Shared by labeling and evaluation.
pub fn speaker_similarity(surface: &str, gold_name: &str) -> f64 {
    best_against_name(&fold(surface), gold_name).0
}

/// Matches one mention against every speaker in the gold roster.
///
/// Speakers are visited in ordinal order and only a strictly higher
/// similarity displaces the incumbent, so equal scores resolve to the lower
/// ordinal.
pub fn match_mention(m: &NameMention, gold: &GoldRoster, threshold: f64) -> MatchResult {
    debug_assert!(threshold > 0.0 && threshold <= 1.0);
    let surface = fold(&m.surface);

    let mut best: Option<(f64, usize, usize, &str)> = None;
    for speaker in gold.speakers_in_order() {
        let (theta, l_sum, d) = best_against_name(&surface, &gold.names[speaker]);
        if best.is_none_or(|(bt, ..)| theta > bt) {
            best = Some((theta, l_sum, d, speaker));
        }
    }

    match best {
        Some((theta, l_sum, d, speaker)) if theta >= threshold => MatchResult {
            best_speaker: speaker.to_string(),
            theta,
            l_sum,
            d,
        },
        Some((theta, l_sum, d, _)) => MatchResult {
            best_speaker: NULL_SPEAKER.to_string(),
            theta,
            l_sum,
            d,
        },
        None => MatchResult {
            best_speaker: NULL_SPEAKER.to_string(),
            theta: 0.0,
            l_sum: 0,
            d: 0,
        },
    }
}

/// Labels every mention of a transcript, one [`LabeledMention`] per input.
pub fn build_labeled_dataset(
    _t: &Transcript,
    gold: &GoldRoster,
    mentions: &[NameMention],
    threshold: f64,
) -> Vec<LabeledMention> {
    mentions
        .iter()
        .map(|m| {
            let r = match_mention(m, gold, threshold);
            LabeledMention {
                mention: m.clone(),
                label: r.best_speaker,
                match_score: r.theta,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::BTreeMap;

    /// Definitional recurrence for edit distance, memoized. Kept independent
    /// of the DP implementation above; used as the test oracle.
    pub(crate) fn levenshtein_oracle(a: &[char], b: &[char]) -> usize {
        fn go(a: &[char], b: &[char], i: usize, j: usize, memo: &mut Vec<Vec<Option<usize>>>) -> usize {
            if i == 0 {
                return j;
            }
            if j == 0 {
                return i;
            }
            if let Some(v) = memo[i][j] {
                return v;
            }
            let cost = usize::from(a[i - 1] != b[j - 1]);
            let v = (go(a, b, i - 1, j - 1, memo) + cost)
                .min(go(a, b, i - 1, j, memo) + 1)
                .min(go(a, b, i, j - 1, memo) + 1);
            memo[i][j] = Some(v);
            v
        }
        let mut memo = vec![vec![None; b.len() + 1]; a.len() + 1];
        go(a, b, a.len(), b.len(), &mut memo)
    }

    fn roster(entries: &[(&str, &str)]) -> GoldRoster {
        GoldRoster {
            meeting_id: "m".into(),
            names: entries
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect::<BTreeMap<_, _>>(),
        }
    }

    fn mention(surface: &str) -> NameMention {
        NameMention {
            utt_index: 0,
            start_tok: 0,
            end_tok: 0,
            surface: surface.into(),
        }
    }

    #[test]
    fn levenshtein_identity_and_boundaries() {
        assert_eq!(levenshtein("john", "john"), 0);
        assert_eq!(levenshtein("jon", "john"), 1);
        assert_eq!(levenshtein("", "abc"), 3);
        assert_eq!(levenshtein("abc", ""), 3);
        assert_eq!(levenshtein("", ""), 0);
    }

    #[test]
    fn levenshtein_matches_oracle_on_short_strings() {
        let alphabet = ['a', 'b', 'c'];
        let mut words: Vec<Vec<char>> = vec![vec![]];
        let mut frontier = vec![vec![]];
        for _ in 0..4 {
            let mut next = Vec::new();
            for w in &frontier {
                for &c in &alphabet {
                    let mut w2: Vec<char> = w.clone();
                    w2.push(c);
                    next.push(w2);
                }
            }
            words.extend(next.iter().cloned());
            frontier = next;
        }
        for a in &words {
            for b in &words {
                let sa: String = a.iter().collect();
                let sb: String = b.iter().collect();
                assert_eq!(levenshtein(&sa, &sb), levenshtein_oracle(a, b), "{sa:?} vs {sb:?}");
            }
        }
    }

    #[test]
    fn similarity_derived_values() {
        assert!((similarity("jon", "john") - 6.0 / 7.0).abs() < 1e-12);
        assert!((similarity("alisyn", "alisyn camerota") - 12.0 / 21.0).abs() < 1e-12);
        assert_eq!(similarity("x", "x"), 1.0);
        assert_eq!(similarity("", ""), 1.0);
    }

    #[test]
    fn match_mention_prefers_token_over_full_string() {
        let gold = roster(&[("speaker1", "ALISYN CAMEROTA"), ("speaker2", "JOHN BERMAN")]);
        let r = match_mention(&mention("Alisyn"), &gold, 0.8);
        assert_eq!(r.best_speaker, "speaker1");
        assert_eq!(r.theta, 1.0);
        assert_eq!(r.d, 0);
    }

    #[test]
    fn match_mention_unmatched_name_goes_to_null() {
        let gold = roster(&[("speaker1", "ALISYN CAMEROTA"), ("speaker2", "JOHN BERMAN")]);
        let r = match_mention(&mention("Zelensky"), &gold, 0.8);
        assert_eq!(r.best_speaker, "null");
        assert!(r.theta < 0.8);
    }

    #[test]
    fn match_mention_fuzzy_full_string() {
        let gold = roster(&[("speaker1", "ALISYN CAMEROTA"), ("speaker2", "JOHN BERMAN")]);
        let r = match_mention(&mention("Jon Berman"), &gold, 0.8);
        assert_eq!(r.best_speaker, "speaker2");
        assert!((r.theta - 20.0 / 21.0).abs() < 1e-12);
        assert_eq!(r.l_sum, 21);
        assert_eq!(r.d, 1);
    }

    #[test]
    fn match_mention_ties_break_to_lower_ordinal() {
        let gold = roster(&[("speaker1", "JOHN SMITH"), ("speaker2", "JOHN DOE")]);
        let r = match_mention(&mention("John"), &gold, 0.8);
        assert_eq!(r.best_speaker, "speaker1");
        assert_eq!(r.theta, 1.0);
    }

    #[test]
    fn match_mention_exact_threshold_requires_exact_token() {
        let gold = roster(&[("speaker1", "JOHN BERMAN")]);
        let exact = match_mention(&mention("berman"), &gold, 1.0);
        assert_eq!(exact.best_speaker, "speaker1");
        let fuzzy = match_mention(&mention("bermann"), &gold, 1.0);
        assert_eq!(fuzzy.best_speaker, "null");
    }

    #[test]
    fn build_labeled_dataset_labels_table_style_dialogue() {
        let gold = roster(&[
            ("speaker1", "John"),
            ("speaker2", "Sarah"),
            ("speaker3", "Mike"),
        ]);
        let t = Transcript::new("m", vec![]);
        let mentions = vec![
            mention("John"),
            mention("John,"),
            mention("Sarah."),
            mention("Sarah."),
            mention("Mike"),
        ];
        let labeled = build_labeled_dataset(&t, &gold, &mentions, 0.8);
        let labels: Vec<&str> = labeled.iter().map(|l| l.label.as_str()).collect();
        assert_eq!(labels, vec!["speaker1", "speaker1", "speaker2", "speaker2", "speaker3"]);
        assert!(labeled.iter().all(|l| l.match_score >= 0.8));
    }

    #[test]
    fn build_labeled_dataset_empty_mentions() {
        let gold = roster(&[("speaker1", "John")]);
        let t = Transcript::new("m", vec![]);
        assert!(build_labeled_dataset(&t, &gold, &[], 0.8).is_empty());
    }

    proptest! {
        #[test]
        fn similarity_is_symmetric_and_bounded(a in "[a-z ]{0,12}", b in "[a-z ]{0,12}") {
            let s = similarity(&a, &b);
            prop_assert!((0.0..=1.0).contains(&s));
            prop_assert!((s - similarity(&b, &a)).abs() < 1e-15);
        }

        #[test]
        fn raising_threshold_never_unnulls(surface in "[a-z]{1,8}", t1 in 0.05f64..0.95, dt in 0.0f64..0.5) {
            let gold = roster(&[("speaker1", "megan foster"), ("speaker2", "brian chen")]);
            let m = mention(&surface);
            let low = match_mention(&m, &gold, t1);
            let high = match_mention(&m, &gold, (t1 + dt).min(1.0));
            if low.best_speaker == "null" {
                prop_assert_eq!(high.best_speaker, "null");
            }
        }
    }
}
