//! Speaker-level precision/recall/F1 and the text-only recall ceiling.
//!
//! A prediction is correct when the predicted name fuzzy-matches the
//! speaker's own gold name (token-max similarity at the standard 0.8
//! threshold), so name variants count. Counts pool over all meetings of a
//! split before the ratios are taken.

use crate::inference::PredictionRecord;
use crate::label::{speaker_similarity, DEFAULT_MATCH_THRESHOLD};
use crate::types::{GoldRoster, NameMention, Transcript};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("prediction references unknown speaker '{speaker_id}' in meeting '{meeting_id}'")]
    UnknownSpeaker {
        meeting_id: String,
        speaker_id: String,
    },
}

/// Micro-aggregated speaker identification scores.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub n_correct: usize,
    pub n_predicted: usize,
    pub n_speakers: usize,
    /// Speakers whose name is recoverable from the transcript at all;
    /// zero until filled from the labeled dataset (see
    /// [`recall_upper_bound`]).
    pub n_matchable: usize,
}

/// F1 from precision and recall on the same scale; zero when both are zero.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

impl Metrics {
    fn from_counts(n_correct: usize, n_predicted: usize, n_speakers: usize) -> Self {
        let precision = if n_predicted > 0 {
            n_correct as f64 / n_predicted as f64
        } else {
            0.0
        };
        let recall = if n_speakers > 0 {
            n_correct as f64 / n_speakers as f64
        } else {
            0.0
        };
        Metrics {
            precision,
            recall,
            f1: f1_score(precision, recall),
            n_correct,
            n_predicted,
            n_speakers,
            n_matchable: 0,
        }
    }
}

/// Scores predictions against gold rosters. Every gold speaker counts
/// toward recall whether or not anything was predicted for it.
pub fn speaker_prf(
    predictions: &[PredictionRecord],
    gold: &BTreeMap<String, GoldRoster>,
    threshold: f64,
) -> Result<Metrics, EvalError> {
    let n_speakers: usize = gold.values().map(|g| g.names.len()).sum();
    let mut n_correct = 0usize;
    for p in predictions {
        let roster = gold
            .get(&p.meeting_id)
            .ok_or_else(|| EvalError::UnknownSpeaker {
                meeting_id: p.meeting_id.clone(),
                speaker_id: p.speaker_id.clone(),
            })?;
        let gold_name =
            roster
                .names
                .get(&p.speaker_id)
                .ok_or_else(|| EvalError::UnknownSpeaker {
                    meeting_id: p.meeting_id.clone(),
                    speaker_id: p.speaker_id.clone(),
                })?;
        if speaker_similarity(&p.name, gold_name) >= threshold {
            n_correct += 1;
        }
    }
    Ok(Metrics::from_counts(n_correct, predictions.len(), n_speakers))
}

/// Convenience wrapper at the standard matching threshold.
pub fn speaker_prf_default(
    predictions: &[PredictionRecord],
    gold: &BTreeMap<String, GoldRoster>,
) -> Result<Metrics, EvalError> {
    speaker_prf(predictions, gold, DEFAULT_MATCH_THRESHOLD)
}

/// How many speakers a text-only model could ever recall.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct UpperBound {
    pub n_matchable: usize,
    pub n_speakers: usize,
}

impl UpperBound {
    pub fn fraction(&self) -> f64 {
        if self.n_speakers > 0 {
            self.n_matchable as f64 / self.n_speakers as f64
        } else {
            0.0
        }
    }
}

/// Fraction of speakers with at least one transcript mention that
/// fuzzy-matches their gold name.
pub fn recall_upper_bound<'a>(
    items: impl IntoIterator<Item = (&'a GoldRoster, &'a [NameMention])>,
) -> UpperBound {
    let mut n_speakers = 0usize;
    let mut n_matchable = 0usize;
    for (gold, mentions) in items {
        for name in gold.names.values() {
            n_speakers += 1;
            if mentions
                .iter()
                .any(|m| speaker_similarity(&m.surface, name) >= DEFAULT_MATCH_THRESHOLD)
            {
                n_matchable += 1;
            }
        }
    }
    UpperBound {
        n_matchable,
        n_speakers,
    }
}

/// Split-level corpus counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub meetings: usize,
    pub sentences: usize,
    pub names: usize,
    pub speakers: usize,
}

/// Tallies one split: meetings, utterances, name mentions, and speakers
/// appearing in the transcripts.
pub fn dataset_stats<'a>(
    items: impl IntoIterator<Item = (&'a Transcript, &'a [NameMention])>,
) -> DatasetStats {
    let mut stats = DatasetStats {
        meetings: 0,
        sentences: 0,
        names: 0,
        speakers: 0,
    };
    for (t, mentions) in items {
        stats.meetings += 1;
        stats.sentences += t.utterances.len();
        stats.names += mentions.len();
        stats.speakers += t.roster.len();
    }
    stats
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Utterance;
    use proptest::prelude::*;

    fn gold_with(meeting: &str, names: &[(&str, &str)]) -> GoldRoster {
        GoldRoster {
            meeting_id: meeting.into(),
            names: names
                .iter()
                .map(|(s, n)| (s.to_string(), n.to_string()))
                .collect(),
        }
    }

    fn pred(meeting: &str, speaker: &str, name: &str) -> PredictionRecord {
        PredictionRecord {
            meeting_id: meeting.into(),
            speaker_id: speaker.into(),
            name: name.into(),
            probability: 0.9,
        }
    }

    #[test]
    fn four_of_five_predictions_over_ten_speakers() {
        // P = 4/5 = 0.8, R = 4/10 = 0.4, F1 = 2*0.8*0.4/1.2 = 0.5333.
        let mut gold = BTreeMap::new();
        let names: Vec<(String, String)> = (1..=10)
            .map(|i| (format!("speaker{i}"), format!("person{i:02}")))
            .collect();
        let refs: Vec<(&str, &str)> = names
            .iter()
            .map(|(s, n)| (s.as_str(), n.as_str()))
            .collect();
        gold.insert("m".to_string(), gold_with("m", &refs));
        let preds = vec![
            pred("m", "speaker1", "person01"),
            pred("m", "speaker2", "person02"),
            pred("m", "speaker3", "person03"),
            pred("m", "speaker4", "person04"),
            pred("m", "speaker5", "zzzzz"),
        ];
        let m = speaker_prf_default(&preds, &gold).unwrap();
        assert_eq!((m.n_correct, m.n_predicted, m.n_speakers), (4, 5, 10));
        assert!((m.precision - 0.8).abs() < 1e-12);
        assert!((m.recall - 0.4).abs() < 1e-12);
        assert!((m.f1 - 0.5333333333333333).abs() < 1e-12);
    }

    #[test]
    fn published_precision_recall_pairs_recompute_to_their_f1() {
        for (p, r, f1) in [(80.3, 50.0, 61.6), (78.8, 49.1, 60.5), (75.8, 47.2, 58.2)] {
            let got = f1_score(p, r);
            assert!(
                (got - f1).abs() < 0.05,
                "f1({p}, {r}) = {got}, expected about {f1}"
            );
        }
    }

    #[test]
    fn zero_predictions_score_zero() {
        let mut gold = BTreeMap::new();
        gold.insert(
            "m".to_string(),
            gold_with("m", &[("speaker1", "Ann"), ("speaker2", "Bob")]),
        );
        let m = speaker_prf_default(&[], &gold).unwrap();
        assert_eq!((m.precision, m.recall, m.f1), (0.0, 0.0, 0.0));
        assert_eq!(m.n_speakers, 2);
    }

    #[test]
    fn name_variant_counts_as_correct() {
        let mut gold = BTreeMap::new();
        gold.insert(
            "m".to_string(),
            gold_with("m", &[("speaker1", "ALISYN CAMEROTA")]),
        );
        let m = speaker_prf_default(&[pred("m", "speaker1", "alisyn")], &gold).unwrap();
        assert_eq!(m.n_correct, 1);
        let m = speaker_prf_default(&[pred("m", "speaker1", "frederick")], &gold).unwrap();
        assert_eq!(m.n_correct, 0);
    }

    #[test]
    fn unknown_speaker_is_an_error() {
        let mut gold = BTreeMap::new();
        gold.insert("m".to_string(), gold_with("m", &[("speaker1", "Ann")]));
        assert!(matches!(
            speaker_prf_default(&[pred("m", "speaker9", "ann")], &gold),
            Err(EvalError::UnknownSpeaker { .. })
        ));
        assert!(matches!(
            speaker_prf_default(&[pred("other", "speaker1", "ann")], &gold),
            Err(EvalError::UnknownSpeaker { .. })
        ));
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
    fn seventy_one_of_one_hundred_six_speakers_is_two_thirds() {
        let golds: Vec<GoldRoster> = (0..106)
            .map(|i| gold_with(&format!("m{i}"), &[("speaker1", &format!("person{i:03}"))]))
            .collect();
        let mentions: Vec<Vec<NameMention>> = (0..106)
            .map(|i| {
                if i < 71 {
                    vec![mention(&format!("person{i:03}"))]
                } else {
                    vec![mention("somebody else")]
                }
            })
            .collect();
        let ub = recall_upper_bound(
            golds
                .iter()
                .zip(mentions.iter())
                .map(|(g, m)| (g, m.as_slice())),
        );
        assert_eq!((ub.n_matchable, ub.n_speakers), (71, 106));
        assert!((ub.fraction() - 0.6698113207547169).abs() < 1e-12);
        assert!((ub.fraction() - 0.670).abs() < 0.0005);
    }

    #[test]
    fn exact_self_introductions_make_everyone_matchable() {
        let gold = gold_with("m", &[("speaker1", "Ann"), ("speaker2", "Bob")]);
        let mentions = vec![mention("Ann"), mention("Bob")];
        let ub = recall_upper_bound([(&gold, mentions.as_slice())]);
        assert_eq!(ub.fraction(), 1.0);
    }

    #[test]
    fn no_mentions_means_zero_upper_bound() {
        let gold = gold_with("m", &[("speaker1", "Ann")]);
        let ub = recall_upper_bound([(&gold, &[] as &[NameMention])]);
        assert_eq!(ub.fraction(), 0.0);
        let empty = recall_upper_bound(std::iter::empty());
        assert_eq!(empty.fraction(), 0.0);
    }

    #[test]
    fn empty_split_stats_are_zero() {
        let s = dataset_stats(std::iter::empty());
        assert_eq!(
            s,
            DatasetStats {
                meetings: 0,
                sentences: 0,
                names: 0,
                speakers: 0
            }
        );
    }

    #[test]
    fn stats_match_hand_tally() {
        let t1 = Transcript::new(
            "m1",
            vec![
                Utterance::new(0, "speaker1", "a b"),
                Utterance::new(1, "speaker2", "c"),
                Utterance::new(2, "speaker1", "d"),
            ],
        );
        let t2 = Transcript::new("m2", vec![Utterance::new(0, "speaker1", "e f g")]);
        let m1 = vec![mention("a"), mention("c")];
        let m2 = vec![mention("e")];
        let s = dataset_stats([(&t1, m1.as_slice()), (&t2, m2.as_slice())]);
        assert_eq!(
            s,
            DatasetStats {
                meetings: 2,
                sentences: 4,
                names: 3,
                speakers: 3
            }
        );
    }

    #[test]
    fn f1_consistency_choice_examples() {
        assert_eq!(f1_score(0.0, 0.0), 0.0);
        assert!((f1_score(1.0, 1.0) - 1.0).abs() < 1e-15);
        assert!((f1_score(0.5, 0.5) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn adding_unmatchable_gold_speakers_keeps_precision_drops_recall() {
        let mut gold = BTreeMap::new();
        gold.insert(
            "m".to_string(),
            gold_with("m", &[("speaker1", "Ann"), ("speaker2", "Bob")]),
        );
        let preds = vec![pred("m", "speaker1", "ann")];
        let before = speaker_prf_default(&preds, &gold).unwrap();

        gold.insert(
            "m2".to_string(),
            gold_with("m2", &[("speaker1", "Quentin"), ("speaker2", "Rita")]),
        );
        let after = speaker_prf_default(&preds, &gold).unwrap();
        assert_eq!(before.precision, after.precision);
        assert!(after.recall < before.recall);
    }

    proptest! {
        #[test]
        fn f1_formula_is_consistent(c in 0usize..50, extra_p in 0usize..50, extra_s in 0usize..50) {
            let m = Metrics::from_counts(c, c + extra_p, c + extra_s);
            let want = f1_score(m.precision, m.recall);
            prop_assert!((m.f1 - want).abs() < 1e-12);
            prop_assert!(m.n_correct <= m.n_predicted.min(m.n_speakers) || m.n_predicted == 0);
        }
    }
}
