//! On-disk dataset format and corpus splitting.
//!
//! A dataset is a JSON-lines file with one record per meeting: the anonymized
//! utterances, the labeled name mentions, and a split tag. True names never
//! appear in it; they live in a separate gold sidecar file keyed by
//! `meeting_id` so that evaluation inputs cannot leak into model inputs.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

use crate::types::{GoldRoster, LabeledMention, Transcript, Utterance};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("requested {requested} meetings but the corpus only has {available}")]
    InsufficientCorpus { requested: usize, available: usize },
    #[error("malformed record at {path}:{line}: {source}")]
    Malformed {
        path: String,
        line: usize,
        source: serde_json::Error,
    },
    #[error("duplicate meeting_id {0} in gold file")]
    DuplicateGold(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Which partition a meeting belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        };
        f.write_str(s)
    }
}

/// One meeting as stored on disk: a single JSON line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub meeting_id: String,
    pub split: Split,
    pub utterances: Vec<Utterance>,
    pub mentions: Vec<LabeledMention>,
}

impl DatasetRecord {
    pub fn new(transcript: &Transcript, mentions: Vec<LabeledMention>, split: Split) -> Self {
        DatasetRecord {
            meeting_id: transcript.meeting_id.clone(),
            split,
            utterances: transcript.utterances.clone(),
            mentions,
        }
    }

    /// Rebuilds the in-memory meeting. The roster is re-derived from the
    /// utterances, which is lossless because rosters are always derived that
    /// way in the first place.
    pub fn into_meeting(self) -> Meeting {
        Meeting {
            transcript: Transcript::new(self.meeting_id, self.utterances),
            mentions: self.mentions,
        }
    }
}

/// An in-memory meeting ready for training or prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct Meeting {
    pub transcript: Transcript,
    pub mentions: Vec<LabeledMention>,
}

/// Writes one record per line.
pub fn write_dataset(path: &Path, records: &[DatasetRecord]) -> Result<(), DatasetError> {
    let mut out = BufWriter::new(File::create(path)?);
    for rec in records {
        serde_json::to_writer(&mut out, rec).expect("dataset records serialize");
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_dataset(path: &Path) -> Result<Vec<DatasetRecord>, DatasetError> {
    let reader = BufReader::new(File::open(path)?);
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|source| DatasetError::Malformed {
            path: path.display().to_string(),
            line: i + 1,
            source,
        })?;
        records.push(rec);
    }
    Ok(records)
}

/// Writes the gold sidecar: one [`GoldRoster`] per line.
pub fn write_gold(path: &Path, rosters: &[GoldRoster]) -> Result<(), DatasetError> {
    let mut out = BufWriter::new(File::create(path)?);
    for g in rosters {
        serde_json::to_writer(&mut out, g).expect("gold rosters serialize");
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Reads the gold sidecar into a map keyed by meeting_id.
pub fn read_gold(path: &Path) -> Result<BTreeMap<String, GoldRoster>, DatasetError> {
    let reader = BufReader::new(File::open(path)?);
    let mut gold = BTreeMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let roster: GoldRoster =
            serde_json::from_str(&line).map_err(|source| DatasetError::Malformed {
                path: path.display().to_string(),
                line: i + 1,
                source,
            })?;
        if gold.insert(roster.meeting_id.clone(), roster).is_some() {
            let line_text: String = line.chars().take(64).collect();
            return Err(DatasetError::DuplicateGold(line_text));
        }
    }
    Ok(gold)
}

/// Draws `sample_size` distinct indices from `0..available`, deterministically
/// for a given seed, preserving no particular order beyond the seed.
pub fn sample_indices(
    available: usize,
    sample_size: usize,
    seed: u64,
) -> Result<Vec<usize>, DatasetError> {
    if sample_size > available {
        return Err(DatasetError::InsufficientCorpus {
            requested: sample_size,
            available,
        });
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut all: Vec<usize> = (0..available).collect();
    all.shuffle(&mut rng);
    all.truncate(sample_size);
    Ok(all)
}

/// Partitions `n` items into train/dev/test by the given ratio. Dev and test
/// take `floor(n * share)` items each and train takes the remainder, so a
/// 200-meeting sample at 8:1:1 is exactly 160/20/20.
pub fn split_sizes(n: usize, ratio: (usize, usize, usize)) -> (usize, usize, usize) {
    let (tr, dv, te) = ratio;
    let total = tr + dv + te;
    assert!(total > 0, "split ratio must be non-zero");
    let dev = n * dv / total;
    let test = n * te / total;
    let train = n - dev - test;
    (train, dev, test)
}

/// Assigns splits positionally: the first `train` indices are train, the next
/// `dev` are dev, the rest test. Callers pass an already-shuffled order.
pub fn assign_splits(n: usize, ratio: (usize, usize, usize)) -> Vec<Split> {
    let (train, dev, _) = split_sizes(n, ratio);
    (0..n)
        .map(|i| {
            if i < train {
                Split::Train
            } else if i < train + dev {
                Split::Dev
            } else {
                Split::Test
            }
        })
        .collect()
}

/// Groups records into (train, dev, test) meetings.
pub fn partition(records: Vec<DatasetRecord>) -> (Vec<Meeting>, Vec<Meeting>, Vec<Meeting>) {
    let mut train = Vec::new();
    let mut dev = Vec::new();
    let mut test = Vec::new();
    for rec in records {
        let split = rec.split;
        let meeting = rec.into_meeting();
        match split {
            Split::Train => train.push(meeting),
            Split::Dev => dev.push(meeting),
            Split::Test => test.push(meeting),
        }
    }
    (train, dev, test)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::NameMention;
    use tempfile::tempdir;

    fn sample_meeting(id: &str) -> (Transcript, Vec<LabeledMention>) {
        let utterances = vec![
            Utterance::new(0, "speaker1", "good morning this is ana speaking"),
            Utterance::new(1, "speaker2", "thanks ana"),
        ];
        let transcript = Transcript::new(id, utterances);
        let mentions = vec![
            LabeledMention {
                mention: NameMention {
                    utt_index: 0,
                    start_tok: 4,
                    end_tok: 4,
                    surface: "ana".into(),
                },
                label: "speaker1".into(),
                match_score: 1.0,
            },
            LabeledMention {
                mention: NameMention {
                    utt_index: 1,
                    start_tok: 1,
                    end_tok: 1,
                    surface: "ana".into(),
                },
                label: "speaker1".into(),
                match_score: 1.0,
            },
        ];
        (transcript, mentions)
    }

    #[test]
    fn dataset_round_trips_through_disk() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("data.jsonl");
        let (transcript, mentions) = sample_meeting("m1");
        let records = vec![DatasetRecord::new(&transcript, mentions, Split::Train)];
        write_dataset(&path, &records).unwrap();
        let back = read_dataset(&path).unwrap();
        assert_eq!(back, records);
        let meeting = back.into_iter().next().unwrap().into_meeting();
        assert_eq!(meeting.transcript, transcript);
    }

    #[test]
    fn record_lines_are_flat_json_objects() {
        let (transcript, mentions) = sample_meeting("m1");
        let rec = DatasetRecord::new(&transcript, mentions, Split::Dev);
        let json = serde_json::to_value(&rec).unwrap();
        assert_eq!(json["split"], "dev");
        let m = &json["mentions"][0];
        assert_eq!(m["utt_index"], 0);
        assert_eq!(m["surface"], "ana");
        assert_eq!(m["label"], "speaker1");
    }

    #[test]
    fn gold_round_trips_and_rejects_duplicates() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("gold.jsonl");
        let mut names = BTreeMap::new();
        names.insert("speaker1".to_string(), "Ana Silva".to_string());
        let g = GoldRoster {
            meeting_id: "m1".into(),
            names,
        };
        write_gold(&path, std::slice::from_ref(&g)).unwrap();
        let gold = read_gold(&path).unwrap();
        assert_eq!(gold.get("m1"), Some(&g));

        write_gold(&path, &[g.clone(), g.clone()]).unwrap();
        assert!(matches!(
            read_gold(&path),
            Err(DatasetError::DuplicateGold(_))
        ));
    }

    #[test]
    fn sampling_is_deterministic_and_checks_corpus_size() {
        let a = sample_indices(500, 200, 9).unwrap();
        let b = sample_indices(500, 200, 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 200);
        let mut sorted = a.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), 200, "indices must be distinct");

        let c = sample_indices(500, 200, 10).unwrap();
        assert_ne!(a, c, "different seeds should draw different samples");

        let err = sample_indices(100, 200, 9).unwrap_err();
        assert!(matches!(
            err,
            DatasetError::InsufficientCorpus {
                requested: 200,
                available: 100
            }
        ));
    }

    #[test]
    fn two_hundred_meetings_split_160_20_20() {
        assert_eq!(split_sizes(200, (8, 1, 1)), (160, 20, 20));
        assert_eq!(split_sizes(10, (8, 1, 1)), (8, 1, 1));
        let splits = assign_splits(200, (8, 1, 1));
        assert_eq!(splits.iter().filter(|s| **s == Split::Train).count(), 160);
        assert_eq!(splits.iter().filter(|s| **s == Split::Dev).count(), 20);
        assert_eq!(splits.iter().filter(|s| **s == Split::Test).count(), 20);
        assert_eq!(splits[0], Split::Train);
        assert_eq!(splits[159], Split::Train);
        assert_eq!(splits[160], Split::Dev);
        assert_eq!(splits[180], Split::Test);
    }
}
