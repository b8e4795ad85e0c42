//! Shared fixtures for the integration tests: turn a generated corpus into
//! labeled meetings and split it the way the pipeline does.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::io::Write;

use speakerid::dataset::{assign_splits, sample_indices, Meeting, Split};
use speakerid::detect::import_external_mentions;
use speakerid::ingest::to_transcript;
use speakerid::label::{build_labeled_dataset, DEFAULT_MATCH_THRESHOLD};
use speakerid::synth::SynthOutput;
use speakerid::types::GoldRoster;

/// Labels a generated corpus through the same import path the CLI uses.
pub fn build_corpus(out: &SynthOutput) -> (Vec<Meeting>, BTreeMap<String, GoldRoster>) {
    let dir = tempfile::tempdir().unwrap();
    let mention_path = dir.path().join("mentions.jsonl");
    let mut f = std::fs::File::create(&mention_path).unwrap();
    for m in &out.mentions {
        serde_json::to_writer(&mut f, m).unwrap();
        f.write_all(b"\n").unwrap();
    }
    drop(f);
    let mut meetings = Vec::new();
    let mut gold = BTreeMap::new();
    for interview in &out.interviews {
        let (t, g) = to_transcript(interview).unwrap();
        let mentions = import_external_mentions(&t, &mention_path).unwrap();
        let labeled = build_labeled_dataset(&t, &g, &mentions, DEFAULT_MATCH_THRESHOLD);
        gold.insert(t.meeting_id.clone(), g);
        meetings.push(Meeting {
            transcript: t,
            mentions: labeled,
        });
    }
    (meetings, gold)
}

/// Shuffles and splits 8/1/1, returning (train, dev, test).
pub fn split_corpus(
    meetings: Vec<Meeting>,
    seed: u64,
) -> (Vec<Meeting>, Vec<Meeting>, Vec<Meeting>) {
    let order = sample_indices(meetings.len(), meetings.len(), seed).unwrap();
    let splits = assign_splits(order.len(), (8, 1, 1));
    let mut tr = Vec::new();
    let mut dv = Vec::new();
    let mut te = Vec::new();
    for (pos, &idx) in order.iter().enumerate() {
        let m = meetings[idx].clone();
        match splits[pos] {
            Split::Train => tr.push(m),
            Split::Dev => dv.push(m),
            Split::Test => te.push(m),
        }
    }
    (tr, dv, te)
}
