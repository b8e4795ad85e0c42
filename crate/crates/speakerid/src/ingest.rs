//! Parsing of interview records into anonymized transcripts.
//!
//! The input layout is one JSON record per interview, either newline-delimited
//! or wrapped in a single top-level array. Each record carries parallel `utt`
//! and `speaker` arrays; speaker strings may append titles and affiliations
//! after a comma (`"ALISYN CAMEROTA, CNN ANCHOR"`).

use crate::types::{GoldRoster, Transcript, Utterance};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("malformed record: {0}")]
    MalformedRecord(String),
    #[error("empty speaker descriptor")]
    EmptyDescriptor,
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// One raw interview record, fields copied verbatim.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawInterview {
    pub id: String,
    pub utt: Vec<String>,
    pub speaker: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub program: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub date: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub url: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<String>,
}

/// Parses one structured record. The `utt` and `speaker` arrays must be
/// parallel.
pub fn parse_interview(raw_record: &str) -> Result<RawInterview, IngestError> {
    let ri: RawInterview = serde_json::from_str(raw_record)
        .map_err(|e| IngestError::MalformedRecord(e.to_string()))?;
    check_parallel(&ri)?;
    Ok(ri)
}

fn check_parallel(ri: &RawInterview) -> Result<(), IngestError> {
    if ri.utt.len() != ri.speaker.len() {
        return Err(IngestError::MalformedRecord(format!(
            "record '{}': {} utterances but {} speakers",
            ri.id,
            ri.utt.len(),
            ri.speaker.len()
        )));
    }
    Ok(())
}

/// Extracts the name portion of a speaker descriptor: the substring before
/// the first comma, whitespace-trimmed; the whole string when no comma.
pub fn extract_speaker_name(speaker_desc: &str) -> Result<String, IngestError> {
    if speaker_desc.trim().is_empty() {
        return Err(IngestError::EmptyDescriptor);
    }
    let name = match speaker_desc.split_once(',') {
        Some((before, _)) => before.trim(),
        None => speaker_desc.trim(),
    };
    if name.is_empty() {
        return Err(IngestError::EmptyDescriptor);
    }
    Ok(name.to_string())
}

/// Anonymizes a raw interview: distinct extracted names (case-folded) become
/// `speaker1`, `speaker2`, ... in order of first appearance, and the true
/// names move to the gold sidecar. Utterances with no tokens are dropped and
/// the survivors re-indexed.
pub fn to_transcript(ri: &RawInterview) -> Result<(Transcript, GoldRoster), IngestError> {
    check_parallel(ri)?;

    let mut id_by_folded: BTreeMap<String, String> = BTreeMap::new();
    let mut names: BTreeMap<String, String> = BTreeMap::new();
    let mut utterances: Vec<Utterance> = Vec::new();

    for (text, desc) in ri.utt.iter().zip(&ri.speaker) {
        let name = extract_speaker_name(desc)?;
        let folded = crate::label::fold(&name);
        let speaker_id = match id_by_folded.get(&folded) {
            Some(id) => id.clone(),
            None => {
                let id = format!("speaker{}", id_by_folded.len() + 1);
                id_by_folded.insert(folded, id.clone());
                // The first descriptor that produced the identity supplies
                // the gold name, original casing preserved.
                names.insert(id.clone(), name);
                id
            }
        };
        let u = Utterance::new(utterances.len(), speaker_id, text);
        if u.tokens.is_empty() {
            continue;
        }
        utterances.push(u);
    }

    // Identities whose every utterance was empty never made it into the
    // transcript; drop them from the gold roster too.
    let transcript = Transcript::new(ri.id.clone(), utterances);
    names.retain(|id, _| transcript.roster.iter().any(|r| r == id));

    let gold = GoldRoster {
        meeting_id: ri.id.clone(),
        names,
    };
    Ok((transcript, gold))
}

/// Reads a corpus file: newline-delimited records, or a single top-level JSON
/// array of records. Returns one result per record so callers can skip
/// corrupt entries.
pub fn read_corpus(path: &Path) -> Result<Vec<Result<RawInterview, IngestError>>, IngestError> {
    let mut file = File::open(path)?;
    let mut head = [0u8; 1];
    let mut first = None;
    loop {
        let n = file.read(&mut head)?;
        if n == 0 {
            break;
        }
        if !head[0].is_ascii_whitespace() {
            first = Some(head[0]);
            break;
        }
    }

    let file = File::open(path)?;
    if first == Some(b'[') {
        let values: Vec<serde_json::Value> = serde_json::from_reader(BufReader::new(file))
            .map_err(|e| IngestError::MalformedRecord(e.to_string()))?;
        Ok(values
            .into_iter()
            .map(|v| {
                let ri: RawInterview = serde_json::from_value(v)
                    .map_err(|e| IngestError::MalformedRecord(e.to_string()))?;
                check_parallel(&ri)?;
                Ok(ri)
            })
            .collect())
    } else {
        let reader = BufReader::new(file);
        let mut out = Vec::new();
        for line in reader.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            out.push(parse_interview(&line));
        }
        Ok(out)
    }
}
