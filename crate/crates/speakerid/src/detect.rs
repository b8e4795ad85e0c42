//! Person-name mention detection behind a pluggable interface.
//!
//! Production pipelines delegate detection to an external NER tool and feed
//! its spans in through [`import_external_mentions`]. The built-in gazetteer
//! detector scans utterances for roster names (full names and their tokens)
//! and is exactly reproducible, which makes it the reference implementation
//! for tests and for corpora whose rosters are known.

use crate::types::{GoldRoster, NameMention, Transcript};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DetectError {
    #[error("external detector output not available: {0}")]
    ExternalDetectorUnavailable(PathBuf),
    #[error("span out of range in meeting '{meeting_id}': utterance {utt_index}, tokens {start_tok}..={end_tok}")]
    SpanOutOfRange {
        meeting_id: String,
        utt_index: usize,
        start_tok: usize,
        end_tok: usize,
    },
    #[error("gazetteer requires a gold roster or a name file")]
    MissingGazetteer,
    #[error("malformed mention record: {0}")]
    MalformedMention(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Where gazetteer entries come from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "source", content = "path")]
pub enum GazetteerSource {
    /// Entries are the gold roster's full names and their tokens.
    Roster,
    /// Entries are read from a file, one name per line.
    File(PathBuf),
}

/// Detector selection.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum DetectorKind {
    /// Spans imported from an external NER tool's output file.
    External { mention_file: PathBuf },
    /// Deterministic scan against a gazetteer.
    Gazetteer { source: GazetteerSource },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub kind: DetectorKind,
    /// Gazetteer entries shorter than this many characters never match.
    pub min_token_len: usize,
}

impl DetectorConfig {
    pub fn roster_gazetteer() -> Self {
        DetectorConfig {
            kind: DetectorKind::Gazetteer {
                source: GazetteerSource::Roster,
            },
            min_token_len: 2,
        }
    }

    pub fn external(mention_file: impl Into<PathBuf>) -> Self {
        DetectorConfig {
            kind: DetectorKind::External {
                mention_file: mention_file.into(),
            },
            min_token_len: 2,
        }
    }
}

/// On-disk record for externally detected spans, one JSON object per line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MentionRecord {
    pub meeting_id: String,
    pub utt_index: usize,
    pub start_tok: usize,
    pub end_tok: usize,
    pub surface: String,
}

/// Strips non-alphanumeric characters from token edges and case-folds.
pub fn normalize_token(tok: &str) -> String {
    tok.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase()
}

fn normalize_phrase(tokens: &[String]) -> String {
    tokens
        .iter()
        .map(|t| normalize_token(t))
        .collect::<Vec<_>>()
        .join(" ")
        .trim()
        .to_string()
}

/// A set of normalized name phrases to scan for.
#[derive(Debug, Clone)]
pub struct Gazetteer {
    entries: BTreeSet<String>,
    max_tokens: usize,
}

impl Gazetteer {
    /// Builds entries from raw name strings: each full name plus each of its
    /// tokens, normalized; entries shorter than `min_token_len` characters
    /// are dropped.
    pub fn from_names<'a>(names: impl IntoIterator<Item = &'a str>, min_token_len: usize) -> Self {
        let mut entries = BTreeSet::new();
        for name in names {
            let toks = crate::types::tokenize(name);
            let full = normalize_phrase(&toks);
            for entry in std::iter::once(full).chain(toks.iter().map(|t| normalize_token(t))) {
                if entry.chars().count() >= min_token_len {
                    entries.insert(entry);
                }
            }
        }
        let max_tokens = entries
            .iter()
            .map(|e| e.split(' ').count())
            .max()
            .unwrap_or(1);
        Gazetteer { entries, max_tokens }
    }

    pub fn from_roster(gold: &GoldRoster, min_token_len: usize) -> Self {
        Self::from_names(gold.names.values().map(|s| s.as_str()), min_token_len)
    }

    pub fn from_file(path: &Path, min_token_len: usize) -> Result<Self, DetectError> {
        let reader = BufReader::new(File::open(path)?);
        let mut names = Vec::new();
        for line in reader.lines() {
            let line = line?;
            if !line.trim().is_empty() {
                names.push(line);
            }
        }
        Ok(Self::from_names(names.iter().map(|s| s.as_str()), min_token_len))
    }

    pub fn contains(&self, phrase: &str) -> bool {
        self.entries.contains(phrase)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn max_tokens(&self) -> usize {
        self.max_tokens
    }
}

/// Scans one utterance's tokens for gazetteer hits. Overlapping candidates
/// are resolved longest-first, then leftmost-first.
fn scan_utterance(utt_index: usize, tokens: &[String], gaz: &Gazetteer) -> Vec<NameMention> {
    let mut candidates: Vec<(usize, usize)> = Vec::new();
    for start in 0..tokens.len() {
        for len in 1..=gaz.max_tokens().min(tokens.len() - start) {
            let end = start + len - 1;
            if gaz.contains(&normalize_phrase(&tokens[start..=end])) {
                candidates.push((start, end));
            }
        }
    }
    candidates.sort_by_key(|&(start, end)| (std::cmp::Reverse(end - start), start));

    let mut taken = vec![false; tokens.len()];
    let mut chosen: Vec<(usize, usize)> = Vec::new();
    for (start, end) in candidates {
        if taken[start..=end].iter().any(|&t| t) {
            continue;
        }
        taken[start..=end].iter_mut().for_each(|t| *t = true);
        chosen.push((start, end));
    }
    chosen.sort();

    chosen
        .into_iter()
        .map(|(start, end)| NameMention {
            utt_index,
            start_tok: start,
            end_tok: end,
            surface: tokens[start..=end].join(" "),
        })
        .collect()
}

/// Produces the mention spans for a transcript per the configured detector.
///
/// Results are sorted by `(utt_index, start_tok)` and never overlap within an
/// utterance.
pub fn detect_mentions(
    t: &Transcript,
    cfg: &DetectorConfig,
    gold: Option<&GoldRoster>,
) -> Result<Vec<NameMention>, DetectError> {
    match &cfg.kind {
        DetectorKind::External { mention_file } => {
            if !mention_file.exists() {
                return Err(DetectError::ExternalDetectorUnavailable(mention_file.clone()));
            }
            import_external_mentions(t, mention_file)
        }
        DetectorKind::Gazetteer { source } => {
            let gaz = match source {
                GazetteerSource::Roster => {
                    let gold = gold.ok_or(DetectError::MissingGazetteer)?;
                    Gazetteer::from_roster(gold, cfg.min_token_len)
                }
                GazetteerSource::File(path) => Gazetteer::from_file(path, cfg.min_token_len)?,
            };
            let mut out = Vec::new();
            for u in &t.utterances {
                out.extend(scan_utterance(u.index, &u.tokens, &gaz));
            }
            Ok(out)
        }
    }
}

/// Ingests spans produced by an external NER tool.
///
/// Records for other meetings are ignored. Spans must refer to existing
/// utterances and tokens; surfaces are re-derived from the span so the
/// mention contract holds regardless of how the tool renders text. Overlaps
/// are resolved with the same longest-first, leftmost-first rule as the
/// gazetteer scan.
pub fn import_external_mentions(
    t: &Transcript,
    mention_file: &Path,
) -> Result<Vec<NameMention>, DetectError> {
    if !mention_file.exists() {
        return Err(DetectError::ExternalDetectorUnavailable(mention_file.to_path_buf()));
    }
    let reader = BufReader::new(File::open(mention_file)?);
    let mut spans: Vec<(usize, usize, usize)> = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: MentionRecord = serde_json::from_str(&line)
            .map_err(|e| DetectError::MalformedMention(e.to_string()))?;
        if rec.meeting_id != t.meeting_id {
            continue;
        }
        let utt = t
            .utterance(rec.utt_index)
            .ok_or_else(|| DetectError::SpanOutOfRange {
                meeting_id: rec.meeting_id.clone(),
                utt_index: rec.utt_index,
                start_tok: rec.start_tok,
                end_tok: rec.end_tok,
            })?;
        if rec.start_tok > rec.end_tok || rec.end_tok >= utt.tokens.len() {
            return Err(DetectError::SpanOutOfRange {
                meeting_id: rec.meeting_id,
                utt_index: rec.utt_index,
                start_tok: rec.start_tok,
                end_tok: rec.end_tok,
            });
        }
        spans.push((rec.utt_index, rec.start_tok, rec.end_tok));
    }

    spans.sort_by_key(|&(u, s, e)| (u, std::cmp::Reverse(e - s), s));
    spans.dedup();

    let mut out: Vec<NameMention> = Vec::new();
    let mut taken: Vec<(usize, usize, usize)> = Vec::new();
    for (u, s, e) in spans {
        if taken
            .iter()
            .any(|&(tu, ts, te)| tu == u && s <= te && ts <= e)
        {
            continue;
        }
        taken.push((u, s, e));
        let tokens = &t.utterances[u].tokens;
        out.push(NameMention {
            utt_index: u,
            start_tok: s,
            end_tok: e,
            surface: tokens[s..=e].join(" "),
        });
    }
    out.sort_by_key(|m| (m.utt_index, m.start_tok));
    Ok(out)
}
