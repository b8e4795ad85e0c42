//! Domain types shared by the whole pipeline.
//!
//! A [`Transcript`] is an anonymized dialogue: ordered utterances, each tagged
//! with an opaque speaker identity (`speaker1`, `speaker2`, ...). The true
//! speaker names live in a separate [`GoldRoster`] sidecar so the anonymized
//! artifact never carries them. Person-name occurrences are [`NameMention`]
//! token spans, and a [`LabeledMention`] binds a mention to a speaker identity
//! (or `"null"`) via fuzzy matching.
//!
//! All values are immutable after construction and safe to share across
//! threads.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use unicode_normalization::UnicodeNormalization;

/// Reserved identity for padding slots in assembled context windows.
/// Never valid inside a stored transcript.
pub const PAD_SPEAKER: &str = "pad";

/// Reserved identity for mentions that match no speaker in the meeting.
pub const NULL_SPEAKER: &str = "null";

/// One contiguous turn of speech by a single speaker.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Utterance {
    /// Position in the transcript, contiguous from 0.
    pub index: usize,
    /// Opaque identity token, e.g. `"speaker1"`, or [`PAD_SPEAKER`] in
    /// assembled windows (where `index` is meaningless).
    pub speaker_id: String,
    /// Whitespace-delimited word tokens.
    pub tokens: Vec<String>,
}

impl Utterance {
    pub fn new(index: usize, speaker_id: impl Into<String>, text: &str) -> Self {
        Utterance {
            index,
            speaker_id: speaker_id.into(),
            tokens: tokenize(text),
        }
    }

    pub fn text(&self) -> String {
        self.tokens.join(" ")
    }

    pub fn is_pad(&self) -> bool {
        self.speaker_id == PAD_SPEAKER
    }
}

/// An anonymized dialogue transcript.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    pub meeting_id: String,
    pub utterances: Vec<Utterance>,
    /// Speaker identities in order of first appearance.
    pub roster: Vec<String>,
}

impl Transcript {
    /// Builds a transcript, deriving the roster from the utterances in order
    /// of first appearance.
    pub fn new(meeting_id: impl Into<String>, utterances: Vec<Utterance>) -> Self {
        let mut roster: Vec<String> = Vec::new();
        for u in &utterances {
            if !roster.iter().any(|s| s == &u.speaker_id) {
                roster.push(u.speaker_id.clone());
            }
        }
        Transcript {
            meeting_id: meeting_id.into(),
            utterances,
            roster,
        }
    }

    pub fn utterance(&self, index: usize) -> Option<&Utterance> {
        self.utterances.get(index)
    }
}

/// Sidecar mapping from speaker identity to the true full name.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldRoster {
    pub meeting_id: String,
    /// speaker_id -> full true name, e.g. `"ALISYN CAMEROTA"`.
    pub names: BTreeMap<String, String>,
}

impl GoldRoster {
    /// Speaker ids sorted by ordinal (`speaker2` before `speaker10`),
    /// non-numbered ids after, lexicographically.
    pub fn speakers_in_order(&self) -> Vec<&str> {
        let mut ids: Vec<&str> = self.names.keys().map(|s| s.as_str()).collect();
        ids.sort_by_key(|id| speaker_sort_key(id));
        ids
    }
}

/// Sort key for speaker identities: numbered `speakerN` ids come first in
/// numeric order, anything else after in lexicographic order.
pub fn speaker_sort_key(speaker_id: &str) -> (u8, u64, String) {
    match speaker_ordinal(speaker_id) {
        Some(n) => (0, n, String::new()),
        None => (1, 0, speaker_id.to_string()),
    }
}

/// Parses the ordinal out of a generated `speakerN` identity.
pub fn speaker_ordinal(speaker_id: &str) -> Option<u64> {
    let rest = speaker_id.strip_prefix("speaker")?;
    if rest.is_empty() || !rest.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    rest.parse().ok()
}

/// A detected person-name span inside one utterance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NameMention {
    pub utt_index: usize,
    /// First token of the span.
    pub start_tok: usize,
    /// Last token of the span, inclusive.
    pub end_tok: usize,
    /// The joined tokens of the span, exactly as they appear.
    pub surface: String,
}

impl NameMention {
    /// Number of tokens covered by the span.
    pub fn span_len(&self) -> usize {
        self.end_tok - self.start_tok + 1
    }
}

/// A mention bound to a speaker identity (or `"null"`) by fuzzy matching.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledMention {
    #[serde(flatten)]
    pub mention: NameMention,
    /// A roster speaker_id, or [`NULL_SPEAKER`] when no name matched.
    pub label: String,
    /// Best similarity found against any speaker, in [0, 1].
    pub match_score: f64,
}

/// Sigmoid probabilities from the three pairing heads.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeadScores {
    pub p_prev: f64,
    pub p_cur: f64,
    pub p_next: f64,
}

impl HeadScores {
    pub fn get(&self, head: Head) -> f64 {
        match head {
            Head::Prev => self.p_prev,
            Head::Cur => self.p_cur,
            Head::Next => self.p_next,
        }
    }
}

/// One of the three window positions a name can be attributed to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Head {
    Prev,
    Cur,
    Next,
}

impl Head {
    pub const ALL: [Head; 3] = [Head::Prev, Head::Cur, Head::Next];
}

impl std::fmt::Display for Head {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Head::Prev => write!(f, "prev"),
            Head::Cur => write!(f, "cur"),
            Head::Next => write!(f, "next"),
        }
    }
}

/// Final (speaker identity -> name) decision for one speaker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub speaker_id: String,
    pub name: String,
    pub probability: f64,
}

/// Splits text into whitespace-delimited tokens after NFC normalization.
///
/// Punctuation stays attached to its word, so token indices are stable across
/// tools that agree on whitespace.
pub fn tokenize(text: &str) -> Vec<String> {
    text.nfc()
        .collect::<String>()
        .split_whitespace()
        .map(|t| t.to_string())
        .collect()
}

/// Checks every structural invariant of a transcript/gold-roster pair.
///
/// Returns human-readable violation descriptions; an empty list means the pair
/// is well formed. Violations are returned rather than thrown so callers can
/// report all of them at once.
pub fn validate_transcript(t: &Transcript, g: &GoldRoster) -> Vec<String> {
    let mut violations = Vec::new();

    if t.meeting_id != g.meeting_id {
        violations.push(format!(
            "meeting_id mismatch: transcript '{}' vs gold roster '{}'",
            t.meeting_id, g.meeting_id
        ));
    }

    for (pos, u) in t.utterances.iter().enumerate() {
        if u.index != pos {
            violations.push(format!(
                "non-contiguous index: utterance at position {pos} has index {}",
                u.index
            ));
        }
        if u.speaker_id == PAD_SPEAKER {
            violations.push(format!(
                "utterance {} uses reserved speaker '{PAD_SPEAKER}'",
                u.index
            ));
        } else if !t.roster.iter().any(|s| s == &u.speaker_id) {
            violations.push(format!(
                "utterance {} speaker '{}' missing from roster",
                u.index, u.speaker_id
            ));
        }
        if u.tokens.is_empty() {
            violations.push(format!("utterance {} has no tokens", u.index));
        }
    }

    let mut seen = std::collections::BTreeSet::new();
    for s in &t.roster {
        if s == PAD_SPEAKER || s == NULL_SPEAKER {
            violations.push(format!("roster contains reserved identity '{s}'"));
        }
        if !seen.insert(s.clone()) {
            violations.push(format!("roster contains duplicate identity '{s}'"));
        }
        if !t.utterances.iter().any(|u| &u.speaker_id == s) {
            violations.push(format!("roster identity '{s}' never speaks"));
        }
        if !g.names.contains_key(s) {
            violations.push(format!("gold roster missing name for '{s}'"));
        }
    }

    for (s, name) in &g.names {
        if !t.roster.iter().any(|r| r == s) {
            violations.push(format!("gold roster names unknown speaker '{s}'"));
        }
        if name.trim().is_empty() {
            violations.push(format!("gold name for '{s}' is blank"));
        }
    }

    violations
}
