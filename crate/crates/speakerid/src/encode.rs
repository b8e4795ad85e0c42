//! Context-window assembly and representation pooling.
//!
//! A mention is scored against the speakers of three utterances: the one it
//! occurs in plus its immediate neighbours. This module builds that window
//! (inserting a reserved padding utterance at transcript boundaries), runs a
//! token encoder over the concatenated window, and pools the per-token
//! vectors into sentence vectors r_prev/r_cur/r_next and a mention-span
//! vector r_n.

use crate::types::{NameMention, Transcript, Utterance, PAD_SPEAKER};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use thiserror::Error;

/// The padding utterance's single reserved token.
pub const PAD_TOKEN: &str = "<pad>";

#[derive(Debug, Error)]
pub enum EncodeError {
    #[error("encoder failure: {0}")]
    EncoderFailure(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// The three-utterance context around one mention. The mention's token span
/// indexes into `w_cur.tokens`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextWindow {
    pub w_prev: Utterance,
    pub w_cur: Utterance,
    pub w_next: Utterance,
    pub s_prev: String,
    pub s_cur: String,
    pub s_next: String,
    pub mention: NameMention,
}

impl ContextWindow {
    /// Window tokens in order: prev, cur, next.
    pub fn concat_tokens(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(
            self.w_prev.tokens.len() + self.w_cur.tokens.len() + self.w_next.tokens.len(),
        );
        out.extend_from_slice(&self.w_prev.tokens);
        out.extend_from_slice(&self.w_cur.tokens);
        out.extend_from_slice(&self.w_next.tokens);
        out
    }

    pub fn total_tokens(&self) -> usize {
        self.w_prev.tokens.len() + self.w_cur.tokens.len() + self.w_next.tokens.len()
    }
}

/// One vector per whitespace token of the concatenated window.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenMatrix {
    pub vectors: Vec<Vec<f64>>,
    pub dim: usize,
}

/// Pooled representations for one mention in its window.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedMention {
    pub r_prev: Vec<f64>,
    pub r_cur: Vec<f64>,
    pub r_next: Vec<f64>,
    pub r_n: Vec<f64>,
}

fn padding_utterance() -> Utterance {
    Utterance {
        index: usize::MAX,
        speaker_id: PAD_SPEAKER.to_string(),
        tokens: vec![PAD_TOKEN.to_string()],
    }
}

/// Builds the (w_prev, w_cur, w_next) window around a mention. Neighbouring
/// utterances come from the same transcript only; at the boundaries the
/// reserved padding utterance stands in.
pub fn assemble_window(t: &Transcript, m: &NameMention) -> ContextWindow {
    let cur = t
        .utterance(m.utt_index)
        .expect("mention must reference an utterance of its transcript")
        .clone();
    let prev = if m.utt_index == 0 {
        padding_utterance()
    } else {
        t.utterances[m.utt_index - 1].clone()
    };
    let next = t
        .utterance(m.utt_index + 1)
        .cloned()
        .unwrap_or_else(padding_utterance);
    ContextWindow {
        s_prev: prev.speaker_id.clone(),
        s_cur: cur.speaker_id.clone(),
        s_next: next.speaker_id.clone(),
        w_prev: prev,
        w_cur: cur,
        w_next: next,
        mention: m.clone(),
    }
}

/// Trims a window to at most `budget` tokens: first w_prev from its front,
/// then w_next from its back, each keeping at least one token so pooling
/// stays well-defined. As a last resort w_cur is trimmed from its ends
/// without touching the mention span (indices are re-based). The result may
/// still exceed a budget smaller than the span plus two flanking tokens.
pub fn fit_to_budget(cw: &ContextWindow, budget: Option<usize>) -> ContextWindow {
    let budget = match budget {
        Some(b) => b,
        None => return cw.clone(),
    };
    let mut out = cw.clone();
    if out.total_tokens() <= budget {
        return out;
    }

    let over = out.total_tokens() - budget;
    let give = out.w_prev.tokens.len().saturating_sub(1).min(over);
    out.w_prev.tokens.drain(..give);

    if out.total_tokens() > budget {
        let over = out.total_tokens() - budget;
        let give = out.w_next.tokens.len().saturating_sub(1).min(over);
        let keep = out.w_next.tokens.len() - give;
        out.w_next.tokens.truncate(keep);
    }

    if out.total_tokens() > budget {
        let over = out.total_tokens() - budget;
        let tail = out.w_cur.tokens.len() - 1 - out.mention.end_tok;
        let give = tail.min(over);
        out.w_cur.tokens.truncate(out.w_cur.tokens.len() - give);
    }
    if out.total_tokens() > budget {
        let over = out.total_tokens() - budget;
        let give = out.mention.start_tok.min(over);
        out.w_cur.tokens.drain(..give);
        out.mention.start_tok -= give;
        out.mention.end_tok -= give;
    }
    out
}

/// Encoder output for one token sequence: subword vectors plus which token
/// each subword belongs to.
#[derive(Debug, Clone)]
pub struct SubwordEncoding {
    pub vectors: Vec<Vec<f64>>,
    /// Parallel to `vectors`; token indices must be non-decreasing and cover
    /// every input token.
    pub token_of: Vec<usize>,
}

/// A token-sequence encoder. Implementations must be safe to share across
/// worker threads: `encode` takes `&self` and must not require external
/// synchronization.
pub trait ContextEncoder: Send + Sync {
    fn dim(&self) -> usize;
    /// Maximum window length in tokens, if the backend has one.
    fn length_budget(&self) -> Option<usize> {
        None
    }
    fn encode(&self, tokens: &[String]) -> Result<SubwordEncoding, EncodeError>;
}

/// Runs the encoder over the concatenated window and averages subword
/// vectors within each token. The window must already fit the encoder's
/// length budget (see [`fit_to_budget`]).
pub fn encode_window(cw: &ContextWindow, encoder: &dyn ContextEncoder) -> Result<TokenMatrix, EncodeError> {
    let tokens = cw.concat_tokens();
    if tokens.is_empty() {
        return Err(EncodeError::EncoderFailure("empty window".into()));
    }
    debug_assert!(encoder.length_budget().is_none_or(|b| tokens.len() <= b));

    let enc = encoder.encode(&tokens)?;
    if enc.vectors.len() != enc.token_of.len() {
        return Err(EncodeError::EncoderFailure(
            "subword/alignment length mismatch".into(),
        ));
    }
    let dim = encoder.dim();
    let mut sums = vec![vec![0.0; dim]; tokens.len()];
    let mut counts = vec![0usize; tokens.len()];
    for (vec, &tok) in enc.vectors.iter().zip(&enc.token_of) {
        if tok >= tokens.len() {
            return Err(EncodeError::EncoderFailure(format!(
                "alignment references token {tok} of {}",
                tokens.len()
            )));
        }
        if vec.len() != dim {
            return Err(EncodeError::DimensionMismatch {
                expected: dim,
                got: vec.len(),
            });
        }
        for (s, v) in sums[tok].iter_mut().zip(vec) {
            *s += v;
        }
        counts[tok] += 1;
    }
    for (tok, &c) in counts.iter().enumerate() {
        if c == 0 {
            return Err(EncodeError::EncoderFailure(format!(
                "token {tok} received no subword vectors"
            )));
        }
        for s in sums[tok].iter_mut() {
            *s /= c as f64;
        }
    }
    Ok(TokenMatrix { vectors: sums, dim })
}

fn mean_rows(rows: &[Vec<f64>], dim: usize) -> Vec<f64> {
    let mut out = vec![0.0; dim];
    for row in rows {
        for (o, v) in out.iter_mut().zip(row) {
            *o += v;
        }
    }
    let n = rows.len() as f64;
    out.iter_mut().for_each(|o| *o /= n);
    out
}

/// Mean token vector of each window utterance.
pub fn sentence_vectors(cw: &ContextWindow, tm: &TokenMatrix) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let p = cw.w_prev.tokens.len();
    let c = cw.w_cur.tokens.len();
    let r_prev = mean_rows(&tm.vectors[..p], tm.dim);
    let r_cur = mean_rows(&tm.vectors[p..p + c], tm.dim);
    let r_next = mean_rows(&tm.vectors[p + c..], tm.dim);
    (r_prev, r_cur, r_next)
}

/// Mean token vector over a span of w_cur (inclusive token indices).
pub fn span_vector(cw: &ContextWindow, tm: &TokenMatrix, start_tok: usize, end_tok: usize) -> Vec<f64> {
    let p = cw.w_prev.tokens.len();
    mean_rows(&tm.vectors[p + start_tok..=p + end_tok], tm.dim)
}

/// Pools the token matrix into sentence vectors and the mention-span vector.
pub fn pool(cw: &ContextWindow, tm: &TokenMatrix) -> EncodedMention {
    debug_assert_eq!(tm.vectors.len(), cw.total_tokens());
    let (r_prev, r_cur, r_next) = sentence_vectors(cw, tm);
    let r_n = span_vector(cw, tm, cw.mention.start_tok, cw.mention.end_tok);
    EncodedMention {
        r_prev,
        r_cur,
        r_next,
        r_n,
    }
}

const FNV_OFFSET: u64 = 0xcbf29ce484222325;
const FNV_PRIME: u64 = 0x100000001b3;

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// Deterministic hash embedding encoder for desk-scale training runs.
///
/// Each token hashes to a bucket whose vector is a fixed seeded sign vector
/// (entries ±1/√dim) plus a zero-initialized learned vector that training
/// updates. Bucket 0 is reserved for the padding token. Hashing case-folds
/// and strips edge punctuation, so "Megan," and "megan" share a bucket.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "HashEncoderState", into = "HashEncoderState")]
pub struct HashEncoder {
    dim: usize,
    n_buckets: usize,
    seed: u64,
    #[allow(clippy::type_complexity)]
    fixed: Vec<Vec<f64>>,
    pub learned: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct HashEncoderState {
    dim: usize,
    n_buckets: usize,
    seed: u64,
    learned: Vec<Vec<f64>>,
}

impl From<HashEncoderState> for HashEncoder {
    fn from(s: HashEncoderState) -> Self {
        let fixed = HashEncoder::build_fixed(s.dim, s.n_buckets, s.seed);
        HashEncoder {
            dim: s.dim,
            n_buckets: s.n_buckets,
            seed: s.seed,
            fixed,
            learned: s.learned,
        }
    }
}

impl From<HashEncoder> for HashEncoderState {
    fn from(e: HashEncoder) -> Self {
        HashEncoderState {
            dim: e.dim,
            n_buckets: e.n_buckets,
            seed: e.seed,
            learned: e.learned,
        }
    }
}

impl HashEncoder {
    pub fn new(dim: usize, n_buckets: usize, seed: u64) -> Self {
        assert!(dim > 0 && n_buckets >= 2);
        HashEncoder {
            dim,
            n_buckets,
            seed,
            fixed: Self::build_fixed(dim, n_buckets, seed),
            learned: vec![vec![0.0; dim]; n_buckets],
        }
    }

    fn build_fixed(dim: usize, n_buckets: usize, seed: u64) -> Vec<Vec<f64>> {
        use rand::Rng;
        use rand::SeedableRng;
        let scale = 1.0 / (dim as f64).sqrt();
        (0..n_buckets)
            .map(|b| {
                let mix = seed ^ (b as u64).wrapping_mul(0x9E3779B97F4A7C15);
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(mix);
                (0..dim)
                    .map(|_| if rng.gen::<bool>() { scale } else { -scale })
                    .collect()
            })
            .collect()
    }

    pub fn n_buckets(&self) -> usize {
        self.n_buckets
    }

    /// Bucket index for a token. The padding token gets the reserved bucket.
    pub fn bucket(&self, token: &str) -> usize {
        if token == PAD_TOKEN {
            return 0;
        }
        let norm = crate::detect::normalize_token(token);
        let h = fnv1a64(norm.as_bytes());
        1 + (h % (self.n_buckets as u64 - 1)) as usize
    }

    pub fn fixed_row(&self, bucket: usize) -> &[f64] {
        &self.fixed[bucket]
    }

    fn token_vector(&self, token: &str) -> Vec<f64> {
        let b = self.bucket(token);
        self.fixed[b]
            .iter()
            .zip(&self.learned[b])
            .map(|(f, l)| f + l)
            .collect()
    }
}

impl ContextEncoder for HashEncoder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn encode(&self, tokens: &[String]) -> Result<SubwordEncoding, EncodeError> {
        if tokens.is_empty() {
            return Err(EncodeError::EncoderFailure("empty sequence".into()));
        }
        Ok(SubwordEncoding {
            vectors: tokens.iter().map(|t| self.token_vector(t)).collect(),
            token_of: (0..tokens.len()).collect(),
        })
    }
}

/// Adapter over vectors exported from a pretrained contextual encoder.
///
/// The export is a JSONL file (one `{"token": ..., "vector": [...]}` per
/// line) that must include rows for `<unk>` and `<pad>`. Unknown tokens fall
/// back to the `<unk>` row. Tokens are matched after case-folding and edge
/// punctuation stripping, mirroring how the export is produced.
#[derive(Debug, Clone)]
pub struct PretrainedEncoder {
    dim: usize,
    table: BTreeMap<String, Vec<f64>>,
    unk: Vec<f64>,
    pad: Vec<f64>,
    budget: usize,
}

#[derive(Debug, Deserialize)]
struct VectorRow {
    token: String,
    vector: Vec<f64>,
}

impl PretrainedEncoder {
    /// Loads the export at `path` (a JSONL file, or a directory containing
    /// `vectors.jsonl`).
    pub fn load(path: &Path) -> Result<Self, EncodeError> {
        let file = if path.is_dir() {
            path.join("vectors.jsonl")
        } else {
            path.to_path_buf()
        };
        let reader = BufReader::new(File::open(&file).map_err(|e| {
            EncodeError::EncoderFailure(format!("cannot open {}: {e}", file.display()))
        })?);
        let mut table = BTreeMap::new();
        let mut dim = None;
        for line in reader.lines() {
            let line = line.map_err(|e| EncodeError::EncoderFailure(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let row: VectorRow = serde_json::from_str(&line)
                .map_err(|e| EncodeError::EncoderFailure(format!("bad vector row: {e}")))?;
            match dim {
                None => dim = Some(row.vector.len()),
                Some(d) if d != row.vector.len() => {
                    return Err(EncodeError::DimensionMismatch {
                        expected: d,
                        got: row.vector.len(),
                    })
                }
                _ => {}
            }
            table.insert(row.token, row.vector);
        }
        let dim = dim.ok_or_else(|| EncodeError::EncoderFailure("empty vector table".into()))?;
        let unk = table
            .get("<unk>")
            .cloned()
            .ok_or_else(|| EncodeError::EncoderFailure("vector table lacks <unk> row".into()))?;
        let pad = table
            .get("<pad>")
            .cloned()
            .ok_or_else(|| EncodeError::EncoderFailure("vector table lacks <pad> row".into()))?;
        Ok(PretrainedEncoder {
            dim,
            table,
            unk,
            pad,
            budget: 512,
        })
    }

    fn token_vector(&self, token: &str) -> Vec<f64> {
        if token == PAD_TOKEN {
            return self.pad.clone();
        }
        let norm = crate::detect::normalize_token(token);
        self.table.get(&norm).cloned().unwrap_or_else(|| self.unk.clone())
    }
}

impl ContextEncoder for PretrainedEncoder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn length_budget(&self) -> Option<usize> {
        Some(self.budget)
    }

    fn encode(&self, tokens: &[String]) -> Result<SubwordEncoding, EncodeError> {
        if tokens.is_empty() {
            return Err(EncodeError::EncoderFailure("empty sequence".into()));
        }
        Ok(SubwordEncoding {
            vectors: tokens.iter().map(|t| self.token_vector(t)).collect(),
            token_of: (0..tokens.len()).collect(),
        })
    }
}
