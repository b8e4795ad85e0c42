//! From per-mention head probabilities to final speaker→name assignments.
//!
//! Every mention nominates up to three candidates, one per window speaker
//! whose head probability clears the threshold. Each speaker then keeps the
//! highest-probability candidate, with deterministic tie-breaks: the earlier
//! mention wins, then the lexicographically smaller name.

use crate::backprop::{instance_forward, Instance};
use crate::encode::{assemble_window, encode_window, fit_to_budget, ContextEncoder, HashEncoder};
use crate::model::{EdgeWeightMode, GcnParams, HeadParams, TrainingTargets};
use crate::types::{speaker_sort_key, Assignment, Head, NameMention, Transcript, PAD_SPEAKER};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Which pairing architecture scores mentions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// One instance per mention; no graph refinement.
    Single,
    /// One instance per utterance grouping its K mentions, refined by the
    /// graph layers.
    Multi,
    /// Multi-name grouping with refinement disabled (the ablation path).
    MultiNoGcn,
}

impl ModelKind {
    pub fn groups_by_utterance(&self) -> bool {
        !matches!(self, ModelKind::Single)
    }

    pub fn uses_gcn(&self) -> bool {
        matches!(self, ModelKind::Multi)
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            ModelKind::Single => "single",
            ModelKind::Multi => "multi",
            ModelKind::MultiNoGcn => "multi_no_gcn",
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "single" => Ok(ModelKind::Single),
            "multi" => Ok(ModelKind::Multi),
            "multi_no_gcn" => Ok(ModelKind::MultiNoGcn),
            other => Err(format!(
                "unknown model kind {other:?} (expected single, multi, or multi_no_gcn)"
            )),
        }
    }
}

/// Token-vector source for instance building. The hash path keeps bucket
/// ids so the learned table stays trainable; the frozen path bakes the
/// encoder output into the instance.
pub enum InstanceEncoder<'a> {
    Hash(&'a HashEncoder),
    Frozen(&'a dyn ContextEncoder),
}

impl<'a> InstanceEncoder<'a> {
    fn length_budget(&self) -> Option<usize> {
        match self {
            InstanceEncoder::Hash(e) => e.length_budget(),
            InstanceEncoder::Frozen(e) => e.length_budget(),
        }
    }
}

/// One scoring instance plus the metadata inference and training need.
#[derive(Debug, Clone)]
pub struct WindowInstance {
    pub numeric: Instance,
    pub s_prev: String,
    pub s_cur: String,
    pub s_next: String,
    /// Original mentions, parallel to `numeric.spans`.
    pub mentions: Vec<NameMention>,
}

impl WindowInstance {
    pub fn window_speaker(&self, h: Head) -> &str {
        match h {
            Head::Prev => &self.s_prev,
            Head::Cur => &self.s_cur,
            Head::Next => &self.s_next,
        }
    }
}

/// Builds instances for a transcript's mentions: one per mention for the
/// single-name model, one per utterance otherwise. Mentions arrive sorted by
/// position (the detect module's contract) and targets are zeroed; training
/// fills them from labels.
pub fn build_instances(
    t: &Transcript,
    mentions: &[NameMention],
    kind: ModelKind,
    encoder: &InstanceEncoder,
) -> Result<Vec<WindowInstance>, crate::encode::EncodeError> {
    let mut groups: Vec<Vec<NameMention>> = Vec::new();
    if kind.groups_by_utterance() {
        let mut by_utt: BTreeMap<usize, Vec<NameMention>> = BTreeMap::new();
        for m in mentions {
            by_utt.entry(m.utt_index).or_default().push(m.clone());
        }
        groups.extend(by_utt.into_values());
    } else {
        groups.extend(mentions.iter().map(|m| vec![m.clone()]));
    }

    let mut out = Vec::with_capacity(groups.len());
    for group in groups {
        // Fit the window around the hull of all spans so trimming cannot
        // cut any mention in the group.
        let hull = NameMention {
            utt_index: group[0].utt_index,
            start_tok: group.iter().map(|m| m.start_tok).min().unwrap(),
            end_tok: group.iter().map(|m| m.end_tok).max().unwrap(),
            surface: group[0].surface.clone(),
        };
        let cw = assemble_window(t, &hull);
        let fitted = fit_to_budget(&cw, encoder.length_budget());
        let offset = cw.mention.start_tok - fitted.mention.start_tok;

        let tokens = fitted.concat_tokens();
        let (base, buckets) = match encoder {
            InstanceEncoder::Hash(e) => {
                let buckets: Vec<usize> = tokens.iter().map(|tok| e.bucket(tok)).collect();
                let base = buckets.iter().map(|&b| e.fixed_row(b).to_vec()).collect();
                (base, buckets)
            }
            InstanceEncoder::Frozen(e) => {
                let tm = encode_window(&fitted, *e)?;
                (tm.vectors, Vec::new())
            }
        };

        let spans: Vec<(usize, usize)> = group
            .iter()
            .map(|m| (m.start_tok - offset, m.end_tok - offset))
            .collect();
        let k = spans.len();
        out.push(WindowInstance {
            numeric: Instance {
                base,
                buckets,
                prev_len: fitted.w_prev.tokens.len(),
                cur_len: fitted.w_cur.tokens.len(),
                next_len: fitted.w_next.tokens.len(),
                spans,
                targets: vec![TrainingTargets::NONE; k],
            },
            s_prev: fitted.s_prev,
            s_cur: fitted.s_cur,
            s_next: fitted.s_next,
            mentions: group,
        })
    }
    Ok(out)
}

/// Canonical prediction form of a mention surface: per-token edge
/// punctuation stripped, case-folded, single-space joined.
pub fn canonical_name(surface: &str) -> String {
    crate::types::tokenize(surface)
        .iter()
        .map(|t| crate::detect::normalize_token(t))
        .filter(|t| !t.is_empty())
        .collect::<Vec<_>>()
        .join(" ")
}

/// One head's nomination: this mention's name belongs to that speaker.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub speaker_id: String,
    pub name: String,
    pub probability: f64,
    /// (utterance index, start token) of the source mention.
    pub mention_pos: (usize, usize),
    pub head: Head,
}

/// Frozen model pieces needed to score instances.
pub struct Scorer<'a> {
    pub heads: &'a HeadParams,
    pub gcn: &'a GcnParams,
    pub mode: EdgeWeightMode,
    pub kind: ModelKind,
    /// Learned embedding table for hash-encoded instances.
    pub learned: Option<&'a [Vec<f64>]>,
}

impl<'a> Scorer<'a> {
    /// Graph parameters as the model kind sees them: the ablation and the
    /// single-name model run with refinement disabled.
    pub fn effective_gcn(&self) -> GcnParams {
        if self.kind.uses_gcn() {
            self.gcn.clone()
        } else {
            GcnParams::disabled()
        }
    }
}

pub const DEFAULT_TAU: f64 = 0.5;

/// Scores every instance and emits a candidate for each (name, head) pair
/// whose probability reaches `tau`. Heads pointing at a padding slot are
/// skipped.
pub fn collect_candidates(
    instances: &[WindowInstance],
    scorer: &Scorer,
    tau: f64,
) -> Vec<Candidate> {
    let gcn = scorer.effective_gcn();
    let mut out = Vec::new();
    for wi in instances {
        let (_, scores) = instance_forward(
            &wi.numeric,
            scorer.heads,
            &gcn,
            scorer.mode,
            scorer.learned,
        );
        for (i, s) in scores.iter().enumerate() {
            let m = &wi.mentions[i];
            for &h in &Head::ALL {
                let speaker = wi.window_speaker(h);
                if speaker == PAD_SPEAKER {
                    continue;
                }
                let p = s.get(h);
                if p >= tau {
                    out.push(Candidate {
                        speaker_id: speaker.to_string(),
                        name: canonical_name(&m.surface),
                        probability: p,
                        mention_pos: (m.utt_index, m.start_tok),
                        head: h,
                    });
                }
            }
        }
    }
    out
}

/// True when `a` beats `b` for the same speaker: higher probability, then
/// earlier mention, then lexicographically smaller name.
fn beats(a: &Candidate, b: &Candidate) -> bool {
    if a.probability != b.probability {
        return a.probability > b.probability;
    }
    if a.mention_pos != b.mention_pos {
        return a.mention_pos < b.mention_pos;
    }
    a.name < b.name
}

/// Picks each speaker's best candidate. Output is sorted by speaker id;
/// the same name may win for several speakers.
pub fn resolve(candidates: &[Candidate]) -> Vec<Assignment> {
    let mut best: BTreeMap<String, &Candidate> = BTreeMap::new();
    for c in candidates {
        match best.get(c.speaker_id.as_str()) {
            Some(cur) if !beats(c, cur) => {}
            _ => {
                best.insert(c.speaker_id.clone(), c);
            }
        }
    }
    let mut out: Vec<Assignment> = best
        .into_iter()
        .map(|(speaker_id, c)| Assignment {
            speaker_id,
            name: c.name.clone(),
            probability: c.probability,
        })
        .collect();
    out.sort_by_key(|a| speaker_sort_key(&a.speaker_id));
    out
}

/// Optional post-filter: when one name wins multiple speakers, keep only
/// the highest-probability speaker (ties: smaller speaker id). Off by
/// default; dropped speakers get no replacement name.
pub fn resolve_unique(candidates: &[Candidate]) -> Vec<Assignment> {
    let assignments = resolve(candidates);
    let mut best_for_name: BTreeMap<&str, &Assignment> = BTreeMap::new();
    for a in &assignments {
        match best_for_name.get(a.name.as_str()) {
            Some(cur)
                if cur.probability > a.probability
                    || (cur.probability == a.probability
                        && speaker_sort_key(&cur.speaker_id) < speaker_sort_key(&a.speaker_id)) => {}
            _ => {
                best_for_name.insert(a.name.as_str(), a);
            }
        }
    }
    assignments
        .iter()
        .filter(|a| {
            best_for_name
                .get(a.name.as_str())
                .is_some_and(|b| b.speaker_id == a.speaker_id)
        })
        .cloned()
        .collect()
}

/// On-disk prediction record, one JSON object per line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub meeting_id: String,
    pub speaker_id: String,
    pub name: String,
    pub probability: f64,
}

/// Scores pre-built instances meeting by meeting and resolves one name per
/// speaker. `unique` switches on the one-speaker-per-name post-filter.
pub fn predict_meetings(
    items: &[(String, Vec<WindowInstance>)],
    scorer: &Scorer,
    tau: f64,
    unique: bool,
) -> Vec<PredictionRecord> {
    let mut out = Vec::new();
    for (meeting_id, instances) in items {
        let candidates = collect_candidates(instances, scorer, tau);
        let assignments = if unique {
            resolve_unique(&candidates)
        } else {
            resolve(&candidates)
        };
        out.extend(assignments.into_iter().map(|a| PredictionRecord {
            meeting_id: meeting_id.clone(),
            speaker_id: a.speaker_id,
            name: a.name,
            probability: a.probability,
        }));
    }
    out
}
