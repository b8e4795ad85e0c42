//! Synthetic dialogue generator with known ground truth.
//!
//! Meetings follow conversational patterns whose supervision is decidable
//! from bag-of-words evidence, which is what a hash encoder can learn:
//!
//! * every speaker introduces themselves by name, so a current-slot positive
//!   always has intro cue words in its own utterance;
//! * a speaker is thanked by name only right after a turn in which they said
//!   their own name, so a previous-slot positive always has the name token
//!   in the previous utterance;
//! * a handoff by name is always followed by that speaker re-introducing
//!   themselves, so a next-slot positive always has the name token in the
//!   next utterance;
//! * outsider names never fuzzy-match any roster name, and "distant"
//!   mentions name a roster member who is not in the window, training the
//!   all-zero target patterns.
//!
//! The generator additionally guarantees the converse: a name token never
//! appears in a neighbouring utterance unless that pattern demands it, and
//! the utterances where it legitimately appears with a zero target (the
//! handoff before a re-introduction, the thanks after an introduction) are
//! distinguishable by their cue words. Names are drawn from pools whose
//! entries are pairwise dissimilar under the fuzzy matcher, so labels are
//! never ambiguous.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detect::MentionRecord;
use crate::ingest::RawInterview;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid generator config: {0}")]
    InvalidConfig(String),
}

/// Roster first names, used in dialogue text in this casing.
const FIRST_NAMES: &[&str] = &[
    "Amara", "Bruno", "Carla", "Dmitri", "Elena", "Felipe", "Greta", "Hiro", "Ines", "Jonas",
    "Karim", "Lucia", "Mateo", "Nadia", "Oscar", "Priya", "Quentin", "Rosa", "Stefan", "Tanvi",
    "Ursula", "Viktor", "Wendell", "Ximena", "Yusuf", "Zofia", "Abdul", "Bianca", "Cedric",
    "Devika", "Emre", "Fatima", "Gunnar", "Helga", "Idris", "Jamila", "Kenji", "Leila", "Marcus",
    "Noor",
];

/// Roster family names, appearing only in speaker descriptors.
const LAST_NAMES: &[&str] = &[
    "Vasquez", "Okafor", "Lindgren", "Petrov", "Tanaka", "Moreau", "Kowalski", "Abebe",
    "Fernandez", "Olsen", "Marchetti", "Novak", "Santos", "Dubois", "Keller", "Ahmadi",
    "Ferreira", "Osei", "Johansson", "Ramirez", "Costa", "Bergman", "Ivanov", "Duarte", "Haddad",
    "Nilsson", "Vargas", "Ortega", "Mbeki", "Larsen",
];

/// Names of people who are never meeting participants.
const OUTSIDERS: &[&str] = &[
    "Zubin", "Walther", "Yevgeny", "Sylvie", "Dragan", "Renate", "Bogdan", "Cyrus",
];

const ROLES: &[&str] = &["HOST", "GUEST", "ANALYST", "REPORTER", "PRODUCER", "CORRESPONDENT"];

const INTRO_TEMPLATES: &[&str] = &[
    "Good morning everyone, this is {0} speaking.",
    "Hi folks, this is {0} joining the call.",
    "Welcome back, this is {0} speaking.",
];

const REINTRO_TEMPLATES: &[&str] = &[
    "This is {0} again, one quick point.",
    "This is {0} here again on that topic.",
];

const THANKS_TEMPLATES: &[&str] = &[
    "Thanks {0}, that was a clear rundown.",
    "Thank you {0}, very helpful context.",
    "Thanks {0}, good summary of the issue.",
];

const HANDOFF_TEMPLATES: &[&str] = &[
    "Next let us hear from {0} on this.",
    "I want to invite {0} for the details.",
];

const PAIR_TEMPLATES: &[&str] = &[
    "Thanks {0}. {1}, over to you now.",
    "Appreciate it {0}. {1}, please go ahead.",
];

const NULL_TEMPLATES: &[&str] = &[
    "I spoke with {0} from the vendor side yesterday.",
    "My contact {0} flagged the shipment delay too.",
];

const DISTANT_TEMPLATES: &[&str] = &[
    "Earlier {0} circulated the revised figures internally.",
    "As {0} noted in the memo, demand is holding.",
];

const FILLER_TEMPLATES: &[&str] = &[
    "Let us move on to the next item.",
    "The quarterly numbers look better than expected.",
    "We still need to settle the rollout timeline.",
    "That matches what the regional team reported.",
    "I will circulate the document after the call.",
    "Nothing further from my side right now.",
];

/// Relative frequencies of the body-turn patterns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatternWeights {
    pub filler: u32,
    pub reintro: u32,
    pub thanks: u32,
    pub handoff: u32,
    pub pair: u32,
    pub null: u32,
    pub distant: u32,
}

impl Default for PatternWeights {
    fn default() -> Self {
        PatternWeights {
            filler: 28,
            reintro: 15,
            thanks: 18,
            handoff: 12,
            pair: 8,
            null: 11,
            distant: 8,
        }
    }
}

impl PatternWeights {
    fn total(&self) -> u32 {
        self.filler
            + self.reintro
            + self.thanks
            + self.handoff
            + self.pair
            + self.null
            + self.distant
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_meetings: usize,
    pub seed: u64,
    pub min_speakers: usize,
    pub max_speakers: usize,
    /// Dialogue turns after the introduction block.
    pub min_body_turns: usize,
    pub max_body_turns: usize,
    pub weights: PatternWeights,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_meetings: 200,
            seed: 42,
            min_speakers: 3,
            max_speakers: 5,
            min_body_turns: 8,
            max_body_turns: 14,
            weights: PatternWeights::default(),
        }
    }
}

impl SynthConfig {
    fn validate(&self) -> Result<(), SynthError> {
        let fail = |m: &str| Err(SynthError::InvalidConfig(m.to_string()));
        if self.min_speakers < 2 {
            return fail("meetings need at least 2 speakers");
        }
        if self.max_speakers < self.min_speakers {
            return fail("max_speakers must be >= min_speakers");
        }
        if self.max_speakers > FIRST_NAMES.len() || self.max_speakers > LAST_NAMES.len() {
            return fail("max_speakers exceeds the name pools");
        }
        if self.max_body_turns < self.min_body_turns {
            return fail("max_body_turns must be >= min_body_turns");
        }
        if self.weights.total() == 0 {
            return fail("pattern weights must not all be zero");
        }
        Ok(())
    }
}

/// Per-corpus ground-truth counts, for checking dataset statistics against
/// an independent source.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SynthTallies {
    pub meetings: usize,
    pub sentences: usize,
    /// Total name mentions, outsiders included.
    pub names: usize,
    /// Summed roster sizes.
    pub speakers: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    pub interviews: Vec<RawInterview>,
    /// Exact mention spans, in the external-detector import format.
    pub mentions: Vec<MentionRecord>,
    pub tallies: SynthTallies,
}

/// Fills `{i}` placeholders with names, keeping any attached punctuation on
/// the token. Returns the text and the (token index, name) of each mention.
fn fill_template(template: &str, names: &[&str]) -> (String, Vec<(usize, String)>) {
    let mut tokens: Vec<String> = Vec::new();
    let mut spans = Vec::new();
    for (i, tok) in template.split_whitespace().enumerate() {
        match (tok.find('{'), tok.find('}')) {
            (Some(open), Some(close)) if open < close => {
                let idx: usize = tok[open + 1..close].parse().expect("placeholder index");
                let name = names[idx];
                tokens.push(format!("{}{}{}", &tok[..open], name, &tok[close + 1..]));
                spans.push((i, name.to_string()));
            }
            _ => tokens.push(tok.to_string()),
        }
    }
    (tokens.join(" "), spans)
}

struct Turn {
    speaker: usize,
    text: String,
    /// (token index, mentioned name as written).
    mentions: Vec<(usize, String)>,
    /// True for introductions and re-introductions: the speaker says their
    /// own name.
    self_ref: bool,
}

fn pick<'a>(rng: &mut ChaCha20Rng, options: &'a [&'a str]) -> &'a str {
    options[rng.gen_range(0..options.len())]
}

fn sample_distinct(rng: &mut ChaCha20Rng, pool: usize, k: usize) -> Vec<usize> {
    let mut all: Vec<usize> = (0..pool).collect();
    all.shuffle(rng);
    all.truncate(k);
    all
}

/// Picks a speaker index excluding the listed ones.
fn pick_speaker(rng: &mut ChaCha20Rng, n: usize, exclude: &[Option<usize>]) -> Option<usize> {
    let banned: BTreeSet<usize> = exclude.iter().flatten().copied().collect();
    let candidates: Vec<usize> = (0..n).filter(|i| !banned.contains(i)).collect();
    if candidates.is_empty() {
        None
    } else {
        Some(candidates[rng.gen_range(0..candidates.len())])
    }
}

enum Pattern {
    Filler,
    Reintro,
    Thanks,
    Handoff,
    Pair,
    Null,
    Distant,
}

fn draw_pattern(rng: &mut ChaCha20Rng, w: &PatternWeights) -> Pattern {
    let mut x = rng.gen_range(0..w.total());
    for (weight, p) in [
        (w.filler, Pattern::Filler),
        (w.reintro, Pattern::Reintro),
        (w.thanks, Pattern::Thanks),
        (w.handoff, Pattern::Handoff),
        (w.pair, Pattern::Pair),
        (w.null, Pattern::Null),
        (w.distant, Pattern::Distant),
    ] {
        if x < weight {
            return p;
        }
        x -= weight;
    }
    Pattern::Filler
}

struct MeetingData {
    interview: RawInterview,
    mentions: Vec<MentionRecord>,
    n_speakers: usize,
    n_sentences: usize,
}

fn gen_meeting(cfg: &SynthConfig, rng: &mut ChaCha20Rng, index: usize) -> MeetingData {
    let meeting_id = format!("synth-{index:04}");
    let n = rng.gen_range(cfg.min_speakers..=cfg.max_speakers);
    let firsts: Vec<&str> = sample_distinct(rng, FIRST_NAMES.len(), n)
        .into_iter()
        .map(|i| FIRST_NAMES[i])
        .collect();
    let lasts: Vec<&str> = sample_distinct(rng, LAST_NAMES.len(), n)
        .into_iter()
        .map(|i| LAST_NAMES[i])
        .collect();
    let outsiders: Vec<&str> = sample_distinct(rng, OUTSIDERS.len(), 3)
        .into_iter()
        .map(|i| OUTSIDERS[i])
        .collect();
    let descriptors: Vec<String> = (0..n)
        .map(|s| {
            let role = if s == 0 { ROLES[0] } else { pick(rng, &ROLES[1..]) };
            format!(
                "{} {}, {}",
                firsts[s].to_uppercase(),
                lasts[s].to_uppercase(),
                role
            )
        })
        .collect();

    let mut turns: Vec<Turn> = Vec::new();

    // Introduction block: everyone states their own name, so every speaker
    // is recoverable from the transcript.
    for (s, &first) in firsts.iter().enumerate() {
        let (text, mentions) = fill_template(pick(rng, INTRO_TEMPLATES), &[first]);
        turns.push(Turn {
            speaker: s,
            text,
            mentions,
            self_ref: true,
        });
    }

    let body = rng.gen_range(cfg.min_body_turns..=cfg.max_body_turns);
    // Speaker promised to re-introduce themselves in the next turn.
    let mut pending: Option<usize> = None;
    // Roster member who must not speak next (their name was just used as a
    // distant mention, and a window must not contain them).
    let mut banned_speaker: Option<usize> = None;

    for b in 0..body {
        let prev = turns.last().expect("intro block is non-empty");
        let prev_speaker = prev.speaker;
        let prev_names: BTreeSet<String> = prev.mentions.iter().map(|(_, n)| n.clone()).collect();
        // Thanking by name is only consistent right after a self-reference.
        let thanks_target = prev.self_ref.then_some(prev_speaker);
        let is_last = b + 1 == body;
        let mut next_ban: Option<usize> = None;

        let not_named = |s: usize| !prev_names.contains(firsts[s]);

        let turn = if let Some(x) = pending.take() {
            debug_assert_ne!(banned_speaker, Some(x), "promise conflicts with ban");
            let (text, mentions) = fill_template(pick(rng, REINTRO_TEMPLATES), &[firsts[x]]);
            Turn {
                speaker: x,
                text,
                mentions,
                self_ref: true,
            }
        } else {
            let drawn = match draw_pattern(rng, &cfg.weights) {
                Pattern::Reintro => {
                    // The speaker must not have been named in the previous
                    // turn, or the previous-slot evidence would contradict
                    // its zero target.
                    let candidates: Vec<usize> = (0..n)
                        .filter(|&s| {
                            Some(s) != banned_speaker && s != prev_speaker && not_named(s)
                        })
                        .collect();
                    (!candidates.is_empty()).then(|| {
                        let x = candidates[rng.gen_range(0..candidates.len())];
                        let (text, mentions) =
                            fill_template(pick(rng, REINTRO_TEMPLATES), &[firsts[x]]);
                        Turn {
                            speaker: x,
                            text,
                            mentions,
                            self_ref: true,
                        }
                    })
                }
                Pattern::Thanks => thanks_target.and_then(|p| {
                    let c = pick_speaker(rng, n, &[Some(p), banned_speaker])?;
                    let (text, mentions) =
                        fill_template(pick(rng, THANKS_TEMPLATES), &[firsts[p]]);
                    Some(Turn {
                        speaker: c,
                        text,
                        mentions,
                        self_ref: false,
                    })
                }),
                Pattern::Handoff if !is_last => (|| {
                    let c = pick_speaker(rng, n, &[Some(prev_speaker), banned_speaker])?;
                    let candidates: Vec<usize> = (0..n)
                        .filter(|&x| x != c && x != prev_speaker && not_named(x))
                        .collect();
                    if candidates.is_empty() {
                        return None;
                    }
                    let x = candidates[rng.gen_range(0..candidates.len())];
                    pending = Some(x);
                    let (text, mentions) =
                        fill_template(pick(rng, HANDOFF_TEMPLATES), &[firsts[x]]);
                    Some(Turn {
                        speaker: c,
                        text,
                        mentions,
                        self_ref: false,
                    })
                })(),
                Pattern::Pair if !is_last && n >= 3 => thanks_target.and_then(|p| {
                    let c = pick_speaker(rng, n, &[Some(p), banned_speaker])?;
                    let candidates: Vec<usize> =
                        (0..n).filter(|&x| x != c && x != p).collect();
                    if candidates.is_empty() {
                        return None;
                    }
                    let x = candidates[rng.gen_range(0..candidates.len())];
                    pending = Some(x);
                    let (text, mentions) =
                        fill_template(pick(rng, PAIR_TEMPLATES), &[firsts[p], firsts[x]]);
                    Some(Turn {
                        speaker: c,
                        text,
                        mentions,
                        self_ref: false,
                    })
                }),
                Pattern::Null => (|| {
                    let c = pick_speaker(rng, n, &[Some(prev_speaker), banned_speaker])?;
                    let candidates: Vec<&str> = outsiders
                        .iter()
                        .copied()
                        .filter(|o| !prev_names.contains(*o))
                        .collect();
                    let o = candidates[rng.gen_range(0..candidates.len())];
                    let (text, mentions) = fill_template(pick(rng, NULL_TEMPLATES), &[o]);
                    Some(Turn {
                        speaker: c,
                        text,
                        mentions,
                        self_ref: false,
                    })
                })(),
                Pattern::Distant if n >= 3 => (|| {
                    let c = pick_speaker(rng, n, &[Some(prev_speaker), banned_speaker])?;
                    let candidates: Vec<usize> = (0..n)
                        .filter(|&z| z != c && z != prev_speaker && not_named(z))
                        .collect();
                    if candidates.is_empty() {
                        return None;
                    }
                    let z = candidates[rng.gen_range(0..candidates.len())];
                    next_ban = Some(z);
                    let (text, mentions) =
                        fill_template(pick(rng, DISTANT_TEMPLATES), &[firsts[z]]);
                    Some(Turn {
                        speaker: c,
                        text,
                        mentions,
                        self_ref: false,
                    })
                })(),
                _ => None,
            };
            drawn.unwrap_or_else(|| {
                let c = pick_speaker(rng, n, &[Some(prev_speaker), banned_speaker])
                    .expect("a filler speaker always exists");
                Turn {
                    speaker: c,
                    text: pick(rng, FILLER_TEMPLATES).to_string(),
                    mentions: Vec::new(),
                    self_ref: false,
                }
            })
        };

        banned_speaker = next_ban;
        turns.push(turn);
    }

    let mut mentions = Vec::new();
    for (utt_index, turn) in turns.iter().enumerate() {
        for (tok, _) in &turn.mentions {
            let surface = turn
                .text
                .split_whitespace()
                .nth(*tok)
                .expect("mention token exists")
                .to_string();
            mentions.push(MentionRecord {
                meeting_id: meeting_id.clone(),
                utt_index,
                start_tok: *tok,
                end_tok: *tok,
                surface,
            });
        }
    }

    let interview = RawInterview {
        id: meeting_id,
        utt: turns.iter().map(|t| t.text.clone()).collect(),
        speaker: turns
            .iter()
            .map(|t| descriptors[t.speaker].clone())
            .collect(),
        program: None,
        date: None,
        url: None,
        title: None,
        summary: None,
    };
    MeetingData {
        interview,
        mentions,
        n_speakers: n,
        n_sentences: turns.len(),
    }
}

/// Generates the corpus. Deterministic for a fixed config.
pub fn generate(cfg: &SynthConfig) -> Result<SynthOutput, SynthError> {
    cfg.validate()?;
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let mut interviews = Vec::with_capacity(cfg.n_meetings);
    let mut mentions = Vec::new();
    let mut tallies = SynthTallies::default();
    for i in 0..cfg.n_meetings {
        let m = gen_meeting(cfg, &mut rng, i);
        tallies.meetings += 1;
        tallies.sentences += m.n_sentences;
        tallies.names += m.mentions.len();
        tallies.speakers += m.n_speakers;
        interviews.push(m.interview);
        mentions.extend(m.mentions);
    }
    Ok(SynthOutput {
        interviews,
        mentions,
        tallies,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detect::normalize_token;
    use crate::ingest::to_transcript;
    use crate::label::{build_labeled_dataset, speaker_similarity, DEFAULT_MATCH_THRESHOLD};
    use crate::types::{NameMention, NULL_SPEAKER};

    #[test]
    fn name_pools_are_pairwise_dissimilar_under_the_matcher() {
        let pools: Vec<(&str, &[&str])> = vec![
            ("first", FIRST_NAMES),
            ("last", LAST_NAMES),
            ("outsider", OUTSIDERS),
        ];
        for (pa, a) in &pools {
            for (pb, b) in &pools {
                for (i, x) in a.iter().enumerate() {
                    for (j, y) in b.iter().enumerate() {
                        if pa == pb && i == j {
                            continue;
                        }
                        let theta = speaker_similarity(x, y);
                        assert!(
                            theta < DEFAULT_MATCH_THRESHOLD,
                            "{pa} {x:?} vs {pb} {y:?}: similarity {theta:.3}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn template_words_never_fuzzy_match_a_name() {
        let all_templates = [
            INTRO_TEMPLATES,
            REINTRO_TEMPLATES,
            THANKS_TEMPLATES,
            HANDOFF_TEMPLATES,
            PAIR_TEMPLATES,
            NULL_TEMPLATES,
            DISTANT_TEMPLATES,
            FILLER_TEMPLATES,
        ];
        let words: BTreeSet<String> = all_templates
            .iter()
            .flat_map(|ts| ts.iter())
            .flat_map(|t| t.split_whitespace())
            .filter(|w| !w.contains('{'))
            .map(normalize_token)
            .collect();
        for word in &words {
            for name in FIRST_NAMES.iter().chain(OUTSIDERS) {
                let theta = speaker_similarity(word, name);
                assert!(
                    theta < DEFAULT_MATCH_THRESHOLD,
                    "template word {word:?} collides with name {name:?} ({theta:.3})"
                );
            }
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = SynthConfig {
            n_meetings: 5,
            ..SynthConfig::default()
        };
        let a = generate(&cfg).unwrap();
        let b = generate(&cfg).unwrap();
        assert_eq!(a, b);
        let other = generate(&SynthConfig { seed: 43, ..cfg }).unwrap();
        assert_ne!(a, other, "a different seed should change the corpus");
    }

    #[test]
    fn tallies_match_the_emitted_corpus() {
        let cfg = SynthConfig {
            n_meetings: 12,
            ..SynthConfig::default()
        };
        let out = generate(&cfg).unwrap();
        assert_eq!(out.tallies.meetings, out.interviews.len());
        let sentences: usize = out.interviews.iter().map(|i| i.utt.len()).sum();
        assert_eq!(out.tallies.sentences, sentences);
        assert_eq!(out.tallies.names, out.mentions.len());
        let speakers: usize = out
            .interviews
            .iter()
            .map(|i| {
                i.speaker
                    .iter()
                    .collect::<BTreeSet<_>>()
                    .len()
            })
            .sum();
        assert_eq!(out.tallies.speakers, speakers);
    }

    #[test]
    fn mention_spans_point_at_name_tokens() {
        let cfg = SynthConfig {
            n_meetings: 8,
            ..SynthConfig::default()
        };
        let out = generate(&cfg).unwrap();
        assert!(!out.mentions.is_empty());
        let known: BTreeSet<String> = FIRST_NAMES
            .iter()
            .chain(OUTSIDERS)
            .map(|n| n.to_lowercase())
            .collect();
        for rec in &out.mentions {
            let interview = out
                .interviews
                .iter()
                .find(|i| i.id == rec.meeting_id)
                .unwrap();
            let token = interview.utt[rec.utt_index]
                .split_whitespace()
                .nth(rec.start_tok)
                .unwrap();
            assert_eq!(rec.start_tok, rec.end_tok, "single-token spans");
            assert_eq!(token, rec.surface);
            assert!(
                known.contains(&normalize_token(token)),
                "span points at {token:?}, not a known name"
            );
        }
    }

    /// The generator's core promise, checked semantically on its output:
    /// for every labeled mention, each head target is 1 exactly when the
    /// window slot matches, and name tokens appear in neighbour utterances
    /// exactly when the pattern calls for it.
    #[test]
    fn labeled_instances_are_lexically_consistent() {
        let cfg = SynthConfig {
            n_meetings: 20,
            seed: 7,
            ..SynthConfig::default()
        };
        let out = generate(&cfg).unwrap();
        for interview in &out.interviews {
            let (transcript, gold) = to_transcript(interview).unwrap();
            let mentions: Vec<NameMention> = out
                .mentions
                .iter()
                .filter(|m| m.meeting_id == interview.id)
                .map(|m| NameMention {
                    utt_index: m.utt_index,
                    start_tok: m.start_tok,
                    end_tok: m.end_tok,
                    surface: m.surface.clone(),
                })
                .collect();
            let labeled =
                build_labeled_dataset(&transcript, &gold, &mentions, DEFAULT_MATCH_THRESHOLD);

            // speaker_id -> folded first name, for overlap checks.
            let first_of = |speaker_id: &str| -> String {
                let full = &gold.names[speaker_id];
                full.split_whitespace().next().unwrap().to_lowercase()
            };
            let utt_has = |idx: usize, name: &str| -> bool {
                transcript.utterances[idx]
                    .tokens
                    .iter()
                    .any(|t| normalize_token(t) == name)
            };
            let self_ref = |idx: usize| -> bool {
                let u = &transcript.utterances[idx];
                u.speaker_id != NULL_SPEAKER && utt_has(idx, &first_of(&u.speaker_id))
            };

            for lm in &labeled {
                let m = &lm.mention;
                let name = normalize_token(&m.surface);
                let cur = m.utt_index;

                if lm.label == NULL_SPEAKER {
                    // Outsiders never appear in neighbour utterances.
                    if cur > 0 {
                        assert!(!utt_has(cur - 1, &name), "outsider {name} leaks prev");
                    }
                    if cur + 1 < transcript.utterances.len() {
                        assert!(!utt_has(cur + 1, &name), "outsider {name} leaks next");
                    }
                    continue;
                }

                // The label is the speaker whose first name was written.
                assert_eq!(first_of(&lm.label), name, "label mismatch in {}", interview.id);

                let speaker_at = |idx: usize| -> Option<&str> {
                    transcript.utterances.get(idx).map(|u| u.speaker_id.as_str())
                };
                let s_prev = cur.checked_sub(1).and_then(speaker_at);
                let s_cur = speaker_at(cur).unwrap();
                let s_next = speaker_at(cur + 1);

                // Expected targets, current slot first on duplicates.
                let (y_prev, y_cur, y_next) = if s_cur == lm.label {
                    (false, true, false)
                } else if s_prev == Some(lm.label.as_str()) {
                    (true, false, false)
                } else if s_next == Some(lm.label.as_str()) {
                    (false, false, true)
                } else {
                    (false, false, false)
                };

                // Positive previous/next slots always carry the name token;
                // a zero slot may carry it only when the cue words of that
                // utterance distinguish it (handoff before a promised
                // re-introduction, thanks right after one). Both are
                // recognizable as "the neighbour is (not) a self-reference".
                if y_prev {
                    let p = cur - 1;
                    assert!(utt_has(p, &name), "prev positive lacks token overlap");
                    assert!(self_ref(p), "prev positive must follow a self-reference");
                }
                if y_next {
                    let nx = cur + 1;
                    assert!(utt_has(nx, &name), "next positive lacks token overlap");
                    assert!(self_ref(nx), "next positive must precede a self-reference");
                }
                if !y_prev && cur > 0 && utt_has(cur - 1, &name) {
                    assert!(
                        !self_ref(cur - 1),
                        "zero prev target with a self-referencing previous turn"
                    );
                }
                if !y_next && cur + 1 < transcript.utterances.len() && utt_has(cur + 1, &name) {
                    assert!(
                        !self_ref(cur + 1),
                        "zero next target with a self-referencing next turn"
                    );
                }
                if y_cur {
                    assert!(self_ref(cur), "current positive must be a self-reference");
                }
            }
        }
    }

    #[test]
    fn descriptors_are_uppercase_and_dialogue_is_not() {
        let cfg = SynthConfig {
            n_meetings: 6,
            ..SynthConfig::default()
        };
        let out = generate(&cfg).unwrap();
        for interview in &out.interviews {
            for desc in &interview.speaker {
                let name = desc.split(',').next().unwrap();
                assert_eq!(name, name.to_uppercase(), "descriptor not uppercase");
                // No utterance may contain any length-4 slice of the
                // uppercase gold name: dialogue uses title case.
                let windows: Vec<&str> = name
                    .as_bytes()
                    .windows(4)
                    .map(|w| std::str::from_utf8(w).unwrap())
                    .collect();
                for utt in &interview.utt {
                    for w in &windows {
                        assert!(
                            !utt.contains(w),
                            "gold fragment {w:?} leaks into dialogue {utt:?}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn every_speaker_is_recoverable_from_their_introduction() {
        let cfg = SynthConfig {
            n_meetings: 10,
            ..SynthConfig::default()
        };
        let out = generate(&cfg).unwrap();
        for interview in &out.interviews {
            let (transcript, gold) = to_transcript(interview).unwrap();
            for (speaker_id, full) in &gold.names {
                let first = full.split_whitespace().next().unwrap().to_lowercase();
                let said_own_name = transcript.utterances.iter().any(|u| {
                    u.speaker_id == *speaker_id
                        && u.tokens.iter().any(|t| normalize_token(t) == first)
                });
                assert!(
                    said_own_name,
                    "{speaker_id} never says their own name in {}",
                    interview.id
                );
            }
        }
    }

    #[test]
    fn rejects_nonsense_configs() {
        let bad = [
            SynthConfig {
                min_speakers: 1,
                ..SynthConfig::default()
            },
            SynthConfig {
                min_speakers: 5,
                max_speakers: 3,
                ..SynthConfig::default()
            },
            SynthConfig {
                max_speakers: 10_000,
                ..SynthConfig::default()
            },
            SynthConfig {
                min_body_turns: 9,
                max_body_turns: 2,
                ..SynthConfig::default()
            },
        ];
        for cfg in bad {
            assert!(matches!(generate(&cfg), Err(SynthError::InvalidConfig(_))));
        }
    }
}
