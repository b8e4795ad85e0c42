//! Speaker identification for anonymized meeting transcripts.
//!
//! The pipeline recovers the real name behind each anonymized speaker id
//! (`speaker1`, `speaker2`, ...) from the names people say to each other:
//! detect name mentions, label each mention with the speaker it refers to
//! via fuzzy string matching against a gold roster, train neural pairing
//! models over sentence context windows, and score predictions with
//! speaker-level precision/recall/F1.

pub mod backprop;
pub mod cli;
pub mod dataset;
pub mod detect;
pub mod encode;
pub mod eval;
pub mod inference;
pub mod ingest;
pub mod label;
pub mod model;
pub mod synth;
pub mod trainer;
pub mod types;
