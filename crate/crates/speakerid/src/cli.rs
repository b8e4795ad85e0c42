//! Command-line pipeline: dataset construction, corpus synthesis, training,
//! prediction, evaluation, and statistics.
//!
//! Each command is a thin wrapper over the library modules. Commands are
//! deterministic for fixed inputs and flags, so re-running one rewrites the
//! same bytes.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

use crate::dataset::{
    assign_splits, read_dataset, read_gold, sample_indices, write_dataset, write_gold,
    DatasetRecord, Meeting, Split,
};
use crate::detect::{detect_mentions, DetectorConfig, DetectorKind, GazetteerSource};
use crate::eval::{dataset_stats, recall_upper_bound, speaker_prf, DatasetStats, Metrics};
use crate::inference::{ModelKind, PredictionRecord};
use crate::ingest::{read_corpus, to_transcript, RawInterview};
use crate::label::{build_labeled_dataset, DEFAULT_MATCH_THRESHOLD};
use crate::model::EdgeWeightMode;
use crate::synth::{generate, SynthConfig};
use crate::trainer::{run_seeds, write_training_log, Checkpoint, EncoderConfig, TrainConfig};
use crate::types::{GoldRoster, NameMention, Transcript, NULL_SPEAKER};

/// Base directory for relative pretrained-encoder paths.
pub const ENCODER_DIR_ENV: &str = "SPEAKERID_ENCODER_DIR";

#[derive(Debug, Parser)]
#[command(
    name = "speakerid",
    version,
    about = "Recover speaker names in anonymized dialogue transcripts"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

// One value exists per process, so variant size imbalance is irrelevant.
#[allow(clippy::large_enum_variant)]
#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build labeled train/dev/test splits from a raw interview corpus.
    BuildData(BuildDataArgs),
    /// Generate a synthetic interview corpus with known ground truth.
    Synth(SynthArgs),
    /// Train one model per seed and report seed-averaged metrics.
    Train(TrainArgs),
    /// Predict speaker names with a trained checkpoint.
    Predict(PredictArgs),
    /// Score a prediction file against gold rosters.
    Evaluate(EvaluateArgs),
    /// Print statistics for a dataset file.
    Stats(StatsArgs),
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::BuildData(args) => cmd_build_data(&args),
        Command::Synth(args) => cmd_synth(&args),
        Command::Train(args) => cmd_train(&args),
        Command::Predict(args) => cmd_predict(&args),
        Command::Evaluate(args) => cmd_evaluate(&args),
        Command::Stats(args) => cmd_stats(&args),
    }
}

#[derive(Debug, Args)]
pub struct BuildDataArgs {
    /// Raw corpus: JSON lines or a single JSON array of interview records.
    #[arg(long)]
    pub input: PathBuf,
    /// Directory for split files, gold sidecars, and the stats report.
    #[arg(long)]
    pub output_dir: PathBuf,
    /// Meetings to sample from the corpus (default: all of it).
    #[arg(long)]
    pub sample_size: Option<usize>,
    /// Seed for sampling and split assignment.
    #[arg(long, default_value_t = 13)]
    pub seed: u64,
    /// Mention detector: "gazetteer" or "external".
    #[arg(long, default_value = "gazetteer")]
    pub detector: String,
    /// Span file for the external detector.
    #[arg(long)]
    pub mention_file: Option<PathBuf>,
    /// Shortest gazetteer entry that may match.
    #[arg(long, default_value_t = 2)]
    pub min_token_len: usize,
    /// Fuzzy similarity threshold for binding mentions to speakers.
    #[arg(long, default_value_t = DEFAULT_MATCH_THRESHOLD)]
    pub threshold: f64,
    /// Train/dev/test proportions.
    #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = [8, 1, 1])]
    pub split_ratio: Vec<usize>,
}

/// Everything known about one split after labeling.
#[derive(Debug, Serialize)]
struct SplitReport {
    stats: DatasetStats,
    matched_mentions: usize,
    null_mentions: usize,
    /// Fraction of speakers whose name appears in the transcript at all.
    recall_upper_bound: f64,
}

#[derive(Debug, Serialize)]
struct BuildReport {
    seed: u64,
    sample_size: usize,
    split_ratio: (usize, usize, usize),
    skipped_records: usize,
    splits: BTreeMap<String, SplitReport>,
}

fn split_report(records: &[DatasetRecord], golds: &[GoldRoster]) -> SplitReport {
    let transcripts: Vec<Transcript> = records
        .iter()
        .map(|r| Transcript::new(r.meeting_id.clone(), r.utterances.clone()))
        .collect();
    let mentions: Vec<Vec<NameMention>> = records
        .iter()
        .map(|r| r.mentions.iter().map(|lm| lm.mention.clone()).collect())
        .collect();
    let stats = dataset_stats(
        transcripts
            .iter()
            .zip(&mentions)
            .map(|(t, m)| (t, m.as_slice())),
    );
    let null_mentions = records
        .iter()
        .flat_map(|r| &r.mentions)
        .filter(|lm| lm.label == NULL_SPEAKER)
        .count();
    let bound = recall_upper_bound(golds.iter().zip(&mentions).map(|(g, m)| (g, m.as_slice())));
    SplitReport {
        stats,
        matched_mentions: stats.names - null_mentions,
        null_mentions,
        recall_upper_bound: bound.fraction(),
    }
}

fn cmd_build_data(args: &BuildDataArgs) -> Result<()> {
    let detector = match args.detector.as_str() {
        "gazetteer" => DetectorConfig {
            kind: DetectorKind::Gazetteer {
                source: GazetteerSource::Roster,
            },
            min_token_len: args.min_token_len,
        },
        "external" => {
            let file = args
                .mention_file
                .clone()
                .ok_or_else(|| anyhow!("--detector external requires --mention-file"))?;
            DetectorConfig {
                kind: DetectorKind::External { mention_file: file },
                min_token_len: args.min_token_len,
            }
        }
        other => bail!("unknown detector {other:?} (expected gazetteer or external)"),
    };
    let ratio = (args.split_ratio[0], args.split_ratio[1], args.split_ratio[2]);

    let raw = read_corpus(&args.input)
        .with_context(|| format!("reading corpus {}", args.input.display()))?;
    let total = raw.len();
    // Unparseable records and records whose turns cannot form a transcript
    // are skipped and counted, never fatal.
    let valid: Vec<(Transcript, GoldRoster)> = raw
        .into_iter()
        .filter_map(|r| r.ok())
        .filter_map(|ri: RawInterview| to_transcript(&ri).ok())
        .collect();
    let skipped_records = total - valid.len();

    let sample_size = args.sample_size.unwrap_or(valid.len());
    let order = sample_indices(valid.len(), sample_size, args.seed)?;
    let splits = assign_splits(order.len(), ratio);

    let processed: Vec<(DatasetRecord, GoldRoster)> = order
        .par_iter()
        .zip(&splits)
        .map(|(&idx, &split)| -> Result<(DatasetRecord, GoldRoster)> {
            let (transcript, gold) = &valid[idx];
            let mentions = detect_mentions(transcript, &detector, Some(gold))
                .with_context(|| format!("detecting mentions in {}", transcript.meeting_id))?;
            let labeled = build_labeled_dataset(transcript, gold, &mentions, args.threshold);
            Ok((DatasetRecord::new(transcript, labeled, split), gold.clone()))
        })
        .collect::<Result<_>>()?;

    fs::create_dir_all(&args.output_dir)?;
    let mut report = BuildReport {
        seed: args.seed,
        sample_size,
        split_ratio: ratio,
        skipped_records,
        splits: BTreeMap::new(),
    };
    for split in [Split::Train, Split::Dev, Split::Test] {
        let records: Vec<DatasetRecord> = processed
            .iter()
            .filter(|(r, _)| r.split == split)
            .map(|(r, _)| r.clone())
            .collect();
        let golds: Vec<GoldRoster> = processed
            .iter()
            .filter(|(r, _)| r.split == split)
            .map(|(_, g)| g.clone())
            .collect();
        write_dataset(&args.output_dir.join(format!("{split}.jsonl")), &records)?;
        write_gold(&args.output_dir.join(format!("{split}.gold.jsonl")), &golds)?;
        let rep = split_report(&records, &golds);
        println!(
            "{split}: {} meetings, {} sentences, {} mentions ({} null), {} speakers, recall bound {:.3}",
            rep.stats.meetings,
            rep.stats.sentences,
            rep.stats.names,
            rep.null_mentions,
            rep.stats.speakers,
            rep.recall_upper_bound,
        );
        report.splits.insert(split.to_string(), rep);
    }
    write_pretty_json(&args.output_dir.join("stats.json"), &report)?;
    if skipped_records > 0 {
        eprintln!("warning: skipped {skipped_records} malformed corpus records");
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Directory for the corpus, span file, and tally report.
    #[arg(long)]
    pub output_dir: PathBuf,
    #[arg(long, default_value_t = 200)]
    pub meetings: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = 3)]
    pub min_speakers: usize,
    #[arg(long, default_value_t = 5)]
    pub max_speakers: usize,
    #[arg(long, default_value_t = 8)]
    pub min_body_turns: usize,
    #[arg(long, default_value_t = 14)]
    pub max_body_turns: usize,
}

fn cmd_synth(args: &SynthArgs) -> Result<()> {
    let cfg = SynthConfig {
        n_meetings: args.meetings,
        seed: args.seed,
        min_speakers: args.min_speakers,
        max_speakers: args.max_speakers,
        min_body_turns: args.min_body_turns,
        max_body_turns: args.max_body_turns,
        ..SynthConfig::default()
    };
    let out = generate(&cfg)?;
    fs::create_dir_all(&args.output_dir)?;
    write_jsonl(&args.output_dir.join("corpus.jsonl"), &out.interviews)?;
    write_jsonl(&args.output_dir.join("mentions.jsonl"), &out.mentions)?;
    write_pretty_json(&args.output_dir.join("tallies.json"), &out.tallies)?;
    println!(
        "generated {} meetings, {} sentences, {} name mentions, {} speakers",
        out.tallies.meetings, out.tallies.sentences, out.tallies.names, out.tallies.speakers
    );
    Ok(())
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Flat key=value config file. Command-line flags override its entries.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub train_data: Option<PathBuf>,
    #[arg(long)]
    pub dev_data: Option<PathBuf>,
    #[arg(long)]
    pub test_data: Option<PathBuf>,
    /// Gold roster files, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub gold: Vec<PathBuf>,
    /// Directory for checkpoints, training logs, and the summary.
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    /// "single", "multi", or "multi_no_gcn".
    #[arg(long)]
    pub model_kind: Option<String>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    /// Pairing-head hidden width.
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub gcn_layers: Option<usize>,
    /// "dot_softmax" or "normalized_dot_softmax".
    #[arg(long)]
    pub edge_mode: Option<String>,
    /// Candidate probability threshold.
    #[arg(long)]
    pub tau: Option<f64>,
    /// Training seeds, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Vec<u64>,
    /// "hash" or "pretrained".
    #[arg(long)]
    pub encoder_kind: Option<String>,
    #[arg(long)]
    pub encoder_dim: Option<usize>,
    #[arg(long)]
    pub encoder_buckets: Option<usize>,
    #[arg(long)]
    pub encoder_seed: Option<u64>,
    /// Vector file or directory for the pretrained encoder. Relative paths
    /// resolve against SPEAKERID_ENCODER_DIR when that is set.
    #[arg(long)]
    pub encoder_path: Option<PathBuf>,
}

/// A fully resolved training job.
#[derive(Debug)]
struct TrainJob {
    cfg: TrainConfig,
    train_data: PathBuf,
    dev_data: PathBuf,
    test_data: PathBuf,
    gold: Vec<PathBuf>,
    output_dir: PathBuf,
}

fn parse_kv_file(path: &Path) -> Result<BTreeMap<String, String>> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("{}:{}: expected key = value", path.display(), i + 1))?;
        out.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(out)
}

fn parse_edge_mode(s: &str) -> Result<EdgeWeightMode> {
    match s {
        "dot_softmax" => Ok(EdgeWeightMode::DotSoftmax),
        "normalized_dot_softmax" => Ok(EdgeWeightMode::NormalizedDotSoftmax),
        other => bail!("unknown edge mode {other:?} (expected dot_softmax or normalized_dot_softmax)"),
    }
}

/// Applies SPEAKERID_ENCODER_DIR to a relative pretrained-encoder path.
fn resolve_encoder_path(path: PathBuf) -> PathBuf {
    if path.is_relative() {
        if let Ok(dir) = std::env::var(ENCODER_DIR_ENV) {
            if !dir.is_empty() {
                return PathBuf::from(dir).join(path);
            }
        }
    }
    path
}

fn resolve_train(args: &TrainArgs) -> Result<TrainJob> {
    const KNOWN: &[&str] = &[
        "train_data",
        "dev_data",
        "test_data",
        "gold",
        "output_dir",
        "model_kind",
        "learning_rate",
        "batch_size",
        "max_epochs",
        "hidden",
        "gcn_layers",
        "edge_mode",
        "tau",
        "seeds",
        "encoder_kind",
        "encoder_dim",
        "encoder_buckets",
        "encoder_seed",
        "encoder_path",
    ];
    let file = match &args.config {
        Some(p) => parse_kv_file(p)?,
        None => BTreeMap::new(),
    };
    for key in file.keys() {
        if !KNOWN.contains(&key.as_str()) {
            bail!("unknown config key {key:?}");
        }
    }
    let get = |key: &str| file.get(key).map(String::as_str);
    fn parsed<T: FromStr>(value: Option<&str>, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        value
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| anyhow!("config key {key}: {e}"))
            })
            .transpose()
    }

    let mut cfg = TrainConfig::default();
    if let Some(v) = parsed::<ModelKind>(get("model_kind"), "model_kind")? {
        cfg.model_kind = v;
    }
    if let Some(v) = parsed::<f64>(get("learning_rate"), "learning_rate")? {
        cfg.learning_rate = v;
    }
    if let Some(v) = parsed::<usize>(get("batch_size"), "batch_size")? {
        cfg.batch_size = v;
    }
    if let Some(v) = parsed::<usize>(get("max_epochs"), "max_epochs")? {
        cfg.max_epochs = v;
    }
    if let Some(v) = parsed::<usize>(get("hidden"), "hidden")? {
        cfg.hidden = v;
    }
    if let Some(v) = parsed::<usize>(get("gcn_layers"), "gcn_layers")? {
        cfg.gcn_layers = v;
    }
    if let Some(v) = get("edge_mode") {
        cfg.edge_mode = parse_edge_mode(v)?;
    }
    if let Some(v) = parsed::<f64>(get("tau"), "tau")? {
        cfg.tau = v;
    }
    if let Some(v) = get("seeds") {
        cfg.seeds = v
            .split(',')
            .map(|s| s.trim().parse::<u64>().map_err(|e| anyhow!("config key seeds: {e}")))
            .collect::<Result<_>>()?;
    }

    // Encoder: start from the config-file view, then let flags override.
    let mut encoder_kind = get("encoder_kind").map(str::to_string);
    let mut encoder_dim = parsed::<usize>(get("encoder_dim"), "encoder_dim")?;
    let mut encoder_buckets = parsed::<usize>(get("encoder_buckets"), "encoder_buckets")?;
    let mut encoder_seed = parsed::<u64>(get("encoder_seed"), "encoder_seed")?;
    let mut encoder_path = get("encoder_path").map(PathBuf::from);

    if let Some(v) = &args.model_kind {
        cfg.model_kind = v.parse::<ModelKind>().map_err(|e| anyhow!(e))?;
    }
    if let Some(v) = args.learning_rate {
        cfg.learning_rate = v;
    }
    if let Some(v) = args.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = args.max_epochs {
        cfg.max_epochs = v;
    }
    if let Some(v) = args.hidden {
        cfg.hidden = v;
    }
    if let Some(v) = args.gcn_layers {
        cfg.gcn_layers = v;
    }
    if let Some(v) = &args.edge_mode {
        cfg.edge_mode = parse_edge_mode(v)?;
    }
    if let Some(v) = args.tau {
        cfg.tau = v;
    }
    if !args.seeds.is_empty() {
        cfg.seeds = args.seeds.clone();
    }
    if let Some(v) = &args.encoder_kind {
        encoder_kind = Some(v.clone());
    }
    if let Some(v) = args.encoder_dim {
        encoder_dim = Some(v);
    }
    if let Some(v) = args.encoder_buckets {
        encoder_buckets = Some(v);
    }
    if let Some(v) = args.encoder_seed {
        encoder_seed = Some(v);
    }
    if let Some(v) = &args.encoder_path {
        encoder_path = Some(v.clone());
    }

    let defaults = EncoderConfig::default();
    let (default_dim, default_buckets, default_seed) = match defaults {
        EncoderConfig::Hash {
            dim,
            n_buckets,
            seed,
        } => (dim, n_buckets, seed),
        EncoderConfig::Pretrained { .. } => unreachable!("default encoder is hash"),
    };
    cfg.encoder = match encoder_kind.as_deref().unwrap_or("hash") {
        "hash" => EncoderConfig::Hash {
            dim: encoder_dim.unwrap_or(default_dim),
            n_buckets: encoder_buckets.unwrap_or(default_buckets),
            seed: encoder_seed.unwrap_or(default_seed),
        },
        "pretrained" => {
            let path = encoder_path
                .ok_or_else(|| anyhow!("encoder_kind pretrained requires encoder_path"))?;
            EncoderConfig::Pretrained {
                path: resolve_encoder_path(path),
            }
        }
        other => bail!("unknown encoder kind {other:?} (expected hash or pretrained)"),
    };

    let path_of = |flag: &Option<PathBuf>, key: &str| -> Result<PathBuf> {
        flag.clone()
            .or_else(|| get(key).map(PathBuf::from))
            .ok_or_else(|| anyhow!("missing {key} (set it in the config file or pass --{})", key.replace('_', "-")))
    };
    let gold = if !args.gold.is_empty() {
        args.gold.clone()
    } else {
        get("gold")
            .map(|v| v.split(',').map(|s| PathBuf::from(s.trim())).collect())
            .unwrap_or_default()
    };
    if gold.is_empty() {
        bail!("missing gold (set it in the config file or pass --gold)");
    }

    Ok(TrainJob {
        cfg,
        train_data: path_of(&args.train_data, "train_data")?,
        dev_data: path_of(&args.dev_data, "dev_data")?,
        test_data: path_of(&args.test_data, "test_data")?,
        gold,
        output_dir: path_of(&args.output_dir, "output_dir")?,
    })
}

fn read_meetings(path: &Path) -> Result<Vec<Meeting>> {
    let records = read_dataset(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(records.into_iter().map(DatasetRecord::into_meeting).collect())
}

fn read_gold_files(paths: &[PathBuf]) -> Result<BTreeMap<String, GoldRoster>> {
    let mut merged = BTreeMap::new();
    for path in paths {
        let map = read_gold(path).with_context(|| format!("reading {}", path.display()))?;
        for (id, roster) in map {
            if merged.insert(id.clone(), roster).is_some() {
                bail!("meeting {id:?} appears in more than one gold file");
            }
        }
    }
    Ok(merged)
}

fn cmd_train(args: &TrainArgs) -> Result<()> {
    let job = resolve_train(args)?;
    let train_set = read_meetings(&job.train_data)?;
    let dev_set = read_meetings(&job.dev_data)?;
    let test_set = read_meetings(&job.test_data)?;
    let gold = read_gold_files(&job.gold)?;

    let (summary, checkpoints) = run_seeds(&job.cfg, &train_set, &dev_set, &gold, &test_set, &gold)?;

    fs::create_dir_all(&job.output_dir)?;
    for ck in &checkpoints {
        ck.save(&job.output_dir.join(format!("seed-{}.checkpoint.json", ck.seed)))?;
        write_training_log(
            &job.output_dir.join(format!("seed-{}.log.jsonl", ck.seed)),
            &ck.history,
        )?;
    }
    write_pretty_json(&job.output_dir.join("summary.json"), &summary)?;

    for run in &summary.runs {
        println!(
            "seed {}: dev F1 {:.4} | test P {:.4} R {:.4} F1 {:.4}",
            run.seed, run.dev.f1, run.test.precision, run.test.recall, run.test.f1
        );
    }
    println!(
        "mean over {} seeds: P {:.4} R {:.4} F1 {:.4}",
        summary.runs.len(),
        summary.mean_precision,
        summary.mean_recall,
        summary.mean_f1
    );
    Ok(())
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Dataset file with the meetings to predict.
    #[arg(long)]
    pub data: PathBuf,
    /// Prediction file to write (default: stdout).
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Keep each name for at most one speaker.
    #[arg(long)]
    pub unique: bool,
}

fn cmd_predict(args: &PredictArgs) -> Result<()> {
    let ck = Checkpoint::load(&args.checkpoint)
        .with_context(|| format!("loading checkpoint {}", args.checkpoint.display()))?;
    let meetings = read_meetings(&args.data)?;
    let predictions = crate::trainer::predict_records(&ck, &meetings, args.unique)?;
    match &args.output {
        Some(path) => write_jsonl(path, &predictions)?,
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            for p in &predictions {
                serde_json::to_writer(&mut lock, p)?;
                lock.write_all(b"\n")?;
            }
        }
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Prediction file written by the predict command.
    #[arg(long)]
    pub predictions: PathBuf,
    /// Gold roster files, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub gold: Vec<PathBuf>,
    /// Similarity needed to count a predicted name as correct.
    #[arg(long, default_value_t = DEFAULT_MATCH_THRESHOLD)]
    pub threshold: f64,
}

fn read_predictions(path: &Path) -> Result<Vec<PredictionRecord>> {
    let reader = BufReader::new(
        File::open(path).with_context(|| format!("reading {}", path.display()))?,
    );
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let p: PredictionRecord = serde_json::from_str(&line)
            .with_context(|| format!("{}:{}", path.display(), i + 1))?;
        out.push(p);
    }
    Ok(out)
}

fn cmd_evaluate(args: &EvaluateArgs) -> Result<()> {
    let predictions = read_predictions(&args.predictions)?;
    let gold = read_gold_files(&args.gold)?;
    let metrics: Metrics = speaker_prf(&predictions, &gold, args.threshold)?;
    println!("{}", serde_json::to_string_pretty(&metrics)?);
    Ok(())
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    /// Dataset file to summarize.
    #[arg(long)]
    pub data: PathBuf,
    /// Gold roster files; enables the recall upper bound.
    #[arg(long, value_delimiter = ',')]
    pub gold: Vec<PathBuf>,
}

#[derive(Debug, Serialize)]
struct StatsReport {
    stats: DatasetStats,
    matched_mentions: usize,
    null_mentions: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    recall_upper_bound: Option<f64>,
}

fn cmd_stats(args: &StatsArgs) -> Result<()> {
    let records = read_dataset(&args.data)?;
    let transcripts: Vec<Transcript> = records
        .iter()
        .map(|r| Transcript::new(r.meeting_id.clone(), r.utterances.clone()))
        .collect();
    let mentions: Vec<Vec<NameMention>> = records
        .iter()
        .map(|r| r.mentions.iter().map(|lm| lm.mention.clone()).collect())
        .collect();
    let stats = dataset_stats(
        transcripts
            .iter()
            .zip(&mentions)
            .map(|(t, m)| (t, m.as_slice())),
    );
    let null_mentions = records
        .iter()
        .flat_map(|r| &r.mentions)
        .filter(|lm| lm.label == NULL_SPEAKER)
        .count();
    let bound = if args.gold.is_empty() {
        None
    } else {
        let gold = read_gold_files(&args.gold)?;
        let items = records.iter().zip(&mentions).filter_map(|(r, m)| {
            gold.get(&r.meeting_id).map(|g| (g, m.as_slice()))
        });
        Some(recall_upper_bound(items).fraction())
    };
    let report = StatsReport {
        stats,
        matched_mentions: stats.names - null_mentions,
        null_mentions,
        recall_upper_bound: bound,
    };
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut out = BufWriter::new(
        File::create(path).with_context(|| format!("writing {}", path.display()))?,
    );
    for item in items {
        serde_json::to_writer(&mut out, item)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

fn write_pretty_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}
