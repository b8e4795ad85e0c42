//! Seeded training: Adam over the pairing heads, the graph layers, and the
//! hash encoder's learned table, with per-epoch dev scoring and
//! best-checkpoint selection.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backprop::{accumulate_gradients, tensors_mut, Grads, Instance};
use crate::dataset::Meeting;
use crate::encode::{ContextEncoder, EncodeError, HashEncoder, PretrainedEncoder};
use crate::eval::{speaker_prf_default, EvalError, Metrics};
use crate::inference::{
    build_instances, predict_meetings, InstanceEncoder, ModelKind, PredictionRecord, Scorer,
    WindowInstance, DEFAULT_TAU,
};
use crate::model::{
    EdgeWeightMode, GcnParams, HeadParams, TrainingTargets, DEFAULT_GCN_LAYERS, DEFAULT_HIDDEN,
};
use crate::types::{GoldRoster, Head, NameMention, NULL_SPEAKER};

pub const DEFAULT_LEARNING_RATE: f64 = 1e-5;
pub const DEFAULT_BATCH_SIZE: usize = 16;
pub const DEFAULT_MAX_EPOCHS: usize = 20;
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum TrainerError {
    #[error("loss became non-finite ({loss}) in epoch {epoch}")]
    DivergedLoss { epoch: usize, loss: f64 },
    #[error("the training set produced no instances")]
    EmptyTrainSet,
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("checkpoint version {found} is not supported (expected {expected})")]
    CheckpointVersion { found: u32, expected: u32 },
    #[error("checkpoint declares a hash encoder but stores no encoder state")]
    MissingEncoderState,
    #[error("unreadable checkpoint: {0}")]
    BadCheckpoint(serde_json::Error),
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Which token-vector backend feeds the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EncoderConfig {
    /// Feature-hashed vectors: a fixed random part plus a trainable
    /// per-bucket table.
    Hash {
        dim: usize,
        n_buckets: usize,
        seed: u64,
    },
    /// Frozen word vectors loaded from disk.
    Pretrained { path: PathBuf },
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig::Hash {
            dim: 64,
            n_buckets: 4096,
            seed: 17,
        }
    }
}

/// Everything a training run needs to be reproduced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub model_kind: ModelKind,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Hidden width of each pairing head.
    pub hidden: usize,
    /// Graph layers for the multi-name model; ignored by the others.
    pub gcn_layers: usize,
    pub edge_mode: EdgeWeightMode,
    /// Candidate threshold used for dev scoring and prediction.
    pub tau: f64,
    pub seeds: Vec<u64>,
    pub encoder: EncoderConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            model_kind: ModelKind::Single,
            learning_rate: DEFAULT_LEARNING_RATE,
            batch_size: DEFAULT_BATCH_SIZE,
            max_epochs: DEFAULT_MAX_EPOCHS,
            hidden: DEFAULT_HIDDEN,
            gcn_layers: DEFAULT_GCN_LAYERS,
            edge_mode: EdgeWeightMode::default(),
            tau: DEFAULT_TAU,
            seeds: vec![1, 2, 3],
            encoder: EncoderConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainerError> {
        let fail = |msg: &str| Err(TrainerError::InvalidConfig(msg.to_string()));
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return fail("learning_rate must be a positive finite number");
        }
        if self.batch_size == 0 {
            return fail("batch_size must be at least 1");
        }
        if self.hidden == 0 {
            return fail("hidden must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return fail("tau must lie in [0, 1]");
        }
        if self.seeds.is_empty() {
            return fail("at least one seed is required");
        }
        if let EncoderConfig::Hash { dim, n_buckets, .. } = &self.encoder {
            if *dim == 0 {
                return fail("hash encoder dim must be at least 1");
            }
            if *n_buckets < 2 {
                return fail("hash encoder needs at least 2 buckets (one is reserved for padding)");
            }
        }
        Ok(())
    }
}

/// A ready-to-use encoder instantiated from config or a checkpoint.
pub enum LoadedEncoder {
    Hash(HashEncoder),
    Pretrained(PretrainedEncoder),
}

impl LoadedEncoder {
    /// Fresh encoder: hash tables are built in place, pretrained vectors
    /// load from disk.
    pub fn init(cfg: &EncoderConfig) -> Result<Self, EncodeError> {
        match cfg {
            EncoderConfig::Hash {
                dim,
                n_buckets,
                seed,
            } => Ok(LoadedEncoder::Hash(HashEncoder::new(*dim, *n_buckets, *seed))),
            EncoderConfig::Pretrained { path } => {
                Ok(LoadedEncoder::Pretrained(PretrainedEncoder::load(path)?))
            }
        }
    }

    pub fn as_instance_encoder(&self) -> InstanceEncoder<'_> {
        match self {
            LoadedEncoder::Hash(e) => InstanceEncoder::Hash(e),
            LoadedEncoder::Pretrained(e) => InstanceEncoder::Frozen(e),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            LoadedEncoder::Hash(e) => e.dim(),
            LoadedEncoder::Pretrained(e) => e.dim(),
        }
    }

    /// The trainable embedding table, present only for the hash backend.
    pub fn learned_rows(&self) -> Option<&[Vec<f64>]> {
        match self {
            LoadedEncoder::Hash(e) => Some(&e.learned),
            LoadedEncoder::Pretrained(_) => None,
        }
    }

    fn learned_mut(&mut self) -> Option<&mut Vec<Vec<f64>>> {
        match self {
            LoadedEncoder::Hash(e) => Some(&mut e.learned),
            LoadedEncoder::Pretrained(_) => None,
        }
    }

    fn table_shape(&self) -> Option<(usize, usize)> {
        match self {
            LoadedEncoder::Hash(e) => Some((e.n_buckets(), e.dim())),
            LoadedEncoder::Pretrained(_) => None,
        }
    }
}

/// Supervision for one labeled mention: y_h = 1 for the window slot whose
/// speaker carries the label, all zeros for "null" and for speakers outside
/// the window. When the label matches several slots (the same person spoke
/// before and after), the nearest wins, current first, then previous, then
/// next, so at most one target is ever set.
fn targets_for(label: &str, wi: &WindowInstance) -> TrainingTargets {
    if label == NULL_SPEAKER {
        return TrainingTargets::NONE;
    }
    for h in [Head::Cur, Head::Prev, Head::Next] {
        if wi.window_speaker(h) == label {
            return TrainingTargets::for_head(Some(h));
        }
    }
    TrainingTargets::NONE
}

/// Builds scoring instances for one meeting and fills the training targets
/// from its labeled mentions. Prediction uses the same function (the targets
/// are simply ignored), so training and inference share one numeric path.
pub fn make_instances(
    meeting: &Meeting,
    kind: ModelKind,
    encoder: &InstanceEncoder,
) -> Result<Vec<WindowInstance>, EncodeError> {
    let mentions: Vec<NameMention> = meeting.mentions.iter().map(|lm| lm.mention.clone()).collect();
    let mut instances = build_instances(&meeting.transcript, &mentions, kind, encoder)?;
    let labels: BTreeMap<(usize, usize), &str> = meeting
        .mentions
        .iter()
        .map(|lm| {
            (
                (lm.mention.utt_index, lm.mention.start_tok),
                lm.label.as_str(),
            )
        })
        .collect();
    for wi in &mut instances {
        for i in 0..wi.mentions.len() {
            let key = (wi.mentions[i].utt_index, wi.mentions[i].start_tok);
            let label = labels.get(&key).copied().unwrap_or(NULL_SPEAKER);
            let t = targets_for(label, wi);
            wi.numeric.targets[i] = t;
        }
    }
    Ok(instances)
}

/// Instances for a meeting list, grouped by meeting id for scoring.
pub fn meeting_instances(
    meetings: &[Meeting],
    kind: ModelKind,
    encoder: &InstanceEncoder,
) -> Result<Vec<(String, Vec<WindowInstance>)>, EncodeError> {
    meetings
        .iter()
        .map(|m| {
            Ok((
                m.transcript.meeting_id.clone(),
                make_instances(m, kind, encoder)?,
            ))
        })
        .collect()
}

/// Adam with the usual defaults (β1 0.9, β2 0.999, ε 1e-8). Moments are
/// stored in [`Grads`]-shaped accumulators and walked in the same canonical
/// tensor order as the parameters.
struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: i32,
    m: Grads,
    v: Grads,
}

impl Adam {
    fn new(
        lr: f64,
        heads: &HeadParams,
        gcn: &GcnParams,
        table_shape: Option<(usize, usize)>,
    ) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: Grads::zeros_like(heads, gcn, table_shape),
            v: Grads::zeros_like(heads, gcn, table_shape),
        }
    }

    fn step(
        &mut self,
        heads: &mut HeadParams,
        gcn: &mut GcnParams,
        learned: Option<&mut Vec<Vec<f64>>>,
        grads: &mut Grads,
    ) {
        self.t += 1;
        let (lr, beta1, beta2, eps) = (self.lr, self.beta1, self.beta2, self.eps);
        let bc1 = 1.0 - beta1.powi(self.t);
        let bc2 = 1.0 - beta2.powi(self.t);
        let params = tensors_mut(heads, gcn, learned);
        let gs = tensors_mut(&mut grads.heads, &mut grads.gcn, grads.learned.as_mut());
        let ms = tensors_mut(&mut self.m.heads, &mut self.m.gcn, self.m.learned.as_mut());
        let vs = tensors_mut(&mut self.v.heads, &mut self.v.gcn, self.v.learned.as_mut());
        debug_assert!(params.len() == gs.len() && params.len() == ms.len());
        for (((p, g), m), v) in params.into_iter().zip(gs).zip(ms).zip(vs) {
            for i in 0..p.len() {
                let gi = g[i];
                m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
                v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}

/// One line of the training log. Epoch 0 records the untouched starting
/// point, so its train_loss is zero by convention.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Summed loss over every training instance visited this epoch.
    pub train_loss: f64,
    pub dev: Metrics,
}

/// Writes the history as newline-delimited JSON records.
pub fn write_training_log(path: &Path, history: &[EpochRecord]) -> Result<(), TrainerError> {
    let mut out = Vec::new();
    for rec in history {
        serde_json::to_writer(&mut out, rec).expect("epoch records serialize");
        out.push(b'\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Versioned container for everything prediction needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub config: TrainConfig,
    pub seed: u64,
    pub heads: HeadParams,
    /// Graph layers; empty for model kinds that never refine.
    pub gcn: GcnParams,
    /// Hash backend state. The fixed tables rebuild from the recorded seed;
    /// the learned part carries the trained rows.
    pub hash_encoder: Option<HashEncoder>,
    /// Epoch whose parameters this checkpoint holds.
    pub best_epoch: usize,
    /// Dev metrics at that epoch.
    pub dev: Metrics,
    pub history: Vec<EpochRecord>,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<(), TrainerError> {
        let mut file = fs::File::create(path)?;
        let json = serde_json::to_string_pretty(self).expect("checkpoints serialize");
        file.write_all(json.as_bytes())?;
        file.write_all(b"\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, TrainerError> {
        let text = fs::read_to_string(path)?;
        let ck: Checkpoint = serde_json::from_str(&text).map_err(TrainerError::BadCheckpoint)?;
        if ck.version != CHECKPOINT_VERSION {
            return Err(TrainerError::CheckpointVersion {
                found: ck.version,
                expected: CHECKPOINT_VERSION,
            });
        }
        Ok(ck)
    }

    /// Encoder for building instances at prediction time.
    pub fn load_encoder(&self) -> Result<LoadedEncoder, TrainerError> {
        match (&self.config.encoder, &self.hash_encoder) {
            (_, Some(h)) => Ok(LoadedEncoder::Hash(h.clone())),
            (EncoderConfig::Pretrained { path }, None) => {
                Ok(LoadedEncoder::Pretrained(PretrainedEncoder::load(path)?))
            }
            (EncoderConfig::Hash { .. }, None) => Err(TrainerError::MissingEncoderState),
        }
    }

    /// Scorer over this checkpoint's parameters. The encoder must be the one
    /// returned by [`Checkpoint::load_encoder`] so the learned table matches.
    pub fn scorer<'a>(&'a self, encoder: &'a LoadedEncoder) -> Scorer<'a> {
        Scorer {
            heads: &self.heads,
            gcn: &self.gcn,
            mode: self.config.edge_mode,
            kind: self.config.model_kind,
            learned: encoder.learned_rows(),
        }
    }
}

/// The gold entries for exactly the given meetings. Metrics computed inside
/// the trainer always score a specific meeting set, so a caller may pass a
/// corpus-wide gold map without inflating the recall denominator.
fn gold_for_meetings(
    meetings: &[Meeting],
    gold: &BTreeMap<String, GoldRoster>,
) -> BTreeMap<String, GoldRoster> {
    meetings
        .iter()
        .filter_map(|m| {
            let id = &m.transcript.meeting_id;
            gold.get(id).map(|g| (id.clone(), g.clone()))
        })
        .collect()
}

fn dev_metrics(
    cfg: &TrainConfig,
    heads: &HeadParams,
    gcn: &GcnParams,
    encoder: &LoadedEncoder,
    dev: &[(String, Vec<WindowInstance>)],
    gold: &BTreeMap<String, GoldRoster>,
) -> Result<Metrics, TrainerError> {
    let scorer = Scorer {
        heads,
        gcn,
        mode: cfg.edge_mode,
        kind: cfg.model_kind,
        learned: encoder.learned_rows(),
    };
    let predictions = predict_meetings(dev, &scorer, cfg.tau, false);
    Ok(speaker_prf_default(&predictions, gold)?)
}

struct Snapshot {
    heads: HeadParams,
    gcn: GcnParams,
    learned: Option<Vec<Vec<f64>>>,
    epoch: usize,
    dev: Metrics,
}

/// Trains one model. Deterministic for a fixed seed: parameter init, epoch
/// shuffles, and every arithmetic step derive from `seed` alone.
///
/// The returned checkpoint holds the parameters of the epoch with the best
/// dev F1 (ties keep the earlier epoch, including the untrained starting
/// point). With an empty dev set there is no selection signal, so the final
/// epoch wins.
pub fn train(
    cfg: &TrainConfig,
    seed: u64,
    train_set: &[Meeting],
    dev_set: &[Meeting],
    dev_gold: &BTreeMap<String, GoldRoster>,
) -> Result<Checkpoint, TrainerError> {
    cfg.validate()?;
    let dev_gold = gold_for_meetings(dev_set, dev_gold);
    let mut encoder = LoadedEncoder::init(&cfg.encoder)?;
    let dim = encoder.dim();

    let mut heads = HeadParams::seeded(dim, cfg.hidden, seed);
    let mut gcn = if cfg.model_kind.uses_gcn() {
        GcnParams::seeded(dim, cfg.gcn_layers, seed.wrapping_add(1))
    } else {
        GcnParams::disabled()
    };

    let (train_instances, dev_instances) = {
        let ienc = encoder.as_instance_encoder();
        let mut flat: Vec<Instance> = Vec::new();
        for m in train_set {
            for wi in make_instances(m, cfg.model_kind, &ienc)? {
                flat.push(wi.numeric);
            }
        }
        (flat, meeting_instances(dev_set, cfg.model_kind, &ienc)?)
    };
    if train_instances.is_empty() {
        return Err(TrainerError::EmptyTrainSet);
    }

    let table_shape = encoder.table_shape();
    let mut adam = Adam::new(cfg.learning_rate, &heads, &gcn, table_shape);
    let mut rng = ChaCha20Rng::seed_from_u64(seed.wrapping_add(2));

    let init_dev = dev_metrics(cfg, &heads, &gcn, &encoder, &dev_instances, &dev_gold)?;
    let mut history = vec![EpochRecord {
        epoch: 0,
        train_loss: 0.0,
        dev: init_dev.clone(),
    }];
    let mut best = Snapshot {
        heads: heads.clone(),
        gcn: gcn.clone(),
        learned: encoder.learned_rows().map(<[_]>::to_vec),
        epoch: 0,
        dev: init_dev,
    };

    let mut order: Vec<usize> = (0..train_instances.len()).collect();
    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let mut grads = Grads::zeros_like(&heads, &gcn, table_shape);
            let mut batch_loss = 0.0;
            for &idx in chunk {
                let (loss, _) = accumulate_gradients(
                    &train_instances[idx],
                    &heads,
                    &gcn,
                    cfg.edge_mode,
                    encoder.learned_rows(),
                    &mut grads,
                );
                batch_loss += loss;
            }
            if !batch_loss.is_finite() {
                return Err(TrainerError::DivergedLoss {
                    epoch,
                    loss: batch_loss,
                });
            }
            adam.step(&mut heads, &mut gcn, encoder.learned_mut(), &mut grads);
            epoch_loss += batch_loss;
        }

        let dev = dev_metrics(cfg, &heads, &gcn, &encoder, &dev_instances, &dev_gold)?;
        let improved = if dev_set.is_empty() {
            true
        } else {
            dev.f1 > best.dev.f1
        };
        history.push(EpochRecord {
            epoch,
            train_loss: epoch_loss,
            dev: dev.clone(),
        });
        if improved {
            best = Snapshot {
                heads: heads.clone(),
                gcn: gcn.clone(),
                learned: encoder.learned_rows().map(<[_]>::to_vec),
                epoch,
                dev,
            };
        }
    }

    let hash_encoder = match encoder {
        LoadedEncoder::Hash(mut h) => {
            if let Some(rows) = best.learned {
                h.learned = rows;
            }
            Some(h)
        }
        LoadedEncoder::Pretrained(_) => None,
    };
    Ok(Checkpoint {
        version: CHECKPOINT_VERSION,
        config: cfg.clone(),
        seed,
        heads: best.heads,
        gcn: best.gcn,
        hash_encoder,
        best_epoch: best.epoch,
        dev: best.dev,
        history,
    })
}

/// Scores a trained checkpoint against a labeled meeting set. Gold entries
/// for meetings outside the set are ignored.
pub fn evaluate_checkpoint(
    ck: &Checkpoint,
    meetings: &[Meeting],
    gold: &BTreeMap<String, GoldRoster>,
) -> Result<Metrics, TrainerError> {
    let gold = gold_for_meetings(meetings, gold);
    let encoder = ck.load_encoder()?;
    let items = {
        let ienc = encoder.as_instance_encoder();
        meeting_instances(meetings, ck.config.model_kind, &ienc)?
    };
    dev_metrics(&ck.config, &ck.heads, &ck.gcn, &encoder, &items, &gold)
}

/// Predicts speaker names for a meeting set with a trained checkpoint.
/// Mention labels, if present, are ignored.
pub fn predict_records(
    ck: &Checkpoint,
    meetings: &[Meeting],
    unique: bool,
) -> Result<Vec<PredictionRecord>, TrainerError> {
    let encoder = ck.load_encoder()?;
    let items = {
        let ienc = encoder.as_instance_encoder();
        meeting_instances(meetings, ck.config.model_kind, &ienc)?
    };
    let scorer = ck.scorer(&encoder);
    Ok(predict_meetings(&items, &scorer, ck.config.tau, unique))
}

/// One train/evaluate cycle per configured seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRun {
    pub seed: u64,
    pub dev: Metrics,
    pub test: Metrics,
}

/// Per-seed results plus the headline means over test metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub runs: Vec<SeedRun>,
    pub mean_precision: f64,
    pub mean_recall: f64,
    pub mean_f1: f64,
}

/// Trains once per seed and aggregates test metrics. Returns the summary and
/// the per-seed checkpoints in seed order.
pub fn run_seeds(
    cfg: &TrainConfig,
    train_set: &[Meeting],
    dev_set: &[Meeting],
    dev_gold: &BTreeMap<String, GoldRoster>,
    test_set: &[Meeting],
    test_gold: &BTreeMap<String, GoldRoster>,
) -> Result<(SeedSummary, Vec<Checkpoint>), TrainerError> {
    cfg.validate()?;
    let mut runs = Vec::new();
    let mut checkpoints = Vec::new();
    for &seed in &cfg.seeds {
        let ck = train(cfg, seed, train_set, dev_set, dev_gold)?;
        let test = evaluate_checkpoint(&ck, test_set, test_gold)?;
        runs.push(SeedRun {
            seed,
            dev: ck.dev.clone(),
            test,
        });
        checkpoints.push(ck);
    }
    let n = runs.len() as f64;
    let summary = SeedSummary {
        mean_precision: runs.iter().map(|r| r.test.precision).sum::<f64>() / n,
        mean_recall: runs.iter().map(|r| r.test.recall).sum::<f64>() / n,
        mean_f1: runs.iter().map(|r| r.test.f1).sum::<f64>() / n,
        runs,
    };
    Ok((summary, checkpoints))
}
