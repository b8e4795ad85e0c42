//! Pairing heads and the multi-name graph network.
//!
//! A mention vector r_n is paired with each window speaker vector and fed
//! through one feed-forward head per window position (prev/cur/next), each
//! ending in a sigmoid. When an utterance carries several names, the name
//! vectors are first refined by a graph network over the fully connected
//! name graph, then scored by the same heads. Training minimizes the sum of
//! the three binary cross-entropies.

use crate::encode::EncodedMention;
use crate::types::{Head, HeadScores};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_HIDDEN: usize = 400;
pub const DEFAULT_GCN_LAYERS: usize = 2;

/// Probability clamp bounds used inside the loss.
pub const PROB_CLAMP: (f64, f64) = (1e-7, 1.0 - 1e-7);

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// One feed-forward network: linear, ReLU, linear, sigmoid; scalar output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ffn {
    /// hidden × input weight matrix.
    pub w1: Vec<Vec<f64>>,
    pub b1: Vec<f64>,
    /// Output row over the hidden layer.
    pub w2: Vec<f64>,
    pub b2: f64,
}

impl Ffn {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        Ffn {
            w1: vec![vec![0.0; input]; hidden],
            b1: vec![0.0; hidden],
            w2: vec![0.0; hidden],
            b2: 0.0,
        }
    }

    pub fn seeded(input: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let s1 = (6.0 / (input + hidden) as f64).sqrt();
        let s2 = (6.0 / (hidden + 1) as f64).sqrt();
        Ffn {
            w1: (0..hidden)
                .map(|_| (0..input).map(|_| rng.gen_range(-s1..s1)).collect())
                .collect(),
            b1: vec![0.0; hidden],
            w2: (0..hidden).map(|_| rng.gen_range(-s2..s2)).collect(),
            b2: 0.0,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w1.first().map_or(0, |row| row.len())
    }

    pub fn hidden_dim(&self) -> usize {
        self.w1.len()
    }

    /// Sigmoid output for one input vector.
    pub fn forward(&self, x: &[f64]) -> f64 {
        let z2 = self.forward_parts(x).2;
        sigmoid(z2)
    }

    /// (pre-activations, hidden activations, output logit).
    pub fn forward_parts(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>, f64) {
        let z1: Vec<f64> = self
            .w1
            .iter()
            .zip(&self.b1)
            .map(|(row, b)| dot(row, x) + b)
            .collect();
        let a1: Vec<f64> = z1.iter().map(|&z| z.max(0.0)).collect();
        let z2 = dot(&self.w2, &a1) + self.b2;
        (z1, a1, z2)
    }
}

/// The three position heads. Each head has its own parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadParams {
    pub dim: usize,
    pub prev: Ffn,
    pub cur: Ffn,
    pub next: Ffn,
}

impl HeadParams {
    pub fn zeros(dim: usize, hidden: usize) -> Self {
        HeadParams {
            dim,
            prev: Ffn::zeros(2 * dim, hidden),
            cur: Ffn::zeros(2 * dim, hidden),
            next: Ffn::zeros(2 * dim, hidden),
        }
    }

    pub fn seeded(dim: usize, hidden: usize, seed: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        HeadParams {
            dim,
            prev: Ffn::seeded(2 * dim, hidden, &mut rng),
            cur: Ffn::seeded(2 * dim, hidden, &mut rng),
            next: Ffn::seeded(2 * dim, hidden, &mut rng),
        }
    }

    pub fn head(&self, h: Head) -> &Ffn {
        match h {
            Head::Prev => &self.prev,
            Head::Cur => &self.cur,
            Head::Next => &self.next,
        }
    }
}

/// One graph-network layer: square weight matrix plus bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GcnLayer {
    pub w: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

/// Stacked graph-network layers. An empty stack disables refinement (the
/// ablation path); the standard configuration uses two layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GcnParams {
    pub layers: Vec<GcnLayer>,
}

impl GcnParams {
    pub fn disabled() -> Self {
        GcnParams { layers: Vec::new() }
    }

    /// Near-identity initialization: W = I plus small noise, b slightly
    /// positive so ReLU passes most coordinates at the start of training.
    pub fn seeded(dim: usize, n_layers: usize, seed: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let layers = (0..n_layers)
            .map(|_| GcnLayer {
                w: (0..dim)
                    .map(|i| {
                        (0..dim)
                            .map(|j| {
                                let eye = if i == j { 1.0 } else { 0.0 };
                                eye + rng.gen_range(-0.05..0.05)
                            })
                            .collect()
                    })
                    .collect(),
                b: vec![0.01; dim],
            })
            .collect();
        GcnParams { layers }
    }

    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }
}

/// How raw pairwise dot products become edge weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeWeightMode {
    /// Row-wise softmax over raw dot products r_i · r_j.
    #[default]
    DotSoftmax,
    /// Row-wise softmax over dot products first divided by their row sum.
    NormalizedDotSoftmax,
}

/// The fully connected graph over one utterance's name vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct NameGraph {
    pub node_vectors: Vec<Vec<f64>>,
    /// Row-stochastic edge weights, alpha[i][j] = weight of edge i←j.
    pub alpha: Vec<Vec<f64>>,
}

impl NameGraph {
    pub fn new(node_vectors: Vec<Vec<f64>>, mode: EdgeWeightMode) -> Self {
        let alpha = edge_weights(&node_vectors, mode);
        NameGraph {
            node_vectors,
            alpha,
        }
    }

    pub fn k(&self) -> usize {
        self.node_vectors.len()
    }
}

/// Gold labels for one mention: which window speaker (if any) it names.
/// All-zero targets encode a speaker outside the window or no speaker.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingTargets {
    pub y_prev: f64,
    pub y_cur: f64,
    pub y_next: f64,
}

impl TrainingTargets {
    pub const NONE: TrainingTargets = TrainingTargets {
        y_prev: 0.0,
        y_cur: 0.0,
        y_next: 0.0,
    };

    pub fn for_head(h: Option<Head>) -> Self {
        let mut t = TrainingTargets::NONE;
        match h {
            Some(Head::Prev) => t.y_prev = 1.0,
            Some(Head::Cur) => t.y_cur = 1.0,
            Some(Head::Next) => t.y_next = 1.0,
            None => {}
        }
        t
    }

    pub fn get(&self, h: Head) -> f64 {
        match h {
            Head::Prev => self.y_prev,
            Head::Cur => self.y_cur,
            Head::Next => self.y_next,
        }
    }
}

pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Concatenation of the mention vector and one speaker vector: the input to
/// that speaker position's head.
pub fn pair_input(r_n: &[f64], r_h: &[f64]) -> Vec<f64> {
    let mut x = Vec::with_capacity(r_n.len() + r_h.len());
    x.extend_from_slice(r_n);
    x.extend_from_slice(r_h);
    x
}

fn check_dim(expected: usize, v: &[f64]) -> Result<(), ModelError> {
    if v.len() != expected {
        return Err(ModelError::DimensionMismatch {
            expected,
            got: v.len(),
        });
    }
    Ok(())
}

/// Scores one mention against its three window speakers.
pub fn score_single(em: &EncodedMention, hp: &HeadParams) -> Result<HeadScores, ModelError> {
    for v in [&em.r_prev, &em.r_cur, &em.r_next, &em.r_n] {
        check_dim(hp.dim, v)?;
    }
    Ok(HeadScores {
        p_prev: hp.prev.forward(&pair_input(&em.r_n, &em.r_prev)),
        p_cur: hp.cur.forward(&pair_input(&em.r_n, &em.r_cur)),
        p_next: hp.next.forward(&pair_input(&em.r_n, &em.r_next)),
    })
}

fn stable_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|&e| e / sum).collect()
}

/// Raw pairwise dot products, row i = r_i · r_j for all j.
pub fn dot_matrix(vectors: &[Vec<f64>]) -> Vec<Vec<f64>> {
    vectors
        .iter()
        .map(|ri| vectors.iter().map(|rj| dot(ri, rj)).collect())
        .collect()
}

/// Row-stochastic edge weights over the fully connected name graph. Every
/// row sums to 1 and every entry is positive; self-loops are included.
pub fn edge_weights(vectors: &[Vec<f64>], mode: EdgeWeightMode) -> Vec<Vec<f64>> {
    let dots = dot_matrix(vectors);
    dots.iter()
        .map(|row| {
            let logits: Vec<f64> = match mode {
                EdgeWeightMode::DotSoftmax => row.clone(),
                EdgeWeightMode::NormalizedDotSoftmax => {
                    let sum: f64 = row.iter().sum();
                    if sum.abs() < 1e-12 {
                        // Degenerate row: all dots cancel; fall back to the
                        // raw dots so the softmax stays defined.
                        row.clone()
                    } else {
                        row.iter().map(|&d| d / sum).collect()
                    }
                }
            };
            stable_softmax(&logits)
        })
        .collect()
}

/// Applies the layer stack over the name graph: each layer maps every node
/// to ReLU of the alpha-weighted sum of the linearly transformed neighbour
/// vectors (self included). An empty stack returns the inputs unchanged.
pub fn gcn_forward(g: &NameGraph, gp: &GcnParams) -> Result<Vec<Vec<f64>>, ModelError> {
    let k = g.k();
    let dim = g.node_vectors.first().map_or(0, |v| v.len());
    for v in &g.node_vectors {
        check_dim(dim, v)?;
    }
    for layer in &gp.layers {
        if layer.w.len() != dim {
            return Err(ModelError::DimensionMismatch {
                expected: dim,
                got: layer.w.len(),
            });
        }
        for row in &layer.w {
            check_dim(dim, row)?;
        }
        check_dim(dim, &layer.b)?;
    }

    let mut h: Vec<Vec<f64>> = g.node_vectors.clone();
    for layer in &gp.layers {
        // Transform every node once, then mix rows by alpha.
        let wh: Vec<Vec<f64>> = h
            .iter()
            .map(|hj| layer.w.iter().map(|row| dot(row, hj)).collect())
            .collect();
        let mut next = vec![vec![0.0; dim]; k];
        for (ni, arow) in next.iter_mut().zip(&g.alpha) {
            for (&a, whj) in arow.iter().zip(&wh) {
                for (n, w) in ni.iter_mut().zip(whj) {
                    *n += a * w;
                }
            }
            for (n, b) in ni.iter_mut().zip(&layer.b) {
                *n = (*n + b).max(0.0);
            }
        }
        h = next;
    }
    Ok(h)
}

/// Scores every refined name vector against the shared window speakers.
pub fn score_multi(
    window_reps: (&[f64], &[f64], &[f64]),
    refined_names: &[Vec<f64>],
    hp: &HeadParams,
) -> Result<Vec<HeadScores>, ModelError> {
    let (r_prev, r_cur, r_next) = window_reps;
    refined_names
        .iter()
        .map(|r_n| {
            score_single(
                &EncodedMention {
                    r_prev: r_prev.to_vec(),
                    r_cur: r_cur.to_vec(),
                    r_next: r_next.to_vec(),
                    r_n: r_n.clone(),
                },
                hp,
            )
        })
        .collect()
}

pub fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_CLAMP.0, PROB_CLAMP.1)
}

fn bce(p: f64, y: f64) -> f64 {
    let p = clamp_prob(p);
    -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
}

/// Sum of the three per-head binary cross-entropies.
pub fn loss(scores: &HeadScores, targets: &TrainingTargets) -> f64 {
    Head::ALL
        .iter()
        .map(|&h| bce(scores.get(h), targets.get(h)))
        .sum()
}
