//! Exact gradients for the pairing heads, the graph layers, and the learned
//! embedding table.
//!
//! One [`Instance`] is the numeric core of a training example: the window's
//! token vectors, the segment layout, the name spans, and the per-name
//! targets. The forward pass caches every intermediate needed to run the
//! chain rule by hand; [`accumulate_gradients`] adds one instance's
//! gradients into a shared accumulator so batches sum naturally.
//!
//! The gradient of the clamped cross-entropy is computed as if unclamped
//! (p − y per head), which is exact whenever probabilities stay inside the
//! clamp bounds; [`gradcheck`] reports a margin so callers can reject
//! instances sitting on a ReLU kink or a clamp boundary where finite
//! differences are meaningless.

use crate::model::{
    dot, loss, pair_input, sigmoid, EdgeWeightMode, Ffn, GcnParams, HeadParams, TrainingTargets,
};
use crate::types::{Head, HeadScores};
use serde::{Deserialize, Serialize};

/// Numeric training example: K name spans scored against one shared window.
/// Token vectors are `base[t]` plus, when `buckets` is non-empty, the
/// learned embedding row `buckets[t]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub base: Vec<Vec<f64>>,
    /// Per-token embedding bucket; empty when embeddings are frozen.
    pub buckets: Vec<usize>,
    pub prev_len: usize,
    pub cur_len: usize,
    pub next_len: usize,
    /// Inclusive token ranges within the current utterance, one per name.
    pub spans: Vec<(usize, usize)>,
    pub targets: Vec<TrainingTargets>,
}

impl Instance {
    pub fn total_tokens(&self) -> usize {
        self.prev_len + self.cur_len + self.next_len
    }

    pub fn k(&self) -> usize {
        self.spans.len()
    }

    fn check(&self) {
        debug_assert_eq!(self.base.len(), self.total_tokens());
        debug_assert!(self.buckets.is_empty() || self.buckets.len() == self.base.len());
        debug_assert!(self.prev_len >= 1 && self.cur_len >= 1 && self.next_len >= 1);
        debug_assert_eq!(self.spans.len(), self.targets.len());
        debug_assert!(!self.spans.is_empty());
        for &(s, e) in &self.spans {
            debug_assert!(s <= e && e < self.cur_len);
        }
    }
}

/// Gradient accumulator shaped exactly like the trainable parameters.
#[derive(Debug, Clone)]
pub struct Grads {
    pub heads: HeadParams,
    pub gcn: GcnParams,
    /// Dense gradient for the learned embedding table, when trainable.
    pub learned: Option<Vec<Vec<f64>>>,
}

impl Grads {
    pub fn zeros_like(
        heads: &HeadParams,
        gcn: &GcnParams,
        table_shape: Option<(usize, usize)>,
    ) -> Self {
        let hidden = heads.prev.hidden_dim();
        let mut g_gcn = gcn.clone();
        for layer in &mut g_gcn.layers {
            layer.w.iter_mut().for_each(|row| row.fill(0.0));
            layer.b.fill(0.0);
        }
        Grads {
            heads: HeadParams::zeros(heads.dim, hidden),
            gcn: g_gcn,
            learned: table_shape.map(|(n, d)| vec![vec![0.0; d]; n]),
        }
    }
}

/// Mutable slices over every trainable tensor, in a fixed canonical order.
/// The optimizer and the gradient checker walk parameters and gradients in
/// lockstep through this one function.
pub fn tensors_mut<'a>(
    heads: &'a mut HeadParams,
    gcn: &'a mut GcnParams,
    learned: Option<&'a mut Vec<Vec<f64>>>,
) -> Vec<&'a mut [f64]> {
    let mut out: Vec<&mut [f64]> = Vec::new();
    let HeadParams {
        prev, cur, next, ..
    } = heads;
    for ffn in [prev, cur, next] {
        let Ffn { w1, b1, w2, b2 } = ffn;
        for row in w1.iter_mut() {
            out.push(row.as_mut_slice());
        }
        out.push(b1.as_mut_slice());
        out.push(w2.as_mut_slice());
        out.push(std::slice::from_mut(b2));
    }
    for layer in &mut gcn.layers {
        for row in layer.w.iter_mut() {
            out.push(row.as_mut_slice());
        }
        out.push(layer.b.as_mut_slice());
    }
    if let Some(table) = learned {
        for row in table.iter_mut() {
            out.push(row.as_mut_slice());
        }
    }
    out
}

struct HeadCache {
    x: Vec<f64>,
    z1: Vec<f64>,
    a1: Vec<f64>,
    p: f64,
}

struct Cache {
    /// h^0_i = pooled span vectors.
    names: Vec<Vec<f64>>,
    dots: Vec<Vec<f64>>,
    alpha: Vec<Vec<f64>>,
    /// hs[l] for l = 0..=L; hs[0] = names.
    hs: Vec<Vec<Vec<f64>>>,
    /// Pre-activations, us[l-1] belongs to layer l.
    us: Vec<Vec<Vec<f64>>>,
    /// Transformed node vectors W^l h^{l-1}_j, parallel to us.
    whs: Vec<Vec<Vec<f64>>>,
    head_caches: Vec<[HeadCache; 3]>,
    scores: Vec<HeadScores>,
    loss: f64,
    margin: f64,
}

fn mean_range(x: &[Vec<f64>], lo: usize, hi: usize, dim: usize) -> Vec<f64> {
    let mut out = vec![0.0; dim];
    for row in &x[lo..hi] {
        for (o, v) in out.iter_mut().zip(row) {
            *o += v;
        }
    }
    let n = (hi - lo) as f64;
    out.iter_mut().for_each(|o| *o /= n);
    out
}

fn run_forward(
    inst: &Instance,
    heads: &HeadParams,
    gcn: &GcnParams,
    mode: EdgeWeightMode,
    learned: Option<&[Vec<f64>]>,
) -> Cache {
    inst.check();
    let dim = heads.dim;
    let mut margin = f64::INFINITY;

    let x: Vec<Vec<f64>> = inst
        .base
        .iter()
        .enumerate()
        .map(|(t, b)| match (learned, inst.buckets.get(t)) {
            (Some(table), Some(&bucket)) => {
                b.iter().zip(&table[bucket]).map(|(a, l)| a + l).collect()
            }
            _ => b.clone(),
        })
        .collect();

    let p = inst.prev_len;
    let c = inst.cur_len;
    let t = inst.total_tokens();
    let r = [
        mean_range(&x, 0, p, dim),
        mean_range(&x, p, p + c, dim),
        mean_range(&x, p + c, t, dim),
    ];
    let names: Vec<Vec<f64>> = inst
        .spans
        .iter()
        .map(|&(s, e)| mean_range(&x, p + s, p + e + 1, dim))
        .collect();

    let use_graph = !gcn.layers.is_empty();
    let (dots, alpha) = if use_graph {
        let dots = crate::model::dot_matrix(&names);
        if mode == EdgeWeightMode::NormalizedDotSoftmax {
            for row in &dots {
                margin = margin.min(row.iter().sum::<f64>().abs());
            }
        }
        let alpha = crate::model::edge_weights(&names, mode);
        (dots, alpha)
    } else {
        (Vec::new(), Vec::new())
    };

    let mut hs: Vec<Vec<Vec<f64>>> = vec![names.clone()];
    let mut us: Vec<Vec<Vec<f64>>> = Vec::new();
    let mut whs: Vec<Vec<Vec<f64>>> = Vec::new();
    for layer in &gcn.layers {
        let h_prev = hs.last().unwrap();
        let wh: Vec<Vec<f64>> = h_prev
            .iter()
            .map(|hj| layer.w.iter().map(|row| dot(row, hj)).collect())
            .collect();
        let k = names.len();
        let mut u = vec![vec![0.0; dim]; k];
        for i in 0..k {
            for j in 0..k {
                let a = alpha[i][j];
                for (ui, w) in u[i].iter_mut().zip(&wh[j]) {
                    *ui += a * w;
                }
            }
            for (ui, b) in u[i].iter_mut().zip(&layer.b) {
                *ui += b;
            }
        }
        let h: Vec<Vec<f64>> = u
            .iter()
            .map(|ui| ui.iter().map(|&v| v.max(0.0)).collect())
            .collect();
        for ui in &u {
            for &v in ui {
                margin = margin.min(v.abs());
            }
        }
        whs.push(wh);
        us.push(u);
        hs.push(h);
    }

    let refined = hs.last().unwrap().clone();
    let mut head_caches = Vec::with_capacity(refined.len());
    let mut scores = Vec::with_capacity(refined.len());
    let mut total_loss = 0.0;
    for (i, n_vec) in refined.iter().enumerate() {
        let per_head: [HeadCache; 3] = std::array::from_fn(|h_idx| {
            let head = Head::ALL[h_idx];
            let ffn = heads.head(head);
            let x_in = pair_input(n_vec, &r[h_idx]);
            let (z1, a1, z2) = ffn.forward_parts(&x_in);
            for &z in &z1 {
                margin = margin.min(z.abs());
            }
            margin = margin.min(16.0 - z2.abs());
            HeadCache {
                x: x_in,
                z1,
                a1,
                p: sigmoid(z2),
            }
        });
        let s = HeadScores {
            p_prev: per_head[0].p,
            p_cur: per_head[1].p,
            p_next: per_head[2].p,
        };
        total_loss += loss(&s, &inst.targets[i]);
        scores.push(s);
        head_caches.push(per_head);
    }

    Cache {
        names,
        dots,
        alpha,
        hs,
        us,
        whs,
        head_caches,
        scores,
        loss: total_loss,
        margin,
    }
}

/// Loss and per-name head scores for one instance.
pub fn instance_forward(
    inst: &Instance,
    heads: &HeadParams,
    gcn: &GcnParams,
    mode: EdgeWeightMode,
    learned: Option<&[Vec<f64>]>,
) -> (f64, Vec<HeadScores>) {
    let cache = run_forward(inst, heads, gcn, mode, learned);
    (cache.loss, cache.scores)
}

fn ffn_backward(
    ffn: &Ffn,
    grad: &mut Ffn,
    cache: &HeadCache,
    dz2: f64,
    dx: &mut [f64],
) {
    for (gw, a) in grad.w2.iter_mut().zip(&cache.a1) {
        *gw += dz2 * a;
    }
    grad.b2 += dz2;
    for (h, ((w2, z1), (gw1_row, gb1))) in ffn
        .w2
        .iter()
        .zip(&cache.z1)
        .zip(grad.w1.iter_mut().zip(grad.b1.iter_mut()))
        .enumerate()
    {
        let (w2, z1) = (*w2, *z1);
        if z1 <= 0.0 {
            continue;
        }
        let dz1 = dz2 * w2;
        *gb1 += dz1;
        for (gw, xv) in gw1_row.iter_mut().zip(&cache.x) {
            *gw += dz1 * xv;
        }
        for (dxv, wv) in dx.iter_mut().zip(&ffn.w1[h]) {
            *dxv += dz1 * wv;
        }
    }
}

/// Runs forward and backward for one instance, adding its gradients into
/// `out`. Returns the instance loss and scores, so training needs exactly
/// one pass per example.
pub fn accumulate_gradients(
    inst: &Instance,
    heads: &HeadParams,
    gcn: &GcnParams,
    mode: EdgeWeightMode,
    learned: Option<&[Vec<f64>]>,
    out: &mut Grads,
) -> (f64, Vec<HeadScores>) {
    let cache = run_forward(inst, heads, gcn, mode, learned);
    let dim = heads.dim;
    let k = inst.k();

    let mut d_names = vec![vec![0.0; dim]; k];
    let mut d_r = [vec![0.0; dim], vec![0.0; dim], vec![0.0; dim]];

    for (i, d_name) in d_names.iter_mut().enumerate() {
        for (h_idx, &head) in Head::ALL.iter().enumerate() {
            let hc = &cache.head_caches[i][h_idx];
            let y = inst.targets[i].get(head);
            let dz2 = hc.p - y;
            let (ffn, gffn) = match head {
                Head::Prev => (&heads.prev, &mut out.heads.prev),
                Head::Cur => (&heads.cur, &mut out.heads.cur),
                Head::Next => (&heads.next, &mut out.heads.next),
            };
            let mut dx = vec![0.0; 2 * dim];
            ffn_backward(ffn, gffn, hc, dz2, &mut dx);
            for (dn, v) in d_name.iter_mut().zip(&dx[..dim]) {
                *dn += v;
            }
            for (dr, v) in d_r[h_idx].iter_mut().zip(&dx[dim..]) {
                *dr += v;
            }
        }
    }

    // Graph backward: walk the layers in reverse, accumulating d alpha
    // across layers, then push the alpha gradient through the softmax and
    // the dot products into the span vectors.
    let use_graph = !gcn.layers.is_empty();
    let mut dh = d_names;
    if use_graph {
        let mut d_alpha = vec![vec![0.0; k]; k];
        for l in (0..gcn.layers.len()).rev() {
            let layer = &gcn.layers[l];
            let glayer = &mut out.gcn.layers[l];
            let u = &cache.us[l];
            let wh = &cache.whs[l];
            let h_prev = &cache.hs[l];

            let du: Vec<Vec<f64>> = (0..k)
                .map(|i| {
                    dh[i]
                        .iter()
                        .zip(&u[i])
                        .map(|(&d, &uv)| if uv > 0.0 { d } else { 0.0 })
                        .collect()
                })
                .collect();

            for dui in &du {
                for (gb, d) in glayer.b.iter_mut().zip(dui) {
                    *gb += d;
                }
            }
            for (dai, dui) in d_alpha.iter_mut().zip(&du) {
                for (da, whj) in dai.iter_mut().zip(wh) {
                    *da += dot(dui, whj);
                }
            }
            // m_j = sum_i alpha_ij du_i collects every upstream use of the
            // transformed node j.
            let m: Vec<Vec<f64>> = (0..k)
                .map(|j| {
                    let mut mj = vec![0.0; dim];
                    for (arow, dui) in cache.alpha.iter().zip(&du) {
                        let a = arow[j];
                        for (mv, d) in mj.iter_mut().zip(dui) {
                            *mv += a * d;
                        }
                    }
                    mj
                })
                .collect();
            for j in 0..k {
                for (grow, &mv) in glayer.w.iter_mut().zip(&m[j]) {
                    for (g, hv) in grow.iter_mut().zip(&h_prev[j]) {
                        *g += mv * hv;
                    }
                }
            }
            let mut dh_prev = vec![vec![0.0; dim]; k];
            for j in 0..k {
                for (row, &mv) in layer.w.iter().zip(&m[j]) {
                    for (d, wv) in dh_prev[j].iter_mut().zip(row) {
                        *d += mv * wv;
                    }
                }
            }
            dh = dh_prev;
        }

        // Softmax rows: de_ij = alpha_ij (dalpha_ij - sum_k dalpha_ik alpha_ik).
        for i in 0..k {
            let row_dot: f64 = (0..k).map(|j| d_alpha[i][j] * cache.alpha[i][j]).sum();
            let de: Vec<f64> = (0..k)
                .map(|j| cache.alpha[i][j] * (d_alpha[i][j] - row_dot))
                .collect();
            let dd: Vec<f64> = match mode {
                EdgeWeightMode::DotSoftmax => de,
                EdgeWeightMode::NormalizedDotSoftmax => {
                    let s: f64 = cache.dots[i].iter().sum();
                    if s.abs() < 1e-12 {
                        // Forward fell back to raw dots for this row.
                        de
                    } else {
                        let inner: f64 =
                            de.iter().zip(&cache.dots[i]).map(|(a, b)| a * b).sum();
                        de.iter()
                            .map(|&d| d / s - inner / (s * s))
                            .collect()
                    }
                }
            };
            for j in 0..k {
                let g = dd[j];
                for (dn, v) in dh[i].iter_mut().zip(&cache.names[j]) {
                    *dn += g * v;
                }
                for (dn, v) in dh[j].iter_mut().zip(&cache.names[i]) {
                    *dn += g * v;
                }
            }
        }
    }
    let d_names = dh;

    // Pooling backward: means distribute gradients uniformly over their
    // token ranges; span tokens also carry their utterance-mean share.
    let t = inst.total_tokens();
    let mut dx_tok = vec![vec![0.0; dim]; t];
    let segs = [
        (0, inst.prev_len),
        (inst.prev_len, inst.prev_len + inst.cur_len),
        (inst.prev_len + inst.cur_len, t),
    ];
    for (h_idx, &(lo, hi)) in segs.iter().enumerate() {
        let scale = 1.0 / (hi - lo) as f64;
        for row in &mut dx_tok[lo..hi] {
            for (d, v) in row.iter_mut().zip(&d_r[h_idx]) {
                *d += scale * v;
            }
        }
    }
    for (i, &(s, e)) in inst.spans.iter().enumerate() {
        let scale = 1.0 / (e - s + 1) as f64;
        for row in &mut dx_tok[inst.prev_len + s..=inst.prev_len + e] {
            for (d, v) in row.iter_mut().zip(&d_names[i]) {
                *d += scale * v;
            }
        }
    }

    if let (Some(table_grad), false) = (out.learned.as_mut(), inst.buckets.is_empty()) {
        for (tok, &bucket) in inst.buckets.iter().enumerate() {
            for (g, d) in table_grad[bucket].iter_mut().zip(&dx_tok[tok]) {
                *g += d;
            }
        }
    }

    (cache.loss, cache.scores)
}

/// Result of one finite-difference comparison.
#[derive(Debug, Clone, Copy)]
pub struct GradcheckReport {
    pub max_rel_err: f64,
    /// Smallest distance of any ReLU pre-activation from its kink (and of
    /// any output logit from the clamp region). Non-positive margins make
    /// finite differences unreliable; resample the instance instead.
    pub margin: f64,
    pub checked: usize,
}

/// Compares analytic gradients against central finite differences over every
/// trainable parameter.
pub fn gradcheck(
    inst: &Instance,
    heads: &HeadParams,
    gcn: &GcnParams,
    mode: EdgeWeightMode,
    learned: Option<&Vec<Vec<f64>>>,
    step: f64,
) -> GradcheckReport {
    let margin = run_forward(inst, heads, gcn, mode, learned.map(|t| t.as_slice())).margin;

    let table_shape = learned.map(|t| (t.len(), t[0].len()));
    let mut grads = Grads::zeros_like(heads, gcn, table_shape);
    accumulate_gradients(inst, heads, gcn, mode, learned.map(|t| t.as_slice()), &mut grads);
    let analytic_tensors: Vec<Vec<f64>> =
        tensors_mut(&mut grads.heads, &mut grads.gcn, grads.learned.as_mut())
            .iter()
            .map(|s| s.to_vec())
            .collect();

    let mut w_heads = heads.clone();
    let mut w_gcn = gcn.clone();
    let mut w_learned = learned.cloned();

    let mut max_rel = 0.0f64;
    let mut checked = 0usize;
    for (ti, tensor) in analytic_tensors.iter().enumerate() {
        for (idx, &analytic) in tensor.iter().enumerate() {
            let mut eval_at = |delta: f64| -> f64 {
                {
                    let mut slices = tensors_mut(&mut w_heads, &mut w_gcn, w_learned.as_mut());
                    slices[ti][idx] += delta;
                }
                let (l, _) = instance_forward(
                    inst,
                    &w_heads,
                    &w_gcn,
                    mode,
                    w_learned.as_deref(),
                );
                {
                    let mut slices = tensors_mut(&mut w_heads, &mut w_gcn, w_learned.as_mut());
                    slices[ti][idx] -= delta;
                }
                l
            };
            let l_plus = eval_at(step);
            let l_minus = eval_at(-step);
            let numeric = (l_plus - l_minus) / (2.0 * step);
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-3);
            max_rel = max_rel.max(rel);
            checked += 1;
        }
    }

    GradcheckReport {
        max_rel_err: max_rel,
        margin,
        checked,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn random_instance(
        rng: &mut ChaCha20Rng,
        dim: usize,
        k_max: usize,
        with_buckets: Option<usize>,
    ) -> Instance {
        let prev_len = rng.gen_range(1..4);
        let next_len = rng.gen_range(1..4);
        let k = rng.gen_range(1..=k_max);
        // One disjoint single-token span per name keeps layout simple.
        let cur_len = k + rng.gen_range(1..3);
        let t = prev_len + cur_len + next_len;
        let base = (0..t)
            .map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let buckets = match with_buckets {
            Some(n) => (0..t).map(|_| rng.gen_range(0..n)).collect(),
            None => Vec::new(),
        };
        let spans = (0..k).map(|i| (i, i)).collect();
        let targets = (0..k)
            .map(|_| {
                TrainingTargets::for_head(match rng.gen_range(0..4) {
                    0 => Some(Head::Prev),
                    1 => Some(Head::Cur),
                    2 => Some(Head::Next),
                    _ => None,
                })
            })
            .collect();
        Instance {
            base,
            buckets,
            prev_len,
            cur_len,
            next_len,
            spans,
            targets,
        }
    }

    fn random_params(
        rng_seed: u64,
        dim: usize,
        hidden: usize,
        layers: usize,
    ) -> (HeadParams, GcnParams) {
        (
            HeadParams::seeded(dim, hidden, rng_seed),
            if layers == 0 {
                GcnParams::disabled()
            } else {
                GcnParams::seeded(dim, layers, rng_seed + 1)
            },
        )
    }

    #[test]
    fn forward_matches_model_ops_for_single_name() {
        use crate::encode::EncodedMention;
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let dim = 4;
        let (heads, gcn) = random_params(2, dim, 6, 0);
        let inst = random_instance(&mut rng, dim, 1, None);
        let (l, scores) = instance_forward(&inst, &heads, &gcn, EdgeWeightMode::DotSoftmax, None);

        let mean = |lo: usize, hi: usize| -> Vec<f64> {
            (0..dim)
                .map(|d| (lo..hi).map(|t| inst.base[t][d]).sum::<f64>() / (hi - lo) as f64)
                .collect()
        };
        let p = inst.prev_len;
        let c = inst.cur_len;
        let (s, e) = inst.spans[0];
        let em = EncodedMention {
            r_prev: mean(0, p),
            r_cur: mean(p, p + c),
            r_next: mean(p + c, inst.total_tokens()),
            r_n: mean(p + s, p + e + 1),
        };
        let want = crate::model::score_single(&em, &heads).unwrap();
        assert!((scores[0].p_prev - want.p_prev).abs() < 1e-12);
        assert!((scores[0].p_cur - want.p_cur).abs() < 1e-12);
        assert!((scores[0].p_next - want.p_next).abs() < 1e-12);
        let want_loss = crate::model::loss(&want, &inst.targets[0]);
        assert!((l - want_loss).abs() < 1e-12);
    }

    #[test]
    fn gradients_match_finite_differences_single_name() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let dim = 4;
        let (heads, gcn) = random_params(12, dim, 6, 0);
        let mut done = 0;
        let mut attempts = 0;
        while done < 15 && attempts < 200 {
            attempts += 1;
            let inst = random_instance(&mut rng, dim, 1, None);
            let report = gradcheck(&inst, &heads, &gcn, EdgeWeightMode::DotSoftmax, None, 1e-5);
            if report.margin < 1e-3 {
                continue;
            }
            assert!(
                report.max_rel_err <= 1e-4,
                "relative error {} over {} params",
                report.max_rel_err,
                report.checked
            );
            done += 1;
        }
        assert_eq!(done, 15, "too many degenerate instances");
    }

    #[test]
    fn gradients_match_finite_differences_multi_name_with_table() {
        let mut rng = ChaCha20Rng::seed_from_u64(21);
        let dim = 5;
        let n_buckets = 12;
        for mode in [
            EdgeWeightMode::DotSoftmax,
            EdgeWeightMode::NormalizedDotSoftmax,
        ] {
            let (heads, gcn) = random_params(22, dim, 6, 2);
            let mut table: Vec<Vec<f64>> = (0..n_buckets)
                .map(|_| (0..dim).map(|_| rng.gen_range(-0.2..0.2)).collect())
                .collect();
            table[0].fill(0.0);
            let mut done = 0;
            let mut attempts = 0;
            while done < 10 && attempts < 200 {
                attempts += 1;
                let inst = random_instance(&mut rng, dim, 4, Some(n_buckets));
                let report = gradcheck(&inst, &heads, &gcn, mode, Some(&table), 1e-5);
                if report.margin < 1e-3 {
                    continue;
                }
                assert!(
                    report.max_rel_err <= 1e-4,
                    "mode {:?}: relative error {} over {} params",
                    mode,
                    report.max_rel_err,
                    report.checked
                );
                done += 1;
            }
            assert_eq!(done, 10, "too many degenerate instances for {:?}", mode);
        }
    }

    #[test]
    fn batch_gradients_are_sums_of_instance_gradients() {
        let mut rng = ChaCha20Rng::seed_from_u64(31);
        let dim = 3;
        let (heads, gcn) = random_params(32, dim, 5, 1);
        let a = random_instance(&mut rng, dim, 2, None);
        let b = random_instance(&mut rng, dim, 3, None);

        let mut joint = Grads::zeros_like(&heads, &gcn, None);
        accumulate_gradients(&a, &heads, &gcn, EdgeWeightMode::DotSoftmax, None, &mut joint);
        accumulate_gradients(&b, &heads, &gcn, EdgeWeightMode::DotSoftmax, None, &mut joint);

        let mut ga = Grads::zeros_like(&heads, &gcn, None);
        accumulate_gradients(&a, &heads, &gcn, EdgeWeightMode::DotSoftmax, None, &mut ga);
        let mut gb = Grads::zeros_like(&heads, &gcn, None);
        accumulate_gradients(&b, &heads, &gcn, EdgeWeightMode::DotSoftmax, None, &mut gb);

        let js = tensors_mut(&mut joint.heads, &mut joint.gcn, None);
        let asl = tensors_mut(&mut ga.heads, &mut ga.gcn, None);
        let bsl = tensors_mut(&mut gb.heads, &mut gb.gcn, None);
        for ((j, a), b) in js.iter().zip(asl.iter()).zip(bsl.iter()) {
            for ((jv, av), bv) in j.iter().zip(a.iter()).zip(b.iter()) {
                assert!((jv - (av + bv)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn one_gradient_step_reduces_loss() {
        let mut rng = ChaCha20Rng::seed_from_u64(41);
        let dim = 4;
        let (mut heads, mut gcn) = random_params(42, dim, 6, 2);
        let inst = random_instance(&mut rng, dim, 3, None);
        let mode = EdgeWeightMode::DotSoftmax;

        let (before, _) = instance_forward(&inst, &heads, &gcn, mode, None);
        let mut grads = Grads::zeros_like(&heads, &gcn, None);
        accumulate_gradients(&inst, &heads, &gcn, mode, None, &mut grads);

        let lr = 1e-3;
        let gs = tensors_mut(&mut grads.heads, &mut grads.gcn, None)
            .into_iter()
            .map(|s| s.to_vec())
            .collect::<Vec<_>>();
        for (ps, g) in tensors_mut(&mut heads, &mut gcn, None).into_iter().zip(&gs) {
            for (p, gv) in ps.iter_mut().zip(g) {
                *p -= lr * gv;
            }
        }
        let (after, _) = instance_forward(&inst, &heads, &gcn, mode, None);
        assert!(
            after < before,
            "loss must decrease: before {before}, after {after}"
        );
    }

    #[test]
    fn canonical_tensor_order_is_stable() {
        let mut h1 = HeadParams::seeded(3, 4, 5);
        let mut g1 = GcnParams::seeded(3, 2, 6);
        let mut t1 = vec![vec![0.0; 3]; 4];
        let n = tensors_mut(&mut h1, &mut g1, Some(&mut t1)).len();
        // prev/cur/next: hidden w1 rows + b1 + w2 + b2 each; two layers of
        // (dim rows + bias); table rows.
        let expect = 3 * (4 + 3) + 2 * (3 + 1) + 4;
        assert_eq!(n, expect);
        let lens: Vec<usize> = tensors_mut(&mut h1, &mut g1, Some(&mut t1))
            .iter()
            .map(|s| s.len())
            .collect();
        let again: Vec<usize> = tensors_mut(&mut h1, &mut g1, Some(&mut t1))
            .iter()
            .map(|s| s.len())
            .collect();
        assert_eq!(lens, again);
    }

    #[test]
    fn frozen_embeddings_receive_no_gradient() {
        let mut rng = ChaCha20Rng::seed_from_u64(51);
        let dim = 3;
        let (heads, gcn) = random_params(52, dim, 4, 0);
        let inst = random_instance(&mut rng, dim, 1, None);
        let mut grads = Grads::zeros_like(&heads, &gcn, Some((8, dim)));
        accumulate_gradients(&inst, &heads, &gcn, EdgeWeightMode::DotSoftmax, None, &mut grads);
        let table = grads.learned.unwrap();
        assert!(table.iter().all(|row| row.iter().all(|&g| g == 0.0)));
    }
}
