//! MAP estimation of CAIMIRA parameters.
//!
//! The objective is mean binary cross-entropy over observed (agent, item)
//! responses plus L1 penalties on the per-item difficulties and per-agent
//! skills (Laplace priors). Gradients are analytic — through the softmax,
//! the mean-centered difficulty transform, and the bilinear score — and are
//! verified against central finite differences by [`finite_diff_check`].
//!
//! The regularizer sums run over the *full* item and agent sets, not the
//! minibatch. During training each optimizer step applies the regularizer
//! scaled by 1/batch_count, so one epoch applies exactly one full copy of
//! the penalty.
//!
//! Batch reductions use fixed-chunk parallel folds ([`crate::par`]), so the
//! loss and gradients are bitwise reproducible for any thread count. The
//! `*_seq` variants are the always-sequential reference path.

mod adam;
mod trainer;

pub use adam::{adam_step, AdamState, GradBlocks, ADAM_BETA1, ADAM_BETA2, ADAM_EPSILON};
pub use trainer::{ablate_dimensions, init_params, train, AblationRow, EpochStats, FittedModel};

use serde::{Deserialize, Serialize};

use crate::embeddings::EmbeddingStore;
use crate::error::{CoreError, Result};
use crate::irt::{sigmoid, softmax_in_place, CaimiraParams};
use crate::linalg::Mat;
use crate::par;
use crate::{dataset::ResponseMatrix, linalg::dot};

/// Probabilities are clamped to [PROB_EPS, 1 − PROB_EPS] before the log.
pub const PROB_EPS: f64 = 1e-7;

/// Training hyperparameters. Defaults follow the published setup:
/// learning rate 0.005, batch size 512, λ_d = λ_s = 1e-5, m = 5.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub m: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub lambda_d: f64,
    pub lambda_s: f64,
    pub epochs: usize,
    pub seed: u64,
    pub validation_fraction: f64,
    pub early_stop_patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            m: 5,
            learning_rate: 0.005,
            batch_size: 512,
            lambda_d: 1e-5,
            lambda_s: 1e-5,
            epochs: 500,
            seed: 0,
            validation_fraction: 0.1,
            early_stop_patience: 10,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(CoreError::Config("m must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(CoreError::Config("learning rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(CoreError::Config("batch size must be >= 1".into()));
        }
        if self.lambda_d < 0.0 || self.lambda_s < 0.0 {
            return Err(CoreError::Config("lambdas must be >= 0".into()));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(CoreError::Config(
                "validation fraction must be in [0, 1)".into(),
            ));
        }
        if self.epochs == 0 {
            return Err(CoreError::Config("epochs must be >= 1".into()));
        }
        Ok(())
    }
}

/// One observed response, with the item resolved to its embedding row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrainEntry {
    pub agent: u32,
    pub item_row: u32,
    pub correct: bool,
}

/// Resolve matrix entries against the store. Every matrix item must have an
/// embedding row.
pub fn build_entries(matrix: &ResponseMatrix, store: &EmbeddingStore) -> Result<Vec<TrainEntry>> {
    let row_of: Vec<u32> = matrix
        .items()
        .iter()
        .map(|id| {
            store
                .index_of(id)
                .map(|r| r as u32)
                .ok_or_else(|| CoreError::Integrity(format!("item {id} missing from embedding store")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(matrix
        .iter()
        .map(|(agent, item, e)| TrainEntry {
            agent: agent as u32,
            item_row: row_of[item],
            correct: e.correct,
        })
        .collect())
}

#[inline]
fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

/// Forward pass for one entry. Returns (relevance, gaps, centered
/// embedding, probability).
fn forward(
    params: &CaimiraParams,
    store: &EmbeddingStore,
    entry: &TrainEntry,
) -> (Vec<f64>, Vec<f64>, Vec<f64>, f64) {
    let e = store.row(entry.item_row as usize);
    let centered: Vec<f64> = e
        .iter()
        .zip(&params.mean_embedding)
        .map(|(&a, &b)| a - b)
        .collect();
    let mut r = params.w_r.matvec(e);
    for (ri, bi) in r.iter_mut().zip(&params.b_r) {
        *ri += bi;
    }
    softmax_in_place(&mut r);
    let d = params.w_d.matvec(&centered);
    let skills = params.agent_skills.row(entry.agent as usize);
    let gaps: Vec<f64> = skills.iter().zip(&d).map(|(&s, &dk)| s - dk).collect();
    let p = sigmoid(dot(&gaps, &r));
    (r, gaps, centered, p)
}

fn cross_entropy_term(p: f64, correct: bool) -> f64 {
    let pc = clamp_prob(p);
    if correct {
        -pc.ln()
    } else {
        -(1.0 - pc).ln()
    }
}

fn ce_sum_chunk(params: &CaimiraParams, store: &EmbeddingStore, chunk: &[TrainEntry]) -> f64 {
    chunk
        .iter()
        .map(|entry| {
            let (_, _, _, p) = forward(params, store, entry);
            cross_entropy_term(p, entry.correct)
        })
        .sum()
}

/// Mean cross-entropy over the given entries, without regularization.
pub fn cross_entropy(
    params: &CaimiraParams,
    entries: &[TrainEntry],
    store: &EmbeddingStore,
) -> f64 {
    if entries.is_empty() {
        return f64::NAN;
    }
    let sum = par::chunk_map_fold(
        entries,
        par::DEFAULT_CHUNK,
        |chunk| ce_sum_chunk(params, store, chunk),
        0.0,
        |a, b| a + b,
    );
    sum / entries.len() as f64
}

/// L1 regularizer: λ_d Σ_j ‖d_j‖₁ over every store item plus
/// λ_s Σ_i ‖s_i‖₁ over every agent.
pub fn regularizer(params: &CaimiraParams, store: &EmbeddingStore, cfg: &TrainConfig) -> f64 {
    let rows: Vec<usize> = (0..store.len()).collect();
    let d_part = if cfg.lambda_d > 0.0 {
        par::chunk_map_fold(
            &rows,
            par::DEFAULT_CHUNK,
            |chunk| {
                chunk
                    .iter()
                    .map(|&j| params.difficulty(store.row(j)).iter().map(|v| v.abs()).sum::<f64>())
                    .sum::<f64>()
            },
            0.0,
            |a, b| a + b,
        )
    } else {
        0.0
    };
    let s_part: f64 = params.agent_skills.as_slice().iter().map(|v| v.abs()).sum();
    cfg.lambda_d * d_part + cfg.lambda_s * s_part
}

/// Full objective: mean batch cross-entropy plus the full-set regularizer
/// scaled by `reg_scale`.
pub fn loss_with_reg_scale(
    params: &CaimiraParams,
    batch: &[TrainEntry],
    store: &EmbeddingStore,
    cfg: &TrainConfig,
    reg_scale: f64,
) -> f64 {
    cross_entropy(params, batch, store) + reg_scale * regularizer(params, store, cfg)
}

/// MAP loss for a batch: mean cross-entropy plus the unscaled full-set
/// regularizer.
pub fn loss(
    params: &CaimiraParams,
    batch: &[TrainEntry],
    store: &EmbeddingStore,
    cfg: &TrainConfig,
) -> f64 {
    loss_with_reg_scale(params, batch, store, cfg, 1.0)
}

/// Sequential reference implementation of [`loss`]; bitwise identical.
pub fn loss_seq(
    params: &CaimiraParams,
    batch: &[TrainEntry],
    store: &EmbeddingStore,
    cfg: &TrainConfig,
) -> f64 {
    let ce = par::chunk_map_fold_seq(
        batch,
        par::DEFAULT_CHUNK,
        |chunk| ce_sum_chunk(params, store, chunk),
        0.0,
        |a, b| a + b,
    ) / batch.len() as f64;
    let rows: Vec<usize> = (0..store.len()).collect();
    let d_part = if cfg.lambda_d > 0.0 {
        par::chunk_map_fold_seq(
            &rows,
            par::DEFAULT_CHUNK,
            |chunk| {
                chunk
                    .iter()
                    .map(|&j| params.difficulty(store.row(j)).iter().map(|v| v.abs()).sum::<f64>())
                    .sum::<f64>()
            },
            0.0,
            |a, b| a + b,
        )
    } else {
        0.0
    };
    let s_part: f64 = params.agent_skills.as_slice().iter().map(|v| v.abs()).sum();
    // same association as loss_with_reg_scale, to stay bitwise identical
    let reg = cfg.lambda_d * d_part + cfg.lambda_s * s_part;
    ce + 1.0 * reg
}

#[inline]
fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0 // L1 subgradient at 0 taken as 0
    }
}

fn grad_chunk(
    params: &CaimiraParams,
    store: &EmbeddingStore,
    weight: f64,
    chunk: &[TrainEntry],
) -> GradBlocks {
    let mut g = GradBlocks::zeros_like(params);
    let m = params.m;
    for entry in chunk {
        let e = store.row(entry.item_row as usize);
        let (r, gaps, centered, p) = forward(params, store, entry);
        // d(ce)/dz is p − u inside the clamp band and 0 where the loss is
        // flat because the probability was clamped.
        let gz = if p <= PROB_EPS || p >= 1.0 - PROB_EPS {
            0.0
        } else {
            weight * (p - f64::from(u8::from(entry.correct)))
        };
        if gz == 0.0 {
            continue;
        }
        // z = Σ_k r_k (s_k − d_k)
        let skill_row = g.agent_skills.row_mut(entry.agent as usize);
        for k in 0..m {
            skill_row[k] += gz * r[k];
        }
        // softmax backward: g_rp = r ⊙ (g_r − ⟨g_r, r⟩)
        let gr: Vec<f64> = gaps.iter().map(|&gap| gz * gap).collect();
        let inner = dot(&gr, &r);
        let g_rp: Vec<f64> = r.iter().zip(&gr).map(|(&rk, &grk)| rk * (grk - inner)).collect();
        g.w_r.add_outer_rows(&g_rp, e);
        for k in 0..m {
            g.b_r[k] += g_rp[k];
        }
        // difficulty enters through −r
        let g_d: Vec<f64> = r.iter().map(|&rk| -gz * rk).collect();
        g.w_d.add_outer_rows(&g_d, &centered);
    }
    g
}

fn reg_grad_chunk(
    params: &CaimiraParams,
    store: &EmbeddingStore,
    scale: f64,
    rows: &[usize],
) -> Mat {
    let mut g = Mat::zeros(params.m, params.n);
    for &j in rows {
        let e = store.row(j);
        let centered: Vec<f64> = e
            .iter()
            .zip(&params.mean_embedding)
            .map(|(&a, &b)| a - b)
            .collect();
        let d = params.w_d.matvec(&centered);
        let signs: Vec<f64> = d.iter().map(|&v| scale * sign(v)).collect();
        g.add_outer_rows(&signs, &centered);
    }
    g
}

trait OuterRows {
    fn add_outer_rows(&mut self, row_scales: &[f64], v: &[f64]);
}

impl OuterRows for Mat {
    // self[k, :] += row_scales[k] * v for each k
    fn add_outer_rows(&mut self, row_scales: &[f64], v: &[f64]) {
        for (k, &s) in row_scales.iter().enumerate() {
            if s == 0.0 {
                continue;
            }
            for (dst, &x) in self.row_mut(k).iter_mut().zip(v) {
                *dst += s * x;
            }
        }
    }
}

fn grad_impl(
    params: &CaimiraParams,
    batch: &[TrainEntry],
    store: &EmbeddingStore,
    cfg: &TrainConfig,
    reg_scale: f64,
    sequential: bool,
) -> GradBlocks {
    let weight = 1.0 / batch.len() as f64;
    let fold = |mut a: GradBlocks, b: GradBlocks| {
        a.add_assign(&b);
        a
    };
    let map = |chunk: &[TrainEntry]| grad_chunk(params, store, weight, chunk);
    let mut g = if sequential {
        par::chunk_map_fold_seq(batch, par::DEFAULT_CHUNK, map, GradBlocks::zeros_like(params), fold)
    } else {
        par::chunk_map_fold(batch, par::DEFAULT_CHUNK, map, GradBlocks::zeros_like(params), fold)
    };

    // L1 on skills: every agent, not just those in the batch.
    let ls = reg_scale * cfg.lambda_s;
    if ls > 0.0 {
        for (gv, &pv) in g
            .agent_skills
            .as_mut_slice()
            .iter_mut()
            .zip(params.agent_skills.as_slice())
        {
            *gv += ls * sign(pv);
        }
    }
    // L1 on difficulties: every store item, flowing through W_D.
    let ld = reg_scale * cfg.lambda_d;
    if ld > 0.0 {
        let rows: Vec<usize> = (0..store.len()).collect();
        let map = |chunk: &[usize]| reg_grad_chunk(params, store, ld, chunk);
        let fold = |mut a: Mat, b: Mat| {
            a.add_assign(&b);
            a
        };
        let reg = if sequential {
            par::chunk_map_fold_seq(&rows, par::DEFAULT_CHUNK, map, Mat::zeros(params.m, params.n), fold)
        } else {
            par::chunk_map_fold(&rows, par::DEFAULT_CHUNK, map, Mat::zeros(params.m, params.n), fold)
        };
        g.w_d.add_assign(&reg);
    }
    g
}

/// Gradient of [`loss_with_reg_scale`] with respect to all trainable
/// blocks (agent skills, W_R, b_R, W_D).
pub fn grad_with_reg_scale(
    params: &CaimiraParams,
    batch: &[TrainEntry],
    store: &EmbeddingStore,
    cfg: &TrainConfig,
    reg_scale: f64,
) -> GradBlocks {
    grad_impl(params, batch, store, cfg, reg_scale, false)
}

/// Gradient of [`loss`].
pub fn grad(
    params: &CaimiraParams,
    batch: &[TrainEntry],
    store: &EmbeddingStore,
    cfg: &TrainConfig,
) -> GradBlocks {
    grad_with_reg_scale(params, batch, store, cfg, 1.0)
}

/// Sequential reference implementation of [`grad`]; bitwise identical.
pub fn grad_seq(
    params: &CaimiraParams,
    batch: &[TrainEntry],
    store: &EmbeddingStore,
    cfg: &TrainConfig,
) -> GradBlocks {
    grad_impl(params, batch, store, cfg, 1.0, true)
}

/// Scaled relative error between two gradient values. The floor keeps
/// finite-difference roundoff on near-zero coordinates from dominating.
fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / f64::max(1e-4, a.abs().max(b.abs()))
}

/// Compare a provided gradient against central finite differences of the
/// objective on a seeded subsample of at most `max_coords` coordinates.
/// Returns the maximum scaled relative error.
pub fn finite_diff_error(
    grads: &GradBlocks,
    params: &CaimiraParams,
    batch: &[TrainEntry],
    store: &EmbeddingStore,
    cfg: &TrainConfig,
    reg_scale: f64,
    h: f64,
    max_coords: usize,
    seed: u64,
) -> f64 {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;

    assert!(h > 0.0, "finite difference step must be positive");
    let sizes = [
        grads.agent_skills.as_slice().len(),
        grads.w_r.as_slice().len(),
        grads.b_r.len(),
        grads.w_d.as_slice().len(),
    ];
    let total: usize = sizes.iter().sum();
    let mut coords: Vec<usize> = (0..total).collect();
    if total > max_coords {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        coords.shuffle(&mut rng);
        coords.truncate(max_coords);
        coords.sort_unstable();
    }

    let mut work = params.clone();
    let mut max_err = 0.0f64;
    for &coord in &coords {
        let analytic = grads.flat_get(coord);
        let original = block_get(&work, coord);
        block_set(&mut work, coord, original + h);
        let up = loss_with_reg_scale(&work, batch, store, cfg, reg_scale);
        block_set(&mut work, coord, original - h);
        let down = loss_with_reg_scale(&work, batch, store, cfg, reg_scale);
        block_set(&mut work, coord, original);
        let numeric = (up - down) / (2.0 * h);
        max_err = max_err.max(rel_err(analytic, numeric));
    }
    max_err
}

/// Gradient check for the stock objective (reg scale 1). Central
/// differences over every block, ≤ `max_coords` seeded coordinates.
pub fn finite_diff_check(
    params: &CaimiraParams,
    batch: &[TrainEntry],
    store: &EmbeddingStore,
    cfg: &TrainConfig,
    h: f64,
    seed: u64,
) -> f64 {
    let g = grad(params, batch, store, cfg);
    finite_diff_error(&g, params, batch, store, cfg, 1.0, h, 500, seed)
}

fn block_get(params: &CaimiraParams, coord: usize) -> f64 {
    let (block, idx) = locate(params, coord);
    match block {
        0 => params.agent_skills.as_slice()[idx],
        1 => params.w_r.as_slice()[idx],
        2 => params.b_r[idx],
        _ => params.w_d.as_slice()[idx],
    }
}

fn block_set(params: &mut CaimiraParams, coord: usize, value: f64) {
    let (block, idx) = locate(params, coord);
    match block {
        0 => params.agent_skills.as_mut_slice()[idx] = value,
        1 => params.w_r.as_mut_slice()[idx] = value,
        2 => params.b_r[idx] = value,
        _ => params.w_d.as_mut_slice()[idx] = value,
    }
}

fn locate(params: &CaimiraParams, coord: usize) -> (usize, usize) {
    let sizes = [
        params.agent_skills.as_slice().len(),
        params.w_r.as_slice().len(),
        params.b_r.len(),
        params.w_d.as_slice().len(),
    ];
    let mut offset = 0;
    for (block, &size) in sizes.iter().enumerate() {
        if coord < offset + size {
            return (block, coord - offset);
        }
        offset += size;
    }
    panic!("coordinate {coord} out of range");
}
