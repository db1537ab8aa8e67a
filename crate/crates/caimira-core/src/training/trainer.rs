//! The training loop and the latent-dimension ablation driver.

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{
    adam_step, build_entries, cross_entropy, grad_with_reg_scale, loss_with_reg_scale, AdamState,
    TrainConfig, TrainEntry,
};
use crate::dataset::ResponseMatrix;
use crate::embeddings::EmbeddingStore;
use crate::error::{CoreError, Result};
use crate::irt::CaimiraParams;
use crate::linalg::Mat;
use crate::par::mix64;

// Distinct RNG streams derived from one user seed.
const SPLIT_SALT: u64 = 0x73_70_6c_69_74; // "split"
const INIT_SALT: u64 = 0x69_6e_69_74; // "init"
const SHUFFLE_SALT: u64 = 0x73_68_75_66; // "shuf"

/// Per-epoch losses. `train_loss` is the full MAP objective (cross-entropy
/// over training entries plus one full regularizer copy); `val_loss` is
/// plain cross-entropy on the held-out entries, NaN when there are none.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

/// A trained model with its history and the config that produced it.
/// Parameters are rounded to the f32 grid, so checkpoint round trips are
/// bit-exact.
#[derive(Debug, Clone)]
pub struct FittedModel {
    pub params: CaimiraParams,
    pub history: Vec<EpochStats>,
    pub config: TrainConfig,
    pub best_epoch: usize,
}

impl FittedModel {
    /// Validation loss at the selected epoch (train loss when no split).
    pub fn best_val_loss(&self) -> f64 {
        let stats = self.history[self.best_epoch];
        if stats.val_loss.is_nan() {
            stats.train_loss
        } else {
            stats.val_loss
        }
    }
}

/// Small symmetric initialization keeping initial predictions near 0.5:
/// skills ~ Normal(0, 0.1²), transforms ~ Uniform(±√(6/(m+n))), zero bias.
pub fn init_params(
    m: usize,
    n: usize,
    n_agents: usize,
    mean_embedding: Vec<f64>,
    rng: &mut ChaCha8Rng,
) -> CaimiraParams {
    let normal = Normal::new(0.0, 0.1).expect("valid normal");
    let skills: Vec<f64> = (0..n_agents * m).map(|_| normal.sample(rng)).collect();
    let bound = (6.0 / (m + n) as f64).sqrt();
    let mut uniform = |len: usize| -> Vec<f64> {
        (0..len).map(|_| rng.random_range(-bound..bound)).collect()
    };
    CaimiraParams {
        m,
        n,
        agent_skills: Mat::from_vec(n_agents, m, skills).expect("shape"),
        w_r: Mat::from_vec(m, n, uniform(m * n)).expect("shape"),
        b_r: vec![0.0; m],
        w_d: Mat::from_vec(m, n, uniform(m * n)).expect("shape"),
        mean_embedding,
    }
}

/// Split entry indices into (train, validation), stratified by agent:
/// each agent contributes `fraction` of its entries (floor) to validation.
fn split_validation(
    entries: &[TrainEntry],
    n_agents: usize,
    fraction: f64,
    rng: &mut ChaCha8Rng,
) -> (Vec<TrainEntry>, Vec<TrainEntry>) {
    let mut per_agent: Vec<Vec<usize>> = vec![Vec::new(); n_agents];
    for (idx, e) in entries.iter().enumerate() {
        per_agent[e.agent as usize].push(idx);
    }
    let mut train = Vec::with_capacity(entries.len());
    let mut val = Vec::new();
    for indices in per_agent.iter_mut() {
        indices.shuffle(rng);
        let n_val = (indices.len() as f64 * fraction).floor() as usize;
        for (pos, &idx) in indices.iter().enumerate() {
            if pos < n_val {
                val.push(entries[idx]);
            } else {
                train.push(entries[idx]);
            }
        }
    }
    (train, val)
}

/// Fit CAIMIRA by minibatch Adam on the MAP objective.
///
/// Entries are shuffled each epoch with a seeded RNG; the regularizer is
/// applied once per step scaled by 1/batch_count so each epoch accumulates
/// exactly one full penalty. Returns the parameters of the epoch with the
/// best validation loss. Fully deterministic for a fixed config.
pub fn train(
    matrix: &ResponseMatrix,
    store: &EmbeddingStore,
    cfg: &TrainConfig,
) -> Result<FittedModel> {
    cfg.validate()?;
    let entries = build_entries(matrix, store)?;
    if entries.is_empty() {
        return Err(CoreError::Config("response matrix has no entries".into()));
    }
    let n_agents = matrix.agents().len();

    let mut split_rng = ChaCha8Rng::seed_from_u64(mix64(cfg.seed ^ SPLIT_SALT));
    let (mut train_entries, val_entries) =
        split_validation(&entries, n_agents, cfg.validation_fraction, &mut split_rng);
    if train_entries.is_empty() {
        return Err(CoreError::Config(
            "validation split left no training entries".into(),
        ));
    }

    let mut init_rng = ChaCha8Rng::seed_from_u64(mix64(cfg.seed ^ INIT_SALT));
    let mut params = init_params(cfg.m, store.dim(), n_agents, store.mean().to_vec(), &mut init_rng);
    let mut adam = AdamState::new(&params);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(mix64(cfg.seed ^ SHUFFLE_SALT));

    let n_batches = train_entries.len().div_ceil(cfg.batch_size);
    let reg_scale = 1.0 / n_batches as f64;

    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best = f64::INFINITY;
    let mut best_epoch = 0usize;
    let mut best_params = params.clone();
    let mut stale = 0usize;

    for epoch in 0..cfg.epochs {
        train_entries.shuffle(&mut shuffle_rng);
        for batch in train_entries.chunks(cfg.batch_size) {
            let grads = grad_with_reg_scale(&params, batch, store, cfg, reg_scale);
            adam_step(&mut adam, &mut params, &grads, cfg.learning_rate)?;
        }
        let train_loss = loss_with_reg_scale(&params, &train_entries, store, cfg, 1.0);
        let val_loss = if val_entries.is_empty() {
            f64::NAN
        } else {
            cross_entropy(&params, &val_entries, store)
        };
        if !train_loss.is_finite() {
            return Err(CoreError::Training(format!(
                "loss diverged at epoch {epoch} (train loss {train_loss})"
            )));
        }
        history.push(EpochStats {
            epoch,
            train_loss,
            val_loss,
        });
        let monitored = if val_loss.is_nan() { train_loss } else { val_loss };
        if monitored < best {
            best = monitored;
            best_epoch = epoch;
            best_params = params.clone();
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.early_stop_patience {
                break;
            }
        }
    }

    best_params.quantize_f32();
    Ok(FittedModel {
        params: best_params,
        history,
        config: cfg.clone(),
        best_epoch,
    })
}

/// One row of the dimension-ablation table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AblationRow {
    pub m: usize,
    pub best_val_loss: f64,
}

/// Train one model per latent dimension count, sharing the seed (and hence
/// the validation split) across runs.
pub fn ablate_dimensions(
    matrix: &ResponseMatrix,
    store: &EmbeddingStore,
    cfg: &TrainConfig,
    m_list: &[usize],
) -> Result<Vec<AblationRow>> {
    if m_list.is_empty() {
        return Err(CoreError::Config("m_list must be non-empty".into()));
    }
    let mut rows = Vec::with_capacity(m_list.len());
    for &m in m_list {
        let mut run_cfg = cfg.clone();
        run_cfg.m = m;
        let fitted = train(matrix, store, &run_cfg)?;
        rows.push(AblationRow {
            m,
            best_val_loss: fitted.best_val_loss(),
        });
    }
    Ok(rows)
}
