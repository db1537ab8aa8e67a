//! Synthetic ground truth for end-to-end validation.
//!
//! Real response logs are not redistributable, so correctness of the whole
//! fitting pipeline is demonstrated by parameter recovery: sample a known
//! model, generate responses from it, refit, and compare. Embeddings are
//! drawn from a mixture of `m_true` Gaussian clusters — with isotropic
//! embeddings the relevance transform would be unidentifiable in practice,
//! and the content-aware mechanism is exactly what must be recoverable.
//!
//! The model's likelihood is invariant to consistently permuting latent
//! dimensions, so recovered parameters are aligned to the truth by the
//! permutation maximizing per-dimension correlation of effective
//! difficulty before any metric is computed. Recovery is measured on
//! effective quantities (skills, per-item difficulty and relevance), not on
//! raw transform weights, which are identified only up to the span of the
//! embedding distribution.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::{MatrixEntry, Origin, Question, QuestionBank, ResponseMatrix};
use crate::embeddings::EmbeddingStore;
use crate::error::{CoreError, Result};
use crate::irt::CaimiraParams;
use crate::linalg::{pearson, Mat};
use crate::par::mix64;

/// Generator settings. Defaults match the reference recovery benchmark:
/// 60 agents, 2000 items, 2 true dimensions, 16-dim embeddings, half of
/// all (agent, item) pairs observed.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_agents: usize,
    pub n_items: usize,
    pub m_true: usize,
    pub embed_dim: usize,
    pub clues_min: usize,
    pub clues_max: usize,
    /// Fraction of (agent, item) pairs that receive a response.
    pub density: f64,
    /// Std of the cluster centers in embedding space.
    pub cluster_spread: f64,
    /// Std of per-item noise around its cluster center.
    pub embed_noise: f64,
    /// Std of true agent skills.
    pub skill_scale: f64,
    /// Target logit gap between the dominant and other relevance dims.
    pub relevance_gain: f64,
    /// Target per-dimension std of true item difficulties.
    pub difficulty_scale: f64,
    /// Probability of flipping a sampled response (label noise).
    pub flip_prob: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_agents: 60,
            n_items: 2000,
            m_true: 2,
            embed_dim: 16,
            clues_min: 1,
            clues_max: 5,
            density: 0.5,
            cluster_spread: 2.0,
            embed_noise: 1.0,
            skill_scale: 1.5,
            relevance_gain: 3.0,
            difficulty_scale: 1.5,
            flip_prob: 0.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_agents == 0 || self.n_items == 0 || self.m_true == 0 || self.embed_dim == 0 {
            return Err(CoreError::Config("all synth counts must be positive".into()));
        }
        if self.clues_min == 0 || self.clues_min > self.clues_max {
            return Err(CoreError::Config("invalid clue count range".into()));
        }
        if !(self.density > 0.0 && self.density <= 1.0) {
            return Err(CoreError::Config("density must be in (0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&self.flip_prob) {
            return Err(CoreError::Config("flip_prob must be in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Everything the generator produces. File formats match the real
/// pipeline, so downstream stages run unchanged on synthetic data.
#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub bank: QuestionBank,
    pub true_params: CaimiraParams,
    pub store: EmbeddingStore,
    pub matrix: ResponseMatrix,
}

const CATEGORIES: &[&str] = &[
    "History",
    "Literature",
    "Science",
    "Music",
    "Geography",
    "Mythology",
    "Religion",
    "Fine Arts",
];

const FILLER_WORDS: &[&str] = &[
    "figure", "novel", "battle", "theorem", "river", "composer", "empire", "element",
    "painting", "treaty", "opera", "planet", "dynasty", "poem", "species", "festival",
];

const TEMPORAL_PHRASES: &[&str] = &[
    "in the 19th century",
    "in the 20th century",
    "before the French Revolution",
    "after the fall of Rome",
];

const SUPERLATIVE_PHRASES: &[&str] = &["the most recent example", "the best known case"];

fn synth_clue(rng: &mut ChaCha8Rng, qid: &str, t: usize) -> String {
    let w1 = FILLER_WORDS[rng.random_range(0..FILLER_WORDS.len())];
    let w2 = FILLER_WORDS[rng.random_range(0..FILLER_WORDS.len())];
    let mut clue = format!("clue {t} of {qid} mentions a {w1} and a {w2}");
    // occasional temporal or superlative phrasing so text features vary
    if rng.random_bool(0.2) {
        clue.push(' ');
        clue.push_str(TEMPORAL_PHRASES[rng.random_range(0..TEMPORAL_PHRASES.len())]);
    } else if rng.random_bool(0.15) {
        clue.push_str(", ");
        clue.push_str(SUPERLATIVE_PHRASES[rng.random_range(0..SUPERLATIVE_PHRASES.len())]);
    }
    clue
}

/// Sample a full synthetic dataset from the generative model.
pub fn generate_synthetic(cfg: &SynthConfig) -> Result<SynthOutput> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(mix64(cfg.seed ^ 0x53_59_4e)); // "SYN"
    let (m, n) = (cfg.m_true, cfg.embed_dim);

    // Questions whose expanded items total exactly n_items.
    let mut bank = QuestionBank::new();
    let qid_width = cfg.n_items.to_string().len();
    let mut items_left = cfg.n_items;
    let mut qidx = 0usize;
    while items_left > 0 {
        let clues = rng
            .random_range(cfg.clues_min..=cfg.clues_max)
            .min(items_left);
        let qid = format!("q{qidx:0qid_width$}");
        let question = Question {
            clues: (1..=clues).map(|t| synth_clue(&mut rng, &qid, t)).collect(),
            answer: format!("answer {qidx}"),
            aliases: vec![],
            category: CATEGORIES[rng.random_range(0..CATEGORIES.len())].to_string(),
            subcategory: None,
            wiki_summary: Some(format!("summary of answer {qidx}")),
            qid,
        };
        bank.push(question)?;
        items_left -= clues;
        qidx += 1;
    }
    let item_ids: Vec<String> = bank.expand_all().into_iter().map(|it| it.item_id).collect();
    debug_assert_eq!(item_ids.len(), cfg.n_items);

    // Embeddings from m_true Gaussian clusters.
    let center_dist = Normal::new(0.0, cfg.cluster_spread).expect("valid normal");
    let noise_dist = Normal::new(0.0, cfg.embed_noise).expect("valid normal");
    let centers: Vec<Vec<f64>> = (0..m)
        .map(|_| (0..n).map(|_| center_dist.sample(&mut rng)).collect())
        .collect();
    let mut rows = Vec::with_capacity(cfg.n_items * n);
    for _ in 0..cfg.n_items {
        let z = rng.random_range(0..m);
        for d in 0..n {
            rows.push(centers[z][d] + noise_dist.sample(&mut rng));
        }
    }
    let store = EmbeddingStore::from_f64_rows(n, item_ids.clone(), rows)?;

    // True transforms. W_R rows point at the cluster centers so relevance
    // concentrates on the item's cluster with logit gap ~ relevance_gain.
    let center_norm = cfg.cluster_spread * cfg.cluster_spread * n as f64;
    let mut w_r = Mat::zeros(m, n);
    for k in 0..m {
        let scale = cfg.relevance_gain / center_norm;
        for d in 0..n {
            w_r.set(k, d, scale * centers[k][d]);
        }
    }
    let bias_dist = Normal::new(0.0, 0.1).expect("valid normal");
    let b_r: Vec<f64> = (0..m).map(|_| bias_dist.sample(&mut rng)).collect();

    // W_D starts standard normal, then each row is rescaled so the
    // per-dimension difficulty std over the items hits difficulty_scale.
    let unit = Normal::new(0.0, 1.0).expect("valid normal");
    let mut w_d = Mat::zeros(m, n);
    for k in 0..m {
        for d in 0..n {
            w_d.set(k, d, unit.sample(&mut rng));
        }
    }
    let mean_embedding = store.mean().to_vec();
    let mut per_dim_sumsq = vec![0.0f64; m];
    for j in 0..cfg.n_items {
        let centered: Vec<f64> = store
            .row(j)
            .iter()
            .zip(&mean_embedding)
            .map(|(&e, &mu)| e - mu)
            .collect();
        let d = w_d.matvec(&centered);
        for k in 0..m {
            per_dim_sumsq[k] += d[k] * d[k];
        }
    }
    for k in 0..m {
        let std = (per_dim_sumsq[k] / cfg.n_items as f64).sqrt();
        if std > 0.0 {
            let factor = cfg.difficulty_scale / std;
            for v in w_d.row_mut(k) {
                *v *= factor;
            }
        }
    }

    let skill_dist = Normal::new(0.0, cfg.skill_scale).expect("valid normal");
    let skills: Vec<f64> = (0..cfg.n_agents * m).map(|_| skill_dist.sample(&mut rng)).collect();

    let mut true_params = CaimiraParams {
        m,
        n,
        agent_skills: Mat::from_vec(cfg.n_agents, m, skills)?,
        w_r,
        b_r,
        w_d,
        mean_embedding,
    };
    true_params.quantize_f32();
    true_params.validate()?;

    // Observed pairs: a seeded partial shuffle picks exactly
    // round(density * n_a * n_q) distinct (agent, item) pairs.
    let total = cfg.n_agents * cfg.n_items;
    let n_observed = ((cfg.density * total as f64).round() as usize).clamp(1, total);
    let mut pair_indices: Vec<u32> = (0..total as u32).collect();
    let mut observed = Vec::with_capacity(n_observed);
    for i in 0..n_observed {
        let j = rng.random_range(i..total);
        pair_indices.swap(i, j);
        observed.push(pair_indices[i]);
    }
    observed.sort_unstable();

    let agent_width = cfg.n_agents.to_string().len();
    let agents: Vec<String> = (0..cfg.n_agents)
        .map(|i| format!("agent_{i:0agent_width$}"))
        .collect();
    let mut matrix = ResponseMatrix::new(agents, item_ids)?;
    for &flat in &observed {
        let agent = flat as usize / cfg.n_items;
        let item = flat as usize % cfg.n_items;
        let p = true_params.predict(agent, store.row(item))?;
        let mut correct = rng.random_bool(p);
        if cfg.flip_prob > 0.0 && rng.random_bool(cfg.flip_prob) {
            correct = !correct;
        }
        matrix.insert(
            agent,
            item,
            MatrixEntry {
                correct,
                origin: Origin::Observed,
            },
        )?;
    }

    Ok(SynthOutput {
        bank,
        true_params,
        store,
        matrix,
    })
}

/// Per-item effective difficulty columns (r ⊙ d) under the given params.
fn effective_difficulty_columns(params: &CaimiraParams, store: &EmbeddingStore) -> Mat {
    let mut out = Mat::zeros(store.len(), params.m);
    for j in 0..store.len() {
        let chars = params.characteristics(store.row(j));
        for k in 0..params.m {
            out.set(j, k, chars.relevance[k] * chars.difficulty[k]);
        }
    }
    out
}

fn correlation_table(true_eff: &Mat, est_eff: &Mat) -> Vec<Vec<f64>> {
    let m = true_eff.cols();
    let mut table = vec![vec![0.0; m]; m];
    for k in 0..m {
        let tc = true_eff.column(k);
        for l in 0..m {
            let ec = est_eff.column(l);
            let r = pearson(&tc, &ec);
            table[k][l] = if r.is_nan() { 0.0 } else { r };
        }
    }
    table
}

fn permutations(m: usize) -> Vec<Vec<usize>> {
    let mut result = Vec::new();
    let mut current: Vec<usize> = (0..m).collect();
    fn heap(k: usize, arr: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if k == 1 {
            out.push(arr.clone());
            return;
        }
        for i in 0..k {
            heap(k - 1, arr, out);
            if k % 2 == 0 {
                arr.swap(i, k - 1);
            } else {
                arr.swap(0, k - 1);
            }
        }
    }
    heap(m, &mut current, &mut result);
    result
}

/// Find the latent-dimension permutation aligning estimated parameters to
/// the truth: `perm[k]` is the estimated dimension matching true dimension
/// k, maximizing the summed Pearson correlation of per-item effective
/// difficulty. Exhaustive for m ≤ 6, greedy beyond.
pub fn align_dimensions(
    true_params: &CaimiraParams,
    est_params: &CaimiraParams,
    store: &EmbeddingStore,
) -> Result<Vec<usize>> {
    if true_params.m != est_params.m {
        return Err(CoreError::Contract(format!(
            "dimension mismatch: true m={} vs estimated m={}",
            true_params.m, est_params.m
        )));
    }
    let m = true_params.m;
    let true_eff = effective_difficulty_columns(true_params, store);
    let est_eff = effective_difficulty_columns(est_params, store);
    let corr = correlation_table(&true_eff, &est_eff);

    if m <= 6 {
        let mut best_perm = (0..m).collect::<Vec<_>>();
        let mut best_score = f64::NEG_INFINITY;
        for perm in permutations(m) {
            let score: f64 = (0..m).map(|k| corr[k][perm[k]]).sum();
            if score > best_score {
                best_score = score;
                best_perm = perm;
            }
        }
        Ok(best_perm)
    } else {
        // greedy: repeatedly take the best unmatched (true, est) pair
        let mut perm = vec![usize::MAX; m];
        let mut used_true = vec![false; m];
        let mut used_est = vec![false; m];
        for _ in 0..m {
            let mut best = (f64::NEG_INFINITY, 0, 0);
            for k in 0..m {
                if used_true[k] {
                    continue;
                }
                for l in 0..m {
                    if used_est[l] {
                        continue;
                    }
                    if corr[k][l] > best.0 {
                        best = (corr[k][l], k, l);
                    }
                }
            }
            perm[best.1] = best.2;
            used_true[best.1] = true;
            used_est[best.2] = true;
        }
        Ok(perm)
    }
}

/// Recovery quality after alignment.
#[derive(Debug, Clone, Serialize)]
pub struct RecoveryReport {
    pub permutation: Vec<usize>,
    /// Pearson r between true and estimated agent skills, per dimension.
    pub skill_r: Vec<f64>,
    /// Pearson r between true and estimated per-item difficulty, per dim.
    pub difficulty_r: Vec<f64>,
    /// Pearson r between true and estimated per-item relevance, per dim.
    pub relevance_r: Vec<f64>,
    /// Pearson r between true and estimated effective difficulty, per dim.
    pub effective_difficulty_r: Vec<f64>,
    /// RMSE between predicted and generating probabilities.
    pub probability_rmse: f64,
    pub n_pairs: usize,
}

/// Compare aligned estimates against the truth. `pairs` restricts the
/// probability RMSE to specific (agent, item) cells — pass the complement
/// of the training set for a held-out figure — or all cells when `None`.
pub fn recovery_metrics(
    true_params: &CaimiraParams,
    est_params: &CaimiraParams,
    perm: &[usize],
    store: &EmbeddingStore,
    pairs: Option<&[(usize, usize)]>,
) -> Result<RecoveryReport> {
    let est = est_params.permute_dims(perm)?;
    let m = true_params.m;
    let n_items = store.len();

    let mut skill_r = Vec::with_capacity(m);
    for k in 0..m {
        skill_r.push(pearson(
            &true_params.agent_skills.column(k),
            &est.agent_skills.column(k),
        ));
    }

    let mut true_rel = Mat::zeros(n_items, m);
    let mut est_rel = Mat::zeros(n_items, m);
    let mut true_diff = Mat::zeros(n_items, m);
    let mut est_diff = Mat::zeros(n_items, m);
    for j in 0..n_items {
        let e = store.row(j);
        let tc = true_params.characteristics(e);
        let ec = est.characteristics(e);
        for k in 0..m {
            true_rel.set(j, k, tc.relevance[k]);
            est_rel.set(j, k, ec.relevance[k]);
            true_diff.set(j, k, tc.difficulty[k]);
            est_diff.set(j, k, ec.difficulty[k]);
        }
    }
    let mut difficulty_r = Vec::with_capacity(m);
    let mut relevance_r = Vec::with_capacity(m);
    let mut effective_difficulty_r = Vec::with_capacity(m);
    for k in 0..m {
        difficulty_r.push(pearson(&true_diff.column(k), &est_diff.column(k)));
        relevance_r.push(pearson(&true_rel.column(k), &est_rel.column(k)));
        let te: Vec<f64> = (0..n_items)
            .map(|j| true_rel.get(j, k) * true_diff.get(j, k))
            .collect();
        let ee: Vec<f64> = (0..n_items)
            .map(|j| est_rel.get(j, k) * est_diff.get(j, k))
            .collect();
        effective_difficulty_r.push(pearson(&te, &ee));
    }

    let mut sq_sum = 0.0;
    let n_pairs;
    match pairs {
        Some(list) => {
            n_pairs = list.len();
            for &(agent, item) in list {
                let pt = true_params.predict(agent, store.row(item))?;
                let pe = est.predict(agent, store.row(item))?;
                sq_sum += (pt - pe) * (pt - pe);
            }
        }
        None => {
            n_pairs = true_params.n_agents() * n_items;
            for agent in 0..true_params.n_agents() {
                for item in 0..n_items {
                    let pt = true_params.predict(agent, store.row(item))?;
                    let pe = est.predict(agent, store.row(item))?;
                    sq_sum += (pt - pe) * (pt - pe);
                }
            }
        }
    }
    let probability_rmse = if n_pairs == 0 {
        0.0
    } else {
        (sq_sum / n_pairs as f64).sqrt()
    };

    Ok(RecoveryReport {
        permutation: perm.to_vec(),
        skill_r,
        difficulty_r,
        relevance_r,
        effective_difficulty_r,
        probability_rmse,
        n_pairs,
    })
}

/// (agent, item) pairs NOT present in the matrix; the held-out complement
/// of the observed set.
pub fn unobserved_pairs(matrix: &ResponseMatrix) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for agent in 0..matrix.agents().len() {
        for item in 0..matrix.items().len() {
            if matrix.get(agent, item).is_none() {
                out.push((agent, item));
            }
        }
    }
    out
}
