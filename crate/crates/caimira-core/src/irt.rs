//! Forward models and parameter containers.
//!
//! Three response models share one structure — the probability that agent i
//! answers item j correctly is a sigmoid of a skill/difficulty gap:
//!
//! - 1D IRT:    p = σ(s_i − d_j)
//! - MIRT:      p = σ(θ_iᵀ a_j − d_j), with discriminability a_j = exp(α_j)
//!   kept positive by construction
//! - CAIMIRA:   p = σ((s_i − d_j)ᵀ r_j), where relevance r_j and difficulty
//!   d_j are linear functions of the item's text embedding
//!
//! CAIMIRA has no per-item free parameters: everything about an item flows
//! through its embedding, so characteristics of unseen items are
//! well-defined (cold start). Difficulty is centered by subtracting the
//! dataset mean embedding inside the transform, which equals centering the
//! raw difficulties by their dataset mean, exactly, by linearity.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::linalg::{dot, quantize_f32_slice, Mat};

/// Numerically stable logistic sigmoid.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// In-place softmax with max-subtraction.
pub fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
}

/// Scalar-skill, scalar-difficulty parameters.
#[derive(Debug, Clone)]
pub struct Irt1dParams {
    pub skills: Vec<f64>,
    pub difficulties: Vec<f64>,
}

/// p = σ(s − d).
#[inline]
pub fn irt1d_predict(skill: f64, difficulty: f64) -> f64 {
    sigmoid(skill - difficulty)
}

/// MIRT baseline parameters. Discriminability is stored as logs so
/// exp(log_disc) is strictly positive without a constrained prior.
#[derive(Debug, Clone)]
pub struct MirtParams {
    /// n_a × m agent skills.
    pub skills: Mat,
    /// Per-item scalar difficulty.
    pub difficulties: Vec<f64>,
    /// n_q × m log-discriminability.
    pub log_disc: Mat,
}

/// p = σ(θᵀ exp(α) − d).
pub fn mirt_predict(theta: &[f64], difficulty: f64, log_disc: &[f64]) -> Result<f64> {
    if theta.len() != log_disc.len() {
        return Err(CoreError::Contract(format!(
            "skill dim {} != discriminability dim {}",
            theta.len(),
            log_disc.len()
        )));
    }
    let score: f64 = theta
        .iter()
        .zip(log_disc)
        .map(|(&t, &a)| t * a.exp())
        .sum();
    Ok(sigmoid(score - difficulty))
}

/// Relevance/difficulty pair for one item.
#[derive(Debug, Clone, PartialEq)]
pub struct QuestionCharacteristics {
    /// Probability distribution over the m latent dimensions.
    pub relevance: Vec<f64>,
    /// Zero-centered per-dimension difficulty.
    pub difficulty: Vec<f64>,
}

/// CAIMIRA parameters: agent skill matrix plus the two linear transforms
/// over item embeddings, and the dataset mean embedding they center with.
#[derive(Debug, Clone, PartialEq)]
pub struct CaimiraParams {
    /// Latent dimension count m.
    pub m: usize,
    /// Embedding dimension n.
    pub n: usize,
    /// n_a × m agent skills (one row per agent).
    pub agent_skills: Mat,
    /// m × n relevance transform.
    pub w_r: Mat,
    /// Length-m relevance bias.
    pub b_r: Vec<f64>,
    /// m × n difficulty transform (no bias: output is mean-centered).
    pub w_d: Mat,
    /// Length-n dataset mean embedding.
    pub mean_embedding: Vec<f64>,
}

impl CaimiraParams {
    pub fn n_agents(&self) -> usize {
        self.agent_skills.rows()
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(CoreError::Contract("m must be >= 1".into()));
        }
        let shape_ok = self.agent_skills.cols() == self.m
            && self.w_r.rows() == self.m
            && self.w_r.cols() == self.n
            && self.b_r.len() == self.m
            && self.w_d.rows() == self.m
            && self.w_d.cols() == self.n
            && self.mean_embedding.len() == self.n;
        if !shape_ok {
            return Err(CoreError::Contract("inconsistent parameter shapes".into()));
        }
        let finite = self.agent_skills.all_finite()
            && self.w_r.all_finite()
            && self.w_d.all_finite()
            && self.b_r.iter().all(|v| v.is_finite())
            && self.mean_embedding.iter().all(|v| v.is_finite());
        if !finite {
            return Err(CoreError::Data("non-finite parameter value".into()));
        }
        Ok(())
    }

    /// r_j = softmax(W_R e + b_R).
    pub fn relevance(&self, embedding: &[f64]) -> Vec<f64> {
        let mut r = self.w_r.matvec(embedding);
        for (ri, bi) in r.iter_mut().zip(&self.b_r) {
            *ri += bi;
        }
        softmax_in_place(&mut r);
        r
    }

    /// d_j = W_D (e − ē).
    pub fn difficulty(&self, embedding: &[f64]) -> Vec<f64> {
        let centered: Vec<f64> = embedding
            .iter()
            .zip(&self.mean_embedding)
            .map(|(&e, &m)| e - m)
            .collect();
        self.w_d.matvec(&centered)
    }

    pub fn characteristics(&self, embedding: &[f64]) -> QuestionCharacteristics {
        QuestionCharacteristics {
            relevance: self.relevance(embedding),
            difficulty: self.difficulty(embedding),
        }
    }

    /// Per-dimension gaps s_i − d_j before relevance weighting.
    pub fn latent_scores(&self, agent: usize, embedding: &[f64]) -> Result<Vec<f64>> {
        if agent >= self.n_agents() {
            return Err(CoreError::Contract(format!(
                "agent index {agent} out of range 0..{}",
                self.n_agents()
            )));
        }
        let d = self.difficulty(embedding);
        Ok(self
            .agent_skills
            .row(agent)
            .iter()
            .zip(&d)
            .map(|(&s, &dk)| s - dk)
            .collect())
    }

    /// p = σ((s_i − d_j)ᵀ r_j).
    pub fn predict(&self, agent: usize, embedding: &[f64]) -> Result<f64> {
        let gaps = self.latent_scores(agent, embedding)?;
        let r = self.relevance(embedding);
        Ok(sigmoid(dot(&gaps, &r)))
    }

    /// Round every parameter to the nearest f32 so that saving to the f32
    /// checkpoint format and loading back is the identity.
    pub fn quantize_f32(&mut self) {
        self.agent_skills.quantize_f32();
        self.w_r.quantize_f32();
        self.w_d.quantize_f32();
        quantize_f32_slice(&mut self.b_r);
        quantize_f32_slice(&mut self.mean_embedding);
    }

    /// Reorder latent dimensions: column k of the result is column
    /// `perm[k]` of the input (consistently across skills, W_R, b_R, W_D).
    pub fn permute_dims(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.m {
            return Err(CoreError::Contract("permutation length != m".into()));
        }
        let mut seen = vec![false; self.m];
        for &p in perm {
            if p >= self.m || seen[p] {
                return Err(CoreError::Contract("not a permutation".into()));
            }
            seen[p] = true;
        }
        let mut skills = Mat::zeros(self.agent_skills.rows(), self.m);
        for i in 0..self.agent_skills.rows() {
            for (k, &p) in perm.iter().enumerate() {
                skills.set(i, k, self.agent_skills.get(i, p));
            }
        }
        let mut w_r = Mat::zeros(self.m, self.n);
        let mut w_d = Mat::zeros(self.m, self.n);
        let mut b_r = vec![0.0; self.m];
        for (k, &p) in perm.iter().enumerate() {
            w_r.row_mut(k).copy_from_slice(self.w_r.row(p));
            w_d.row_mut(k).copy_from_slice(self.w_d.row(p));
            b_r[k] = self.b_r[p];
        }
        Ok(CaimiraParams {
            m: self.m,
            n: self.n,
            agent_skills: skills,
            w_r,
            b_r,
            w_d,
            mean_embedding: self.mean_embedding.clone(),
        })
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointManifest {
    version: u32,
    m: usize,
    n: usize,
    n_a: usize,
    agent_ids: Vec<String>,
    item_store_ref: String,
}

/// A trained model tied to its agent roster and embedding store.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub params: CaimiraParams,
    pub agent_ids: Vec<String>,
    /// Name or path of the embedding store the model was trained against.
    pub item_store_ref: String,
}

impl Checkpoint {
    fn paths(base: &Path) -> (PathBuf, PathBuf) {
        (base.with_extension("json"), base.with_extension("bin"))
    }

    /// Write `<base>.json` (manifest) and `<base>.bin` (little-endian f32
    /// blocks in order: agent_skills, W_R, b_R, W_D, mean_embedding).
    pub fn save(&self, base: &Path) -> Result<()> {
        if self.agent_ids.len() != self.params.n_agents() {
            return Err(CoreError::Contract(format!(
                "{} agent ids for {} skill rows",
                self.agent_ids.len(),
                self.params.n_agents()
            )));
        }
        let (manifest_path, bin_path) = Self::paths(base);
        let manifest = CheckpointManifest {
            version: 1,
            m: self.params.m,
            n: self.params.n,
            n_a: self.agent_ids.len(),
            agent_ids: self.agent_ids.clone(),
            item_store_ref: self.item_store_ref.clone(),
        };
        let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        std::fs::write(&manifest_path, json).map_err(|e| CoreError::io(&manifest_path, e))?;

        let p = &self.params;
        let blocks: [&[f64]; 5] = [
            p.agent_skills.as_slice(),
            p.w_r.as_slice(),
            &p.b_r,
            p.w_d.as_slice(),
            &p.mean_embedding,
        ];
        let total: usize = blocks.iter().map(|b| b.len()).sum();
        let mut bytes = Vec::with_capacity(total * 4);
        for block in blocks {
            for &v in block {
                bytes.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        std::fs::write(&bin_path, bytes).map_err(|e| CoreError::io(&bin_path, e))?;
        Ok(())
    }

    pub fn load(base: &Path) -> Result<Self> {
        let (manifest_path, bin_path) = Self::paths(base);
        let text =
            std::fs::read_to_string(&manifest_path).map_err(|e| CoreError::io(&manifest_path, e))?;
        let manifest: CheckpointManifest = serde_json::from_str(&text)
            .map_err(|e| CoreError::Format(format!("{}: {e}", manifest_path.display())))?;
        if manifest.version != 1 {
            return Err(CoreError::Format(format!(
                "unsupported checkpoint version {}",
                manifest.version
            )));
        }
        if manifest.agent_ids.len() != manifest.n_a {
            return Err(CoreError::Format(
                "manifest n_a does not match agent id list".into(),
            ));
        }
        let (m, n, n_a) = (manifest.m, manifest.n, manifest.n_a);
        let blob = std::fs::read(&bin_path).map_err(|e| CoreError::io(&bin_path, e))?;
        let counts = [n_a * m, m * n, m, m * n, n];
        let expected: usize = counts.iter().sum::<usize>() * 4;
        if blob.len() != expected {
            return Err(CoreError::Format(format!(
                "{}: expected {} bytes, got {}",
                bin_path.display(),
                expected,
                blob.len()
            )));
        }
        let mut values = blob
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64);
        let mut take = |count: usize| -> Vec<f64> { values.by_ref().take(count).collect() };
        let params = CaimiraParams {
            m,
            n,
            agent_skills: Mat::from_vec(n_a, m, take(counts[0]))?,
            w_r: Mat::from_vec(m, n, take(counts[1]))?,
            b_r: take(counts[2]),
            w_d: Mat::from_vec(m, n, take(counts[3]))?,
            mean_embedding: take(counts[4]),
        };
        params.validate()?;
        Ok(Checkpoint {
            params,
            agent_ids: manifest.agent_ids,
            item_store_ref: manifest.item_store_ref,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn irt1d_analytic_points() {
        assert_eq!(irt1d_predict(1.3, 1.3), 0.5);
        let p = irt1d_predict(3f64.ln(), 0.0);
        assert!((p - 0.75).abs() < 1e-12);
        assert!(irt1d_predict(1.0, 0.0) < irt1d_predict(2.0, 0.0));
    }

    #[test]
    fn mirt_zero_skills() {
        let p = mirt_predict(&[0.0, 0.0], 0.0, &[0.3, -0.1]).unwrap();
        assert_eq!(p, 0.5);
    }

    #[test]
    fn mirt_reduces_to_irt1d() {
        let p = mirt_predict(&[0.7], 0.4, &[0.0]).unwrap();
        assert_eq!(p, irt1d_predict(0.7, 0.4));
    }

    #[test]
    fn mirt_shape_mismatch() {
        assert!(matches!(
            mirt_predict(&[0.0], 0.0, &[0.0, 0.0]),
            Err(CoreError::Contract(_))
        ));
    }

    #[test]
    fn mirt_matches_scalar_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let m = rng.random_range(1..6);
            let theta: Vec<f64> = (0..m).map(|_| rng.random_range(-2.0..2.0)).collect();
            let alpha: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
            let d: f64 = rng.random_range(-2.0..2.0);
            let mut score = 0.0;
            for k in 0..m {
                score += theta[k] * alpha[k].exp();
            }
            let expect = sigmoid(score - d);
            let got = mirt_predict(&theta, d, &alpha).unwrap();
            assert!((got - expect).abs() < 1e-15);
        }
    }

    pub(crate) fn random_params(rng: &mut ChaCha8Rng, n_a: usize, m: usize, n: usize) -> CaimiraParams {
        let rnd = |rng: &mut ChaCha8Rng, len: usize, scale: f64| -> Vec<f64> {
            (0..len).map(|_| rng.random_range(-scale..scale)).collect()
        };
        let mean = rnd(rng, n, 0.5);
        CaimiraParams {
            m,
            n,
            agent_skills: Mat::from_vec(n_a, m, rnd(rng, n_a * m, 1.0)).unwrap(),
            w_r: Mat::from_vec(m, n, rnd(rng, m * n, 0.8)).unwrap(),
            b_r: rnd(rng, m, 0.5),
            w_d: Mat::from_vec(m, n, rnd(rng, m * n, 0.8)).unwrap(),
            mean_embedding: mean,
        }
    }

    #[test]
    fn relevance_uniform_for_zero_transform() {
        let m = 4;
        let params = CaimiraParams {
            m,
            n: 3,
            agent_skills: Mat::zeros(2, m),
            w_r: Mat::zeros(m, 3),
            b_r: vec![0.0; m],
            w_d: Mat::zeros(m, 3),
            mean_embedding: vec![0.0; 3],
        };
        let r = params.relevance(&[0.3, -0.4, 1.0]);
        for &v in &r {
            assert!((v - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn relevance_m1_is_exactly_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let params = random_params(&mut rng, 2, 1, 5);
        let e: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
        assert_eq!(params.relevance(&e), vec![1.0]);
    }

    #[test]
    fn relevance_shift_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut params = random_params(&mut rng, 2, 3, 4);
        let e: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let r1 = params.relevance(&e);
        // shifting every raw logit by a constant leaves softmax unchanged
        for k in 0..3 {
            params.b_r[k] += 7.25;
        }
        let r2 = params.relevance(&e);
        for (a, b) in r1.iter().zip(&r2) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn difficulty_centering_at_mean_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let params = random_params(&mut rng, 2, 3, 4);
        let d = params.difficulty(&params.mean_embedding.clone());
        for v in d {
            assert_eq!(v, 0.0);
        }
    }

    #[test]
    fn difficulty_two_path_equivalence() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let params = random_params(&mut rng, 2, 3, 8);
        for _ in 0..50 {
            let e: Vec<f64> = (0..8).map(|_| rng.random_range(-2.0..2.0)).collect();
            let d = params.difficulty(&e);
            let we = params.w_d.matvec(&e);
            let wm = params.w_d.matvec(&params.mean_embedding);
            for k in 0..3 {
                assert!((d[k] - (we[k] - wm[k])).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn predict_equal_skill_difficulty_gives_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut params = random_params(&mut rng, 1, 3, 4);
        let e: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let d = params.difficulty(&e);
        params.agent_skills.row_mut(0).copy_from_slice(&d);
        assert_eq!(params.predict(0, &e).unwrap(), 0.5);
    }

    #[test]
    fn predict_matches_scalar_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let params = random_params(&mut rng, 3, 4, 6);
        for _ in 0..200 {
            let agent = rng.random_range(0..3);
            let e: Vec<f64> = (0..6).map(|_| rng.random_range(-2.0..2.0)).collect();
            // independent scalar-loop recomputation
            let mut logits = vec![0.0; 4];
            for k in 0..4 {
                let mut acc = params.b_r[k];
                for (x, w) in e.iter().zip(params.w_r.row(k)) {
                    acc += w * x;
                }
                logits[k] = acc;
            }
            let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = logits.iter().map(|&v| (v - max).exp()).collect();
            let sum: f64 = exps.iter().sum();
            let mut z = 0.0;
            for k in 0..4 {
                let mut dk = 0.0;
                for idx in 0..6 {
                    dk += params.w_d.get(k, idx) * (e[idx] - params.mean_embedding[idx]);
                }
                z += (params.agent_skills.get(agent, k) - dk) * (exps[k] / sum);
            }
            let expect = 1.0 / (1.0 + (-z).exp());
            let got = params.predict(agent, &e).unwrap();
            assert!((got - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn latent_scores_consistency_and_irrelevant_dim() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut params = random_params(&mut rng, 2, 3, 4);
        let e: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let gaps = params.latent_scores(1, &e).unwrap();
        let r = params.relevance(&e);
        let p = sigmoid(dot(&gaps, &r));
        assert!((p - params.predict(1, &e).unwrap()).abs() < 1e-15);

        // Force relevance mass off dimension 2 via extreme logits, then
        // perturb that dimension's skill: prediction must not move.
        params.b_r = vec![40.0, 40.0, -40.0];
        let before = params.predict(1, &e).unwrap();
        let s = params.agent_skills.get(1, 2);
        params.agent_skills.set(1, 2, s + 5.0);
        let after = params.predict(1, &e).unwrap();
        assert!((before - after).abs() < 1e-9);
    }

    #[test]
    fn predict_out_of_range_agent() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let params = random_params(&mut rng, 2, 2, 3);
        assert!(matches!(
            params.predict(2, &[0.0, 0.0, 0.0]),
            Err(CoreError::Contract(_))
        ));
    }

    #[test]
    fn permute_dims_preserves_predictions() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let params = random_params(&mut rng, 3, 4, 5);
        let perm = vec![2, 0, 3, 1];
        let permuted = params.permute_dims(&perm).unwrap();
        for _ in 0..100 {
            let agent = rng.random_range(0..3);
            let e: Vec<f64> = (0..5).map(|_| rng.random_range(-2.0..2.0)).collect();
            let a = params.predict(agent, &e).unwrap();
            let b = permuted.predict(agent, &e).unwrap();
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn checkpoint_roundtrip_preserves_quantized_params() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut params = random_params(&mut rng, 3, 2, 4);
        params.quantize_f32();
        let ck = Checkpoint {
            params: params.clone(),
            agent_ids: vec!["a0".into(), "a1".into(), "a2".into()],
            item_store_ref: "store".into(),
        };
        let dir = tempfile::tempdir().unwrap();
        let base = dir.path().join("model");
        ck.save(&base).unwrap();
        let loaded = Checkpoint::load(&base).unwrap();
        assert_eq!(loaded.params, params);
        assert_eq!(loaded.agent_ids, ck.agent_ids);
        // predictions bit-for-bit
        for _ in 0..100 {
            let e: Vec<f64> = (0..4)
                .map(|_| rng.random_range(-2.0..2.0) as f32 as f64)
                .collect();
            let p1 = params.predict(1, &e).unwrap();
            let p2 = loaded.params.predict(1, &e).unwrap();
            assert_eq!(p1.to_bits(), p2.to_bits());
        }
    }
}
