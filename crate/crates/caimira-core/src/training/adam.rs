//! Adam optimizer over the four trainable parameter blocks.

use crate::error::{CoreError, Result};
use crate::irt::CaimiraParams;
use crate::linalg::Mat;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

/// Gradients (or moment accumulators) mirroring the trainable blocks of
/// [`CaimiraParams`]. The mean embedding is frozen and has no block here.
#[derive(Debug, Clone)]
pub struct GradBlocks {
    pub agent_skills: Mat,
    pub w_r: Mat,
    pub b_r: Vec<f64>,
    pub w_d: Mat,
}

impl GradBlocks {
    pub fn zeros_like(params: &CaimiraParams) -> Self {
        GradBlocks {
            agent_skills: Mat::zeros(params.agent_skills.rows(), params.agent_skills.cols()),
            w_r: Mat::zeros(params.w_r.rows(), params.w_r.cols()),
            b_r: vec![0.0; params.b_r.len()],
            w_d: Mat::zeros(params.w_d.rows(), params.w_d.cols()),
        }
    }

    pub fn add_assign(&mut self, other: &GradBlocks) {
        self.agent_skills.add_assign(&other.agent_skills);
        self.w_r.add_assign(&other.w_r);
        for (a, b) in self.b_r.iter_mut().zip(&other.b_r) {
            *a += b;
        }
        self.w_d.add_assign(&other.w_d);
    }

    pub fn scale(&mut self, factor: f64) {
        for block in self.blocks_mut() {
            for v in block {
                *v *= factor;
            }
        }
    }

    /// Euclidean norm over all blocks.
    pub fn norm(&self) -> f64 {
        self.blocks()
            .iter()
            .flat_map(|b| b.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    /// First non-finite coordinate as (block name, index), if any.
    pub fn first_non_finite(&self) -> Option<(&'static str, usize)> {
        for (name, block) in self.named_blocks() {
            if let Some(idx) = block.iter().position(|v| !v.is_finite()) {
                return Some((name, idx));
            }
        }
        None
    }

    pub fn flat_get(&self, coord: usize) -> f64 {
        let mut offset = 0;
        for block in self.blocks() {
            if coord < offset + block.len() {
                return block[coord - offset];
            }
            offset += block.len();
        }
        panic!("coordinate {coord} out of range");
    }

    fn blocks(&self) -> [&[f64]; 4] {
        [
            self.agent_skills.as_slice(),
            self.w_r.as_slice(),
            &self.b_r,
            self.w_d.as_slice(),
        ]
    }

    fn named_blocks(&self) -> [(&'static str, &[f64]); 4] {
        [
            ("agent_skills", self.agent_skills.as_slice()),
            ("w_r", self.w_r.as_slice()),
            ("b_r", &self.b_r),
            ("w_d", self.w_d.as_slice()),
        ]
    }

    fn blocks_mut(&mut self) -> [&mut [f64]; 4] {
        [
            self.agent_skills.as_mut_slice(),
            self.w_r.as_mut_slice(),
            &mut self.b_r,
            self.w_d.as_mut_slice(),
        ]
    }
}

/// Bias-corrected first/second moment accumulators plus the step counter.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub step: u64,
    m: GradBlocks,
    v: GradBlocks,
}

impl AdamState {
    pub fn new(params: &CaimiraParams) -> Self {
        AdamState {
            step: 0,
            m: GradBlocks::zeros_like(params),
            v: GradBlocks::zeros_like(params),
        }
    }
}

/// One bias-corrected Adam update, applied in place. Rejects non-finite
/// gradients with a diagnostic naming the offending block.
pub fn adam_step(
    state: &mut AdamState,
    params: &mut CaimiraParams,
    grads: &GradBlocks,
    lr: f64,
) -> Result<()> {
    if let Some((block, idx)) = grads.first_non_finite() {
        return Err(CoreError::Training(format!(
            "non-finite gradient in block {block} at flat index {idx} (step {})",
            state.step + 1
        )));
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - ADAM_BETA1.powi(t);
    let bc2 = 1.0 - ADAM_BETA2.powi(t);

    let param_blocks: [&mut [f64]; 4] = [
        params.agent_skills.as_mut_slice(),
        params.w_r.as_mut_slice(),
        &mut params.b_r,
        params.w_d.as_mut_slice(),
    ];
    let grad_blocks: [&[f64]; 4] = [
        grads.agent_skills.as_slice(),
        grads.w_r.as_slice(),
        &grads.b_r,
        grads.w_d.as_slice(),
    ];
    let m_blocks: [&mut [f64]; 4] = [
        state.m.agent_skills.as_mut_slice(),
        state.m.w_r.as_mut_slice(),
        &mut state.m.b_r,
        state.m.w_d.as_mut_slice(),
    ];
    let v_blocks: [&mut [f64]; 4] = [
        state.v.agent_skills.as_mut_slice(),
        state.v.w_r.as_mut_slice(),
        &mut state.v.b_r,
        state.v.w_d.as_mut_slice(),
    ];

    for (((p, g), m), v) in param_blocks
        .into_iter()
        .zip(grad_blocks)
        .zip(m_blocks)
        .zip(v_blocks)
    {
        debug_assert_eq!(p.len(), g.len());
        for i in 0..p.len() {
            m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g[i];
            v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g[i] * g[i];
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            p[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPSILON);
        }
    }
    Ok(())
}
