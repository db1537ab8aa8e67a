//! Latent-trait modeling of question-answering agents.
//!
//! This crate fits item-response models to binary correctness logs of humans
//! and automated QA systems answering multi-clue trivia questions. Three
//! forward models are provided: classic one-dimensional IRT, a MIRT baseline
//! with positive discriminability, and CAIMIRA, a content-aware model whose
//! per-question relevance and difficulty are linear functions of a frozen
//! text embedding. Parameters are fit by MAP estimation (cross-entropy plus
//! L1 priors) with Adam.
//!
//! The crate is organized by pipeline stage:
//!
//! - [`dataset`]: question banks, cumulative-clue items, fuzzy answer ruling,
//!   sparse response matrices, backfilling, grouped human agents.
//! - [`embeddings`]: on-disk embedding stores and an embedder service client.
//! - [`irt`]: forward models and parameter containers, checkpoint I/O.
//! - [`training`]: MAP objective, analytic gradients, Adam, the training
//!   loop, dimension ablation, and a finite-difference harness.
//! - [`analysis`]: effective-difficulty clustering and accuracy slicing.
//! - [`interpret`]: feature extraction and class-balanced logistic-regression
//!   explanations of the latent dimensions.
//! - [`synth`]: synthetic ground-truth generation and recovery metrics.
//!
//! Hot inner loops (batch loss/gradients, KMeans restarts) are data-parallel
//! via rayon when the default `parallel` feature is enabled, and fall back to
//! sequential execution without it. Both paths reduce in a fixed chunk order,
//! so results are bitwise identical regardless of thread count.

pub mod analysis;
pub mod dataset;
pub mod embeddings;
pub mod error;
pub mod interpret;
pub mod irt;
pub mod linalg;
pub mod par;
pub mod synth;
pub mod training;

pub use error::{CoreError, Result};
