//! `caimira synth` and `caimira recover`.

use std::path::PathBuf;

use caimira_core::dataset::{save_question_bank, ResponseMatrix};
use caimira_core::embeddings::EmbeddingStore;
use caimira_core::irt::Checkpoint;
use caimira_core::synth::{
    align_dimensions, generate_synthetic, recovery_metrics, unobserved_pairs, SynthConfig,
};
use caimira_core::{CoreError, Result};
use clap::Args;

use crate::config::{require_files, require_pair, FileConfig};
use crate::manifest::write_manifest;

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// JSON file with generator settings (flags override its fields).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    n_agents: Option<usize>,
    #[arg(long)]
    n_items: Option<usize>,
    #[arg(long)]
    m_true: Option<usize>,
    #[arg(long)]
    embed_dim: Option<usize>,
    /// Fraction of (agent, item) pairs observed.
    #[arg(long)]
    density: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

pub fn run_synth(args: SynthArgs, file: &FileConfig, verify: bool) -> Result<()> {
    let out = args
        .out
        .or_else(|| file.paths.out.clone())
        .ok_or_else(|| CoreError::Config("--out is required".into()))?;
    let mut cfg: SynthConfig = match &args.config {
        Some(path) => {
            require_files(&[("config", path)])?;
            let text = std::fs::read_to_string(path).map_err(|e| CoreError::io(path, e))?;
            serde_json::from_str(&text)
                .map_err(|e| CoreError::Config(format!("{}: {e}", path.display())))?
        }
        None => SynthConfig::default(),
    };
    if let Some(v) = args.n_agents {
        cfg.n_agents = v;
    }
    if let Some(v) = args.n_items {
        cfg.n_items = v;
    }
    if let Some(v) = args.m_true {
        cfg.m_true = v;
    }
    if let Some(v) = args.embed_dim {
        cfg.embed_dim = v;
    }
    if let Some(v) = args.density {
        cfg.density = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    super::prepare_out_dir(&out, verify)?;

    let data = generate_synthetic(&cfg)?;
    save_question_bank(&data.bank, &out.join("bank.jsonl"))?;
    data.store.save(&out.join("embeddings"))?;
    data.matrix.save_csv(&out.join("matrix.csv"))?;
    let truth = Checkpoint {
        params: data.true_params.clone(),
        agent_ids: data.matrix.agents().to_vec(),
        item_store_ref: "embeddings".into(),
    };
    truth.save(&out.join("truth"))?;
    log::info!(
        "synthetic dataset: {} agents x {} items, {} entries, m_true={}",
        cfg.n_agents,
        cfg.n_items,
        data.matrix.n_entries(),
        cfg.m_true
    );

    let inputs: Vec<(&str, &std::path::Path)> = match &args.config {
        Some(p) => vec![("config", p.as_path())],
        None => vec![],
    };
    write_manifest(
        &out,
        "synth",
        Some(cfg.seed),
        serde_json::to_value(&cfg).expect("config serializes"),
        &inputs,
    )?;
    Ok(())
}

#[derive(Args, Debug)]
pub struct RecoverArgs {
    /// Ground-truth checkpoint base path (written by `synth`).
    #[arg(long)]
    truth: PathBuf,
    /// Fitted checkpoint base path (written by `train`).
    #[arg(long)]
    model: PathBuf,
    /// Embedding store base path.
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// Training matrix; when given, probability RMSE is computed on the
    /// complement (held-out) pairs only.
    #[arg(long)]
    responses: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn run_recover(args: RecoverArgs, file: &FileConfig, verify: bool) -> Result<()> {
    let embeddings = args
        .embeddings
        .or_else(|| file.paths.embeddings.clone())
        .ok_or_else(|| CoreError::Config("--embeddings is required".into()))?;
    let out = args
        .out
        .or_else(|| file.paths.out.clone())
        .ok_or_else(|| CoreError::Config("--out is required".into()))?;
    require_pair("truth", &args.truth)?;
    require_pair("model", &args.model)?;
    require_pair("embeddings", &embeddings)?;
    let responses = args.responses.or_else(|| file.paths.responses.clone());
    if let Some(p) = &responses {
        require_files(&[("responses", p)])?;
    }
    super::prepare_out_dir(&out, verify)?;

    let truth = Checkpoint::load(&args.truth)?;
    let fitted = Checkpoint::load(&args.model)?;
    let store = EmbeddingStore::load(&embeddings)?;
    let holdout = match &responses {
        Some(p) => Some(unobserved_pairs(&ResponseMatrix::load_csv(p)?)),
        None => None,
    };
    let perm = align_dimensions(&truth.params, &fitted.params, &store)?;
    let report = recovery_metrics(
        &truth.params,
        &fitted.params,
        &perm,
        &store,
        holdout.as_deref(),
    )?;
    log::info!(
        "alignment {:?}; probability RMSE {} over {} pairs",
        report.permutation,
        report.probability_rmse,
        report.n_pairs
    );

    let json_path = out.join("recovery.json");
    let text = serde_json::to_string_pretty(&report).expect("report serializes");
    std::fs::write(&json_path, text).map_err(|e| CoreError::io(&json_path, e))?;

    let mut csv_out = String::from(
        "dimension,skill_r,difficulty_r,relevance_r,effective_difficulty_r\n",
    );
    for k in 0..report.skill_r.len() {
        csv_out.push_str(&format!(
            "{},{},{},{},{}\n",
            k,
            report.skill_r[k],
            report.difficulty_r[k],
            report.relevance_r[k],
            report.effective_difficulty_r[k]
        ));
    }
    let csv_path = out.join("recovery.csv");
    std::fs::write(&csv_path, csv_out).map_err(|e| CoreError::io(&csv_path, e))?;

    let truth_json = args.truth.with_extension("json");
    let truth_bin = args.truth.with_extension("bin");
    let model_json = args.model.with_extension("json");
    let model_bin = args.model.with_extension("bin");
    let emb_json = embeddings.with_extension("json");
    let emb_bin = embeddings.with_extension("bin");
    let mut inputs: Vec<(&str, &std::path::Path)> = vec![
        ("truth_manifest", &truth_json),
        ("truth_params", &truth_bin),
        ("model_manifest", &model_json),
        ("model_params", &model_bin),
        ("embeddings_header", &emb_json),
        ("embeddings_data", &emb_bin),
    ];
    if let Some(p) = &responses {
        inputs.push(("responses", p));
    }
    write_manifest(&out, "recover", None, serde_json::Value::Null, &inputs)?;
    Ok(())
}
