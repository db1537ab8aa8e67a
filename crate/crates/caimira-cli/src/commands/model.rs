//! `caimira train` and `caimira ablate`.

use std::path::{Path, PathBuf};

use caimira_core::dataset::ResponseMatrix;
use caimira_core::embeddings::EmbeddingStore;
use caimira_core::irt::Checkpoint;
use caimira_core::training::{ablate_dimensions, train, TrainConfig};
use caimira_core::{CoreError, Result};
use clap::Args;

use crate::config::{require_files, require_pair, FileConfig};
use crate::manifest::write_manifest;

#[derive(Args, Debug, Clone)]
pub struct TrainArgs {
    /// Question bank (JSON lines); not needed for fitting, but validated
    /// and recorded in the manifest when given.
    #[arg(long)]
    bank: Option<PathBuf>,
    /// Response matrix CSV (agent_id,item_id,value,origin).
    #[arg(long)]
    responses: Option<PathBuf>,
    /// Embedding store base path (without .json/.bin).
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Latent dimension count.
    #[arg(long)]
    m: Option<usize>,
    /// Adam learning rate.
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Sets both L1 strengths at once.
    #[arg(long)]
    lambda: Option<f64>,
    /// L1 strength on per-item difficulties (overrides --lambda).
    #[arg(long)]
    lambda_d: Option<f64>,
    /// L1 strength on agent skills (overrides --lambda).
    #[arg(long)]
    lambda_s: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Fraction of entries held out for validation, stratified by agent.
    #[arg(long)]
    val_fraction: Option<f64>,
    /// Early-stopping patience in epochs.
    #[arg(long)]
    patience: Option<usize>,
}

pub(crate) struct TrainInputs {
    pub responses: PathBuf,
    pub embeddings: PathBuf,
    pub out: PathBuf,
    pub cfg: TrainConfig,
}

pub(crate) fn resolve_train(args: &TrainArgs, file: &FileConfig) -> Result<TrainInputs> {
    let responses = args
        .responses
        .clone()
        .or_else(|| file.paths.responses.clone())
        .ok_or_else(|| CoreError::Config("--responses is required".into()))?;
    let embeddings = args
        .embeddings
        .clone()
        .or_else(|| file.paths.embeddings.clone())
        .ok_or_else(|| CoreError::Config("--embeddings is required".into()))?;
    let out = args
        .out
        .clone()
        .or_else(|| file.paths.out.clone())
        .ok_or_else(|| CoreError::Config("--out is required".into()))?;
    let d = TrainConfig::default();
    let lambda_file = file.train.lambda;
    let cfg = TrainConfig {
        m: args.m.or(file.train.m).unwrap_or(d.m),
        learning_rate: args
            .lr
            .or(file.train.learning_rate)
            .unwrap_or(d.learning_rate),
        batch_size: args.batch_size.or(file.train.batch_size).unwrap_or(d.batch_size),
        lambda_d: args
            .lambda_d
            .or(args.lambda)
            .or(file.train.lambda_d)
            .or(lambda_file)
            .unwrap_or(d.lambda_d),
        lambda_s: args
            .lambda_s
            .or(args.lambda)
            .or(file.train.lambda_s)
            .or(lambda_file)
            .unwrap_or(d.lambda_s),
        epochs: args.epochs.or(file.train.epochs).unwrap_or(d.epochs),
        seed: args.seed.or(file.train.seed).unwrap_or(d.seed),
        validation_fraction: args
            .val_fraction
            .or(file.train.validation_fraction)
            .unwrap_or(d.validation_fraction),
        early_stop_patience: args
            .patience
            .or(file.train.early_stop_patience)
            .unwrap_or(d.early_stop_patience),
    };
    Ok(TrainInputs {
        responses,
        embeddings,
        out,
        cfg,
    })
}

pub(crate) fn load_matrix_and_store(
    responses: &Path,
    embeddings: &Path,
) -> Result<(ResponseMatrix, EmbeddingStore)> {
    let matrix = ResponseMatrix::load_csv(responses)?;
    let store = EmbeddingStore::load(embeddings)?;
    Ok((matrix, store))
}

pub fn run_train(args: TrainArgs, file: &FileConfig, verify: bool) -> Result<()> {
    let inputs = resolve_train(&args, file)?;
    require_files(&[("responses", &inputs.responses)])?;
    require_pair("embeddings", &inputs.embeddings)?;
    let bank = args.bank.clone().or_else(|| file.paths.bank.clone());
    if let Some(b) = &bank {
        require_files(&[("bank", b)])?;
        caimira_core::dataset::load_question_bank(b)?;
    }
    super::prepare_out_dir(&inputs.out, verify)?;

    let (matrix, store) = load_matrix_and_store(&inputs.responses, &inputs.embeddings)?;
    log::info!(
        "training m={} on {} entries ({} agents x {} items)",
        inputs.cfg.m,
        matrix.n_entries(),
        matrix.agents().len(),
        matrix.items().len()
    );
    let fitted = train(&matrix, &store, &inputs.cfg)?;
    log::info!(
        "finished after {} epochs; best epoch {} (val loss {})",
        fitted.history.len(),
        fitted.best_epoch,
        fitted.best_val_loss()
    );

    let checkpoint = Checkpoint {
        params: fitted.params.clone(),
        agent_ids: matrix.agents().to_vec(),
        item_store_ref: inputs.embeddings.display().to_string(),
    };
    checkpoint.save(&inputs.out.join("model"))?;

    let mut history = String::from("epoch,train_loss,val_loss\n");
    for stats in &fitted.history {
        history.push_str(&format!(
            "{},{},{}\n",
            stats.epoch, stats.train_loss, stats.val_loss
        ));
    }
    let history_path = inputs.out.join("history.csv");
    std::fs::write(&history_path, history).map_err(|e| CoreError::io(&history_path, e))?;

    let emb_json = inputs.embeddings.with_extension("json");
    let emb_bin = inputs.embeddings.with_extension("bin");
    let mut manifest_inputs: Vec<(&str, &Path)> = vec![
        ("responses", &inputs.responses),
        ("embeddings_header", &emb_json),
        ("embeddings_data", &emb_bin),
    ];
    if let Some(b) = &bank {
        manifest_inputs.push(("bank", b));
    }
    write_manifest(
        &inputs.out,
        "train",
        Some(inputs.cfg.seed),
        serde_json::to_value(&inputs.cfg).expect("config serializes"),
        &manifest_inputs,
    )?;
    Ok(())
}

#[derive(Args, Debug)]
pub struct AblateArgs {
    #[command(flatten)]
    train: TrainArgs,
    /// Latent dimension counts to sweep, e.g. 1,2,3,5,8.
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,5,8")]
    m_list: Vec<usize>,
}

pub fn run_ablate(args: AblateArgs, file: &FileConfig, verify: bool) -> Result<()> {
    if args.m_list.is_empty() {
        return Err(CoreError::Config("--m-list must be non-empty".into()));
    }
    let inputs = resolve_train(&args.train, file)?;
    require_files(&[("responses", &inputs.responses)])?;
    require_pair("embeddings", &inputs.embeddings)?;
    super::prepare_out_dir(&inputs.out, verify)?;

    let (matrix, store) = load_matrix_and_store(&inputs.responses, &inputs.embeddings)?;
    let rows = ablate_dimensions(&matrix, &store, &inputs.cfg, &args.m_list)?;
    let mut table = String::from("m,best_val_loss\n");
    for row in &rows {
        table.push_str(&format!("{},{}\n", row.m, row.best_val_loss));
        log::info!("m={}: best validation loss {}", row.m, row.best_val_loss);
    }
    let path = inputs.out.join("ablation.csv");
    std::fs::write(&path, table).map_err(|e| CoreError::io(&path, e))?;

    let mut config = serde_json::to_value(&inputs.cfg).expect("config serializes");
    config["m_list"] = serde_json::to_value(&args.m_list).expect("list serializes");
    write_manifest(
        &inputs.out,
        "ablate",
        Some(inputs.cfg.seed),
        config,
        &[
            ("responses", &inputs.responses),
            ("embeddings_header", &inputs.embeddings.with_extension("json")),
            ("embeddings_data", &inputs.embeddings.with_extension("bin")),
        ],
    )?;
    Ok(())
}
