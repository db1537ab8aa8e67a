//! `caimira interpret` — explain each latent dimension with a
//! class-balanced logistic regression over question features.

use std::collections::HashMap;
use std::path::PathBuf;

use caimira_core::dataset::{expand_cumulative_items, load_question_bank, Item, Question};
use caimira_core::embeddings::EmbeddingStore;
use caimira_core::interpret::{
    extract_features, fit_logreg_balanced, interpretation_report, relevance_labels, standardize,
    wald_significance, ExternalFeatures, FeatureConfig, LogRegConfig, LogRegResult,
    DEFAULT_ALPHA, DEFAULT_LABEL_THRESHOLD,
};
use caimira_core::irt::{Checkpoint, QuestionCharacteristics};
use caimira_core::par::map_indexed;
use caimira_core::{CoreError, Result};
use clap::Args;
use serde::Serialize;

use crate::config::{require_files, require_pair, FileConfig};
use crate::manifest::write_manifest;

#[derive(Args, Debug)]
pub struct InterpretArgs {
    /// Model checkpoint base path (without .json/.bin).
    #[arg(long)]
    model: PathBuf,
    /// Embedding store base path.
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// Question bank (JSON lines) for feature extraction.
    #[arg(long)]
    bank: Option<PathBuf>,
    /// External numeric features CSV (item_id + named columns).
    #[arg(long)]
    features: Option<PathBuf>,
    /// Pattern config TOML overriding the built-in text patterns.
    #[arg(long)]
    patterns: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Relevance threshold defining the binary labels.
    #[arg(long)]
    threshold: Option<f64>,
    /// Significance level for reported features.
    #[arg(long)]
    alpha: Option<f64>,
}

#[derive(Serialize)]
struct ResolvedInterpret {
    threshold: f64,
    alpha: f64,
}

pub fn run(args: InterpretArgs, file: &FileConfig, verify: bool) -> Result<()> {
    let embeddings = args
        .embeddings
        .or_else(|| file.paths.embeddings.clone())
        .ok_or_else(|| CoreError::Config("--embeddings is required".into()))?;
    let bank_path = args
        .bank
        .or_else(|| file.paths.bank.clone())
        .ok_or_else(|| CoreError::Config("--bank is required".into()))?;
    let out = args
        .out
        .or_else(|| file.paths.out.clone())
        .ok_or_else(|| CoreError::Config("--out is required".into()))?;
    let features_path = args.features.or_else(|| file.paths.features.clone());
    require_pair("model", &args.model)?;
    require_pair("embeddings", &embeddings)?;
    require_files(&[("bank", &bank_path)])?;
    if let Some(p) = &features_path {
        require_files(&[("features", p)])?;
    }
    if let Some(p) = &args.patterns {
        require_files(&[("patterns", p)])?;
    }
    super::prepare_out_dir(&out, verify)?;

    let threshold = args
        .threshold
        .or(file.interpret.threshold)
        .unwrap_or(DEFAULT_LABEL_THRESHOLD);
    let alpha = args.alpha.or(file.interpret.alpha).unwrap_or(DEFAULT_ALPHA);

    let checkpoint = Checkpoint::load(&args.model)?;
    let store = EmbeddingStore::load(&embeddings)?;
    let bank = load_question_bank(&bank_path)?;
    let pattern_cfg = match &args.patterns {
        Some(p) => FeatureConfig::load(p)?,
        None => FeatureConfig::default(),
    };
    let external = match &features_path {
        Some(p) => ExternalFeatures::load_csv(p)?,
        None => ExternalFeatures::default(),
    };

    // items in store order, each paired with its question
    let mut by_id: HashMap<String, (Item, Question)> = HashMap::new();
    for q in bank.iter() {
        for item in expand_cumulative_items(q) {
            by_id.insert(item.item_id.clone(), (item, q.clone()));
        }
    }
    let items: Vec<(Item, Question)> = store
        .ids()
        .iter()
        .map(|id| {
            by_id
                .get(id)
                .cloned()
                .ok_or_else(|| CoreError::Integrity(format!("store item {id} not in bank")))
        })
        .collect::<Result<Vec<_>>>()?;

    let features = extract_features(&items, &external, &pattern_cfg)?;
    let standardized = standardize(&features)?;
    if !standardized.dropped.is_empty() {
        log::warn!("dropped constant features: {}", standardized.dropped.join(", "));
    }
    let chars: Vec<QuestionCharacteristics> = (0..store.len())
        .map(|j| checkpoint.params.characteristics(store.row(j)))
        .collect();

    // independent per-dimension fits run in parallel
    let m = checkpoint.params.m;
    let fits: Vec<Result<LogRegResult>> = map_indexed(m, |k| {
        let labels = relevance_labels(&chars, k, threshold)?;
        let mut result =
            fit_logreg_balanced(&standardized.values, &labels, &LogRegConfig::default())?;
        result.dimension = k;
        result.feature_names = standardized.names.clone();
        Ok(wald_significance(result))
    });
    let mut results = Vec::with_capacity(m);
    for (k, fit) in fits.into_iter().enumerate() {
        match fit {
            Ok(res) => results.push(res),
            // a dimension whose relevance never crosses the threshold has
            // one-class labels; report the rest rather than aborting
            Err(CoreError::Fit(msg)) => {
                log::warn!("dimension {k}: {msg}; skipped");
            }
            Err(other) => return Err(other),
        }
    }
    let files = interpretation_report(&results, alpha, &out)?;
    log::info!("wrote {} interpretation files", files.len());

    let model_json = args.model.with_extension("json");
    let model_bin = args.model.with_extension("bin");
    let emb_json = embeddings.with_extension("json");
    let emb_bin = embeddings.with_extension("bin");
    let mut inputs: Vec<(&str, &std::path::Path)> = vec![
        ("model_manifest", &model_json),
        ("model_params", &model_bin),
        ("embeddings_header", &emb_json),
        ("embeddings_data", &emb_bin),
        ("bank", &bank_path),
    ];
    if let Some(p) = &features_path {
        inputs.push(("features", p));
    }
    if let Some(p) = &args.patterns {
        inputs.push(("patterns", p));
    }
    write_manifest(
        &out,
        "interpret",
        None,
        serde_json::to_value(ResolvedInterpret { threshold, alpha }).expect("config serializes"),
        &inputs,
    )?;
    Ok(())
}
