//! `caimira ingest` — bank + logs → refined response matrix and per-item
//! embedding texts.

use std::path::PathBuf;

use caimira_core::dataset::{
    apply_groups, backfill, form_groups, load_player_logs, load_question_bank,
    map_player_responses, GroupSpec, MatchConfig,
};
use caimira_core::embeddings::assemble_embedding_text;
use caimira_core::{CoreError, Result};
use clap::Args;
use serde::Serialize;

use crate::config::{require_files, FileConfig};
use crate::manifest::write_manifest;

#[derive(Args, Debug)]
pub struct IngestArgs {
    /// Question bank (JSON lines).
    #[arg(long)]
    bank: Option<PathBuf>,
    /// Player logs (.csv with header, or JSON lines).
    #[arg(long)]
    logs: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Fuzzy-match threshold for unruled answers.
    #[arg(long)]
    threshold: Option<f64>,
    /// Pool players into grouped agents (majority vote).
    #[arg(long)]
    group: bool,
    /// Group sizes, e.g. 1,5,10,15.
    #[arg(long, value_delimiter = ',')]
    group_sizes: Option<Vec<usize>>,
    /// Number of groups per size.
    #[arg(long)]
    groups_per_size: Option<usize>,
    /// Seed for tie-break sampling in group votes.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Serialize)]
struct ResolvedIngest {
    threshold: f64,
    lowercase: bool,
    strip_punct: bool,
    strip_diacritics: bool,
    strip_articles: bool,
    group: bool,
    group_sizes: Vec<usize>,
    groups_per_size: usize,
    seed: u64,
}

pub fn run(args: IngestArgs, file: &FileConfig, verify: bool) -> Result<()> {
    let bank_path = args
        .bank
        .or_else(|| file.paths.bank.clone())
        .ok_or_else(|| CoreError::Config("--bank is required".into()))?;
    let logs_path = args
        .logs
        .or_else(|| file.paths.logs.clone())
        .ok_or_else(|| CoreError::Config("--logs is required".into()))?;
    let out = args
        .out
        .or_else(|| file.paths.out.clone())
        .ok_or_else(|| CoreError::Config("--out is required".into()))?;
    require_files(&[("bank", &bank_path), ("logs", &logs_path)])?;
    super::prepare_out_dir(&out, verify)?;

    let defaults = MatchConfig::default();
    let match_cfg = MatchConfig {
        threshold: args
            .threshold
            .or(file.matching.threshold)
            .unwrap_or(defaults.threshold),
        lowercase: file.matching.lowercase.unwrap_or(defaults.lowercase),
        strip_punct: file.matching.strip_punct.unwrap_or(defaults.strip_punct),
        strip_diacritics: file
            .matching
            .strip_diacritics
            .unwrap_or(defaults.strip_diacritics),
        strip_articles: file
            .matching
            .strip_articles
            .unwrap_or(defaults.strip_articles),
    };
    let group_defaults = GroupSpec::default();
    let spec = GroupSpec {
        sizes: args
            .group_sizes
            .clone()
            .or_else(|| file.groups.sizes.clone())
            .unwrap_or(group_defaults.sizes),
        groups_per_size: args
            .groups_per_size
            .or(file.groups.groups_per_size)
            .unwrap_or(group_defaults.groups_per_size),
        seed: args.seed.or(file.groups.seed).unwrap_or(group_defaults.seed),
    };

    let bank = load_question_bank(&bank_path)?;
    let logs = load_player_logs(&logs_path)?;
    log::info!("loaded {} questions, {} log records", bank.len(), logs.len());

    let observed = map_player_responses(&logs, &bank, &match_cfg)?;
    let refined = backfill(&observed, &bank)?;
    log::info!(
        "matrix: {} agents x {} items, {} observed -> {} refined entries",
        refined.agents().len(),
        refined.items().len(),
        observed.n_entries(),
        refined.n_entries()
    );

    let matrix = if args.group {
        let players: Vec<(String, std::collections::BTreeSet<usize>)> = observed
            .agents()
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), observed.answered_items(i).into_iter().collect()))
            .collect();
        let groups = form_groups(&players, &spec)?;
        log::info!("formed {} grouped agents", groups.len());
        apply_groups(&refined, &groups, spec.seed)?
    } else {
        refined
    };

    matrix.save_csv(&out.join("matrix.csv"))?;

    // per-item embedder inputs for the embed step or an external embedder
    let texts_path = out.join("embedding_texts.csv");
    {
        let mut w = csv::Writer::from_path(&texts_path)
            .map_err(|e| CoreError::Format(format!("{}: {e}", texts_path.display())))?;
        w.write_record(["item_id", "text"])
            .map_err(|e| CoreError::Format(e.to_string()))?;
        for q in bank.iter() {
            for item in caimira_core::dataset::expand_cumulative_items(q) {
                let text = assemble_embedding_text(&item, q);
                w.write_record([item.item_id.as_str(), text.as_str()])
                    .map_err(|e| CoreError::Format(e.to_string()))?;
            }
        }
        w.flush().map_err(|e| CoreError::Format(e.to_string()))?;
    }

    let resolved = ResolvedIngest {
        threshold: match_cfg.threshold,
        lowercase: match_cfg.lowercase,
        strip_punct: match_cfg.strip_punct,
        strip_diacritics: match_cfg.strip_diacritics,
        strip_articles: match_cfg.strip_articles,
        group: args.group,
        group_sizes: spec.sizes.clone(),
        groups_per_size: spec.groups_per_size,
        seed: spec.seed,
    };
    write_manifest(
        &out,
        "ingest",
        Some(resolved.seed),
        serde_json::to_value(&resolved).expect("config serializes"),
        &[("bank", &bank_path), ("logs", &logs_path)],
    )?;
    log::info!("wrote {}", out.join("matrix.csv").display());
    Ok(())
}
