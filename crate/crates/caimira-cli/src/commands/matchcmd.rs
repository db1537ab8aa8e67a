//! `caimira eval-match` — rule a file of predicted answers against the
//! bank's answers and aliases.

use std::collections::HashMap;
use std::path::PathBuf;

use caimira_core::dataset::{expand_cumulative_items, load_question_bank, rule_answer, MatchConfig};
use caimira_core::{CoreError, Result};
use clap::Args;
use serde::Serialize;

use crate::config::{require_files, FileConfig};
use crate::manifest::write_manifest;

#[derive(Args, Debug)]
pub struct EvalMatchArgs {
    /// Question bank (JSON lines).
    #[arg(long)]
    bank: Option<PathBuf>,
    /// Predictions CSV: agent_id,item_id,prediction (item_id may also be a
    /// bare question id).
    #[arg(long)]
    predictions: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Fuzzy-match threshold.
    #[arg(long)]
    threshold: Option<f64>,
}

#[derive(Serialize)]
struct ResolvedEvalMatch {
    threshold: f64,
}

pub fn run(args: EvalMatchArgs, file: &FileConfig, verify: bool) -> Result<()> {
    let bank_path = args
        .bank
        .or_else(|| file.paths.bank.clone())
        .ok_or_else(|| CoreError::Config("--bank is required".into()))?;
    let out = args
        .out
        .or_else(|| file.paths.out.clone())
        .ok_or_else(|| CoreError::Config("--out is required".into()))?;
    require_files(&[("bank", &bank_path), ("predictions", &args.predictions)])?;
    super::prepare_out_dir(&out, verify)?;

    let defaults = MatchConfig::default();
    let cfg = MatchConfig {
        threshold: args
            .threshold
            .or(file.matching.threshold)
            .unwrap_or(defaults.threshold),
        ..defaults
    };

    let bank = load_question_bank(&bank_path)?;
    let mut item_to_qid: HashMap<String, String> = HashMap::new();
    for q in bank.iter() {
        for item in expand_cumulative_items(q) {
            item_to_qid.insert(item.item_id, q.qid.clone());
        }
    }

    let mut rdr = csv::Reader::from_path(&args.predictions)
        .map_err(|e| CoreError::Format(format!("{}: {e}", args.predictions.display())))?;
    let mut out_csv = String::from("agent_id,item_id,similarity,correct\n");
    let mut n = 0usize;
    for (idx, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| CoreError::Parse {
            line: idx + 2,
            msg: e.to_string(),
        })?;
        if record.len() < 3 {
            return Err(CoreError::Parse {
                line: idx + 2,
                msg: "expected agent_id,item_id,prediction".into(),
            });
        }
        let (agent, item_id, prediction) = (&record[0], &record[1], &record[2]);
        let qid = item_to_qid
            .get(item_id)
            .map(|s| s.as_str())
            .or_else(|| bank.get(item_id).map(|q| q.qid.as_str()))
            .ok_or_else(|| {
                CoreError::Integrity(format!("line {}: unknown item {item_id}", idx + 2))
            })?;
        let question = bank.get(qid).expect("qid resolved above");
        let ruling = rule_answer(prediction, question, &cfg);
        out_csv.push_str(&format!(
            "{agent},{item_id},{},{}\n",
            ruling.similarity,
            u8::from(ruling.correct)
        ));
        n += 1;
    }
    let path = out.join("rulings.csv");
    std::fs::write(&path, out_csv).map_err(|e| CoreError::io(&path, e))?;
    log::info!("ruled {n} predictions at threshold {}", cfg.threshold);

    write_manifest(
        &out,
        "eval-match",
        None,
        serde_json::to_value(ResolvedEvalMatch {
            threshold: cfg.threshold,
        })
        .expect("config serializes"),
        &[("bank", &bank_path), ("predictions", &args.predictions)],
    )?;
    Ok(())
}
