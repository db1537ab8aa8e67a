//! `caimira analyze` and `caimira cluster`.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use caimira_core::analysis::{
    build_cluster_report, effective_difficulty, emit_reports, kmeans_cluster, ReportOptions,
    DEFAULT_CLUSTER_K,
};
use caimira_core::dataset::ResponseMatrix;
use caimira_core::embeddings::EmbeddingStore;
use caimira_core::irt::{Checkpoint, QuestionCharacteristics};
use caimira_core::{CoreError, Result};
use clap::Args;
use serde::Serialize;

use crate::config::{require_files, require_pair, FileConfig};
use crate::manifest::write_manifest;

#[derive(Args, Debug)]
pub struct AnalyzeArgs {
    /// Model checkpoint base path (without .json/.bin).
    #[arg(long)]
    model: PathBuf,
    /// Embedding store base path.
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// Response matrix CSV for accuracy slices.
    #[arg(long)]
    responses: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Cluster count.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// CSV agent_id,type mapping agents to slice groups.
    #[arg(long)]
    agent_types: Option<PathBuf>,
    /// CSV cluster,label with analyst-assigned cluster names.
    #[arg(long)]
    labels: Option<PathBuf>,
}

#[derive(Serialize)]
struct ResolvedAnalyze {
    k: usize,
    seed: u64,
}

fn load_agent_types(path: &Path) -> Result<HashMap<String, String>> {
    let mut rdr = csv::Reader::from_path(path)
        .map_err(|e| CoreError::Format(format!("{}: {e}", path.display())))?;
    let mut map = HashMap::new();
    for (idx, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| CoreError::Parse {
            line: idx + 2,
            msg: e.to_string(),
        })?;
        if record.len() < 2 {
            return Err(CoreError::Parse {
                line: idx + 2,
                msg: "expected agent_id,type".into(),
            });
        }
        map.insert(record[0].to_string(), record[1].to_string());
    }
    Ok(map)
}

fn load_labels(path: &Path) -> Result<HashMap<usize, String>> {
    let mut rdr = csv::Reader::from_path(path)
        .map_err(|e| CoreError::Format(format!("{}: {e}", path.display())))?;
    let mut map = HashMap::new();
    for (idx, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| CoreError::Parse {
            line: idx + 2,
            msg: e.to_string(),
        })?;
        let cluster: usize = record[0].parse().map_err(|_| CoreError::Parse {
            line: idx + 2,
            msg: format!("bad cluster id {:?}", &record[0]),
        })?;
        map.insert(cluster, record[1].to_string());
    }
    Ok(map)
}

pub fn run_analyze(args: AnalyzeArgs, file: &FileConfig, verify: bool) -> Result<()> {
    let embeddings = args
        .embeddings
        .or_else(|| file.paths.embeddings.clone())
        .ok_or_else(|| CoreError::Config("--embeddings is required".into()))?;
    let responses = args
        .responses
        .or_else(|| file.paths.responses.clone())
        .ok_or_else(|| CoreError::Config("--responses is required".into()))?;
    let out = args
        .out
        .or_else(|| file.paths.out.clone())
        .ok_or_else(|| CoreError::Config("--out is required".into()))?;
    require_pair("model", &args.model)?;
    require_pair("embeddings", &embeddings)?;
    require_files(&[("responses", &responses)])?;
    if let Some(p) = &args.agent_types {
        require_files(&[("agent-types", p)])?;
    }
    if let Some(p) = &args.labels {
        require_files(&[("labels", p)])?;
    }
    super::prepare_out_dir(&out, verify)?;

    let checkpoint = Checkpoint::load(&args.model)?;
    let store = EmbeddingStore::load(&embeddings)?;
    let matrix = ResponseMatrix::load_csv(&responses)?;
    if matrix.agents() != checkpoint.agent_ids.as_slice() {
        log::warn!(
            "matrix agents differ from the checkpoint roster ({} vs {})",
            matrix.agents().len(),
            checkpoint.agent_ids.len()
        );
    }

    let k = args.k.or(file.cluster.k).unwrap_or(DEFAULT_CLUSTER_K);
    let seed = args.seed.or(file.cluster.seed).unwrap_or(0);
    let opts = ReportOptions {
        k,
        seed,
        agent_types: match &args.agent_types {
            Some(p) => load_agent_types(p)?,
            None => HashMap::new(),
        },
        cluster_labels: match &args.labels {
            Some(p) => Some(load_labels(p)?),
            None => None,
        },
    };
    let files = emit_reports(
        &checkpoint.params,
        &checkpoint.agent_ids,
        &store,
        &matrix,
        &out,
        &opts,
    )?;
    log::info!("wrote {} report files to {}", files.len(), out.display());

    write_manifest(
        &out,
        "analyze",
        Some(seed),
        serde_json::to_value(ResolvedAnalyze { k, seed }).expect("config serializes"),
        &[
            ("model_manifest", &args.model.with_extension("json")),
            ("model_params", &args.model.with_extension("bin")),
            ("embeddings_header", &embeddings.with_extension("json")),
            ("embeddings_data", &embeddings.with_extension("bin")),
            ("responses", &responses),
        ],
    )?;
    Ok(())
}

#[derive(Args, Debug)]
pub struct ClusterArgs {
    /// Model checkpoint base path (without .json/.bin).
    #[arg(long)]
    model: PathBuf,
    /// Embedding store base path.
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Cluster count.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// CSV cluster,label with analyst-assigned cluster names.
    #[arg(long)]
    labels: Option<PathBuf>,
}

pub fn run_cluster(args: ClusterArgs, file: &FileConfig, verify: bool) -> Result<()> {
    let embeddings = args
        .embeddings
        .or_else(|| file.paths.embeddings.clone())
        .ok_or_else(|| CoreError::Config("--embeddings is required".into()))?;
    let out = args
        .out
        .or_else(|| file.paths.out.clone())
        .ok_or_else(|| CoreError::Config("--out is required".into()))?;
    require_pair("model", &args.model)?;
    require_pair("embeddings", &embeddings)?;
    if let Some(p) = &args.labels {
        require_files(&[("labels", p)])?;
    }
    super::prepare_out_dir(&out, verify)?;

    let checkpoint = Checkpoint::load(&args.model)?;
    let store = EmbeddingStore::load(&embeddings)?;
    let k = args.k.or(file.cluster.k).unwrap_or(DEFAULT_CLUSTER_K);
    let seed = args.seed.or(file.cluster.seed).unwrap_or(0);

    let chars: Vec<QuestionCharacteristics> = (0..store.len())
        .map(|j| checkpoint.params.characteristics(store.row(j)))
        .collect();
    let eff = effective_difficulty(&chars)?;
    let km = kmeans_cluster(&eff.values, k, seed)?;
    let labels = match &args.labels {
        Some(p) => Some(load_labels(p)?),
        None => None,
    };
    let report = build_cluster_report(store.ids(), &chars, &km.assignments, k, labels.as_ref())?;

    let mut assignments_csv = String::from("item,cluster\n");
    for (id, &c) in report.item_ids.iter().zip(&report.assignments) {
        assignments_csv.push_str(&format!("{id},{c}\n"));
    }
    let path = out.join("clusters.csv");
    std::fs::write(&path, assignments_csv).map_err(|e| CoreError::io(&path, e))?;

    let m = checkpoint.params.m;
    let mut summary = String::from("cluster,size,label,difficulty_rank,overall_difficulty");
    for kk in 0..m {
        summary.push_str(&format!(",mean_r_{}", kk + 1));
    }
    for kk in 0..m {
        summary.push_str(&format!(",mean_eff_d_{}", kk + 1));
    }
    summary.push('\n');
    for s in &report.summaries {
        summary.push_str(&format!(
            "{},{},{},{},{}",
            s.cluster,
            s.size,
            s.label.as_deref().unwrap_or(""),
            s.difficulty_rank,
            s.overall_difficulty
        ));
        for v in s.mean_relevance.iter().chain(&s.mean_effective_difficulty) {
            summary.push_str(&format!(",{v}"));
        }
        summary.push('\n');
    }
    let path = out.join("cluster_summary.csv");
    std::fs::write(&path, summary).map_err(|e| CoreError::io(&path, e))?;
    log::info!("wrote clusters for k={k} (wcss {})", km.wcss);

    write_manifest(
        &out,
        "cluster",
        Some(seed),
        serde_json::to_value(ResolvedAnalyze { k, seed }).expect("config serializes"),
        &[
            ("model_manifest", &args.model.with_extension("json")),
            ("model_params", &args.model.with_extension("bin")),
            ("embeddings_header", &embeddings.with_extension("json")),
            ("embeddings_data", &embeddings.with_extension("bin")),
        ],
    )?;
    Ok(())
}
