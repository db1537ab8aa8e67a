//! `caimira embed` — fetch vectors for item texts from an embedding
//! service and write an embedding store.

use std::path::PathBuf;

use caimira_core::embeddings::{EmbedClient, EmbeddingStore};
use caimira_core::{CoreError, Result};
use clap::Args;
use serde::Serialize;

use crate::config::{env_embed_url, require_files, FileConfig};
use crate::manifest::write_manifest;

#[derive(Args, Debug)]
pub struct EmbedArgs {
    /// CSV of item_id,text rows (as written by `ingest`).
    #[arg(long)]
    texts: PathBuf,
    /// Output directory; the store is written as embeddings.json/.bin.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Embedding service URL (or CAIMIRA_EMBED_URL).
    #[arg(long)]
    endpoint: Option<String>,
    /// Texts per request.
    #[arg(long)]
    batch_size: Option<usize>,
}

#[derive(Serialize)]
struct ResolvedEmbed {
    endpoint: String,
    batch_size: usize,
}

pub fn run(args: EmbedArgs, file: &FileConfig, verify: bool) -> Result<()> {
    let out = args
        .out
        .or_else(|| file.paths.out.clone())
        .ok_or_else(|| CoreError::Config("--out is required".into()))?;
    let endpoint = args
        .endpoint
        .or_else(env_embed_url)
        .or_else(|| file.embed.url.clone())
        .ok_or_else(|| {
            CoreError::Config("no embedding endpoint (use --endpoint or CAIMIRA_EMBED_URL)".into())
        })?;
    let batch_size = args.batch_size.or(file.embed.batch_size).unwrap_or(32);
    require_files(&[("texts", &args.texts)])?;
    super::prepare_out_dir(&out, verify)?;

    let mut ids = Vec::new();
    let mut texts = Vec::new();
    {
        let mut rdr = csv::Reader::from_path(&args.texts)
            .map_err(|e| CoreError::Format(format!("{}: {e}", args.texts.display())))?;
        for (idx, record) in rdr.records().enumerate() {
            let record = record.map_err(|e| CoreError::Parse {
                line: idx + 2,
                msg: e.to_string(),
            })?;
            if record.len() < 2 {
                return Err(CoreError::Parse {
                    line: idx + 2,
                    msg: "expected item_id,text".into(),
                });
            }
            ids.push(record[0].to_string());
            texts.push(record[1].to_string());
        }
    }
    log::info!("embedding {} texts via {endpoint}", texts.len());

    let client = EmbedClient::new(&endpoint).with_batch_size(batch_size);
    let vectors = client.request_embeddings(&texts)?;
    let dim = vectors.first().map(|v| v.len()).unwrap_or(0);
    let flat: Vec<f32> = vectors.into_iter().flatten().collect();
    let store = EmbeddingStore::from_f32_rows(dim, ids, &flat)?;
    let base = out.join("embeddings");
    store.save(&base)?;

    let resolved = ResolvedEmbed {
        endpoint,
        batch_size,
    };
    write_manifest(
        &out,
        "embed",
        None,
        serde_json::to_value(&resolved).expect("config serializes"),
        &[("texts", &args.texts)],
    )?;
    log::info!("wrote {} ({} x {dim})", base.display(), store.len());
    Ok(())
}
