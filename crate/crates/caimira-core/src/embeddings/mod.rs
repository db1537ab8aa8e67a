//! Embedding stores and the embedder-service client.
//!
//! Question embeddings are frozen inputs produced by an external sentence
//! embedder. They arrive either as a file pair (`<name>.json` header plus
//! `<name>.bin` row-major little-endian float32 data) or over HTTP from an
//! embedding service. The store also carries the dataset mean embedding,
//! which the difficulty transform needs for exact zero-centering.

mod client;

pub use client::EmbedClient;

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::{Item, Question};
use crate::error::{CoreError, Result};
use crate::linalg::Mat;

const SEP: &str = " [SEP] ";

/// Text fed to the embedder for one item: clue text, canonical answer, and
/// the answer's encyclopedia summary, separated by `" [SEP] "`. The summary
/// field is empty when absent.
pub fn assemble_embedding_text(item: &Item, q: &Question) -> String {
    let summary = q.wiki_summary.as_deref().unwrap_or("");
    format!("{}{SEP}{}{SEP}{}", item.text, q.answer, summary)
}

#[derive(Debug, Serialize, Deserialize)]
struct StoreHeader {
    version: u32,
    dim: usize,
    count: usize,
    ids: Vec<String>,
    dtype: String,
    order: String,
}

/// Immutable matrix of per-item embedding vectors plus the dataset mean.
///
/// Values are held as `f64` but always lie on the f32 grid, so writing the
/// store back to disk is lossless.
#[derive(Debug, Clone)]
pub struct EmbeddingStore {
    dim: usize,
    ids: Vec<String>,
    index: HashMap<String, usize>,
    data: Vec<f64>,
    mean: Vec<f64>,
}

impl EmbeddingStore {
    /// Build a store from f32 rows. Ids must be unique and every value
    /// finite; the mean embedding is computed once here.
    pub fn from_f32_rows(dim: usize, ids: Vec<String>, rows: &[f32]) -> Result<Self> {
        if rows.len() != ids.len() * dim {
            return Err(CoreError::Format(format!(
                "expected {} values for {} rows of dim {}, got {}",
                ids.len() * dim,
                ids.len(),
                dim,
                rows.len()
            )));
        }
        if rows.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::Data("non-finite embedding value".into()));
        }
        let mut index = HashMap::with_capacity(ids.len());
        for (i, id) in ids.iter().enumerate() {
            if index.insert(id.clone(), i).is_some() {
                return Err(CoreError::Integrity(format!("duplicate embedding id {id}")));
            }
        }
        let data: Vec<f64> = rows.iter().map(|&v| v as f64).collect();
        let mean = compute_mean(dim, ids.len(), &data);
        Ok(EmbeddingStore {
            dim,
            ids,
            index,
            data,
            mean,
        })
    }

    /// Build a store from f64 rows, rounding values to the f32 grid so the
    /// on-disk format is exact.
    pub fn from_f64_rows(dim: usize, ids: Vec<String>, rows: Vec<f64>) -> Result<Self> {
        let quantized: Vec<f32> = rows.iter().map(|&v| v as f32).collect();
        Self::from_f32_rows(dim, ids, &quantized)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    /// Rows for the requested ids, in request order.
    pub fn fetch(&self, ids: &[String]) -> Result<Mat> {
        let mut data = Vec::with_capacity(ids.len() * self.dim);
        for id in ids {
            let row = self
                .index_of(id)
                .ok_or_else(|| CoreError::Lookup(format!("unknown embedding id {id}")))?;
            data.extend_from_slice(self.row(row));
        }
        Mat::from_vec(ids.len(), self.dim, data)
    }

    fn paths(base: &Path) -> (PathBuf, PathBuf) {
        (base.with_extension("json"), base.with_extension("bin"))
    }

    /// Write the `<base>.json` + `<base>.bin` pair.
    pub fn save(&self, base: &Path) -> Result<()> {
        let (header_path, bin_path) = Self::paths(base);
        let header = StoreHeader {
            version: 1,
            dim: self.dim,
            count: self.ids.len(),
            ids: self.ids.clone(),
            dtype: "f32".into(),
            order: "little".into(),
        };
        let json = serde_json::to_string_pretty(&header).expect("header serializes");
        std::fs::write(&header_path, json).map_err(|e| CoreError::io(&header_path, e))?;
        let mut bytes = Vec::with_capacity(self.data.len() * 4);
        for &v in &self.data {
            bytes.extend_from_slice(&(v as f32).to_le_bytes());
        }
        std::fs::write(&bin_path, bytes).map_err(|e| CoreError::io(&bin_path, e))?;
        Ok(())
    }

    /// Load a `<base>.json` + `<base>.bin` pair.
    pub fn load(base: &Path) -> Result<Self> {
        let (header_path, bin_path) = Self::paths(base);
        let header_text =
            std::fs::read_to_string(&header_path).map_err(|e| CoreError::io(&header_path, e))?;
        let header: StoreHeader = serde_json::from_str(&header_text)
            .map_err(|e| CoreError::Format(format!("{}: {e}", header_path.display())))?;
        if header.version != 1 {
            return Err(CoreError::Format(format!(
                "unsupported store version {}",
                header.version
            )));
        }
        if header.dtype != "f32" || header.order != "little" {
            return Err(CoreError::Format(format!(
                "unsupported dtype/order {}/{}",
                header.dtype, header.order
            )));
        }
        if header.ids.len() != header.count {
            return Err(CoreError::Format(format!(
                "header declares {} ids but lists {}",
                header.count,
                header.ids.len()
            )));
        }
        let blob = std::fs::read(&bin_path).map_err(|e| CoreError::io(&bin_path, e))?;
        let expected = header.count * header.dim * 4;
        if blob.len() != expected {
            return Err(CoreError::Format(format!(
                "{}: expected {} bytes ({} x {} f32), got {}",
                bin_path.display(),
                expected,
                header.count,
                header.dim,
                blob.len()
            )));
        }
        let rows: Vec<f32> = blob
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Self::from_f32_rows(header.dim, header.ids, &rows)
    }
}

fn compute_mean(dim: usize, count: usize, data: &[f64]) -> Vec<f64> {
    let mut mean = vec![0.0; dim];
    if count == 0 {
        return mean;
    }
    for row in data.chunks_exact(dim) {
        for (m, &v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= count as f64;
    }
    mean
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn item(text: &str) -> Item {
        Item {
            item_id: "q1_1".into(),
            qid: "q1".into(),
            clue_count: 1,
            text: text.into(),
        }
    }

    fn question(answer: &str, summary: Option<&str>) -> Question {
        Question {
            qid: "q1".into(),
            clues: vec!["c".into()],
            answer: answer.into(),
            aliases: vec![],
            category: String::new(),
            subcategory: None,
            wiki_summary: summary.map(|s| s.to_string()),
        }
    }

    #[test]
    fn assemble_format() {
        let t = assemble_embedding_text(&item("T"), &question("A", Some("S")));
        assert_eq!(t, "T [SEP] A [SEP] S");
    }

    #[test]
    fn assemble_missing_summary() {
        let t = assemble_embedding_text(&item("T"), &question("A", None));
        assert_eq!(t, "T [SEP] A [SEP] ");
    }

    #[test]
    fn store_basic_shapes() {
        let rows: Vec<f32> = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let store =
            EmbeddingStore::from_f32_rows(3, vec!["a".into(), "b".into()], &rows).unwrap();
        assert_eq!(store.len(), 2);
        assert_eq!(store.row(1), &[4.0, 5.0, 6.0]);
        assert_eq!(store.mean(), &[2.5, 3.5, 4.5]);
    }

    #[test]
    fn store_rejects_short_blob() {
        let dir = tempfile::tempdir().unwrap();
        let base = dir.path().join("emb");
        let rows: Vec<f32> = vec![0.5; 6];
        let store =
            EmbeddingStore::from_f32_rows(3, vec!["a".into(), "b".into()], &rows).unwrap();
        store.save(&base).unwrap();
        // truncate the blob by one byte
        let bin = base.with_extension("bin");
        let mut bytes = std::fs::read(&bin).unwrap();
        bytes.pop();
        std::fs::write(&bin, bytes).unwrap();
        assert!(matches!(
            EmbeddingStore::load(&base),
            Err(CoreError::Format(_))
        ));
    }

    #[test]
    fn store_rejects_duplicate_ids_and_nonfinite() {
        let rows: Vec<f32> = vec![0.0; 4];
        assert!(matches!(
            EmbeddingStore::from_f32_rows(2, vec!["a".into(), "a".into()], &rows),
            Err(CoreError::Integrity(_))
        ));
        let bad = vec![0.0, f32::NAN, 0.0, 0.0];
        assert!(matches!(
            EmbeddingStore::from_f32_rows(2, vec!["a".into(), "b".into()], &bad),
            Err(CoreError::Data(_))
        ));
    }

    #[test]
    fn fetch_request_order_and_empty() {
        let rows: Vec<f32> = vec![1.0, 2.0, 3.0, 4.0];
        let store =
            EmbeddingStore::from_f32_rows(2, vec!["a".into(), "b".into()], &rows).unwrap();
        let m = store.fetch(&["b".into(), "a".into()]).unwrap();
        assert_eq!(m.row(0), &[3.0, 4.0]);
        assert_eq!(m.row(1), &[1.0, 2.0]);
        let empty = store.fetch(&[]).unwrap();
        assert_eq!(empty.rows(), 0);
        let err = store.fetch(&["zzz".into()]).unwrap_err();
        assert!(err.to_string().contains("zzz"));
    }

    #[test]
    fn mean_matches_recomputation() {
        let mut rng_state = 123u64;
        let mut next = || {
            rng_state = rng_state.wrapping_mul(6364136223846793005).wrapping_add(1);
            ((rng_state >> 33) as f32 / u32::MAX as f32) * 4.0 - 2.0
        };
        let dim = 7;
        let count = 31;
        let rows: Vec<f32> = (0..dim * count).map(|_| next()).collect();
        let ids: Vec<String> = (0..count).map(|i| format!("id{i}")).collect();
        let store = EmbeddingStore::from_f32_rows(dim, ids, &rows).unwrap();
        for k in 0..dim {
            let recomputed: f64 =
                (0..count).map(|i| store.row(i)[k]).sum::<f64>() / count as f64;
            assert!((recomputed - store.mean()[k]).abs() < 1e-6);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn save_load_roundtrip_is_bit_exact(
            dim in 1usize..6,
            count in 0usize..8,
            seed in 0u32..1000,
        ) {
            let mut state = seed as u64 + 1;
            let mut next = || {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
                f32::from_bits((0x3f00_0000u32) | ((state >> 40) as u32 & 0x007f_ffff))
            };
            let rows: Vec<f32> = (0..dim * count).map(|_| next()).collect();
            let ids: Vec<String> = (0..count).map(|i| format!("id{i}")).collect();
            let store = EmbeddingStore::from_f32_rows(dim, ids, &rows).unwrap();
            let dir = tempfile::tempdir().unwrap();
            let base = dir.path().join("store");
            store.save(&base).unwrap();
            let loaded = EmbeddingStore::load(&base).unwrap();
            prop_assert_eq!(loaded.dim(), store.dim());
            prop_assert_eq!(loaded.ids(), store.ids());
            for i in 0..count {
                for k in 0..dim {
                    prop_assert_eq!(loaded.row(i)[k].to_bits(), store.row(i)[k].to_bits());
                }
            }
        }

        #[test]
        fn assemble_splits_back_into_three_fields(
            t in "[^\\[\\]]{0,10}",
            a in "[^\\[\\]]{1,10}",
            s in "[^\\[\\]]{0,10}",
        ) {
            let text = assemble_embedding_text(&item(&t), &question(&a, Some(&s)));
            let parts: Vec<&str> = text.split(SEP).collect();
            prop_assert_eq!(parts.len(), 3);
            prop_assert_eq!(parts[0], t.as_str());
            prop_assert_eq!(parts[1], a.as_str());
            prop_assert_eq!(parts[2], s.as_str());
        }
    }
}
