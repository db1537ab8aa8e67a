//! Post-hoc interpretation of the latent dimensions.
//!
//! For each latent dimension k, a logistic regression predicts the binary
//! label "relevance r_{j,k} > 0.6" from interpretable question features:
//! category/subcategory one-hots, regex-derived temporal and superlative
//! flags, clue counts, and externally computed numeric features (linguistic
//! properties, wiki match scores) joined by item id. Classes are balanced
//! with inverse-frequency sample weights so chance accuracy stays at 50%,
//! and coefficients are tested with Wald statistics.

mod logreg;

pub use logreg::{
    fit_logreg_balanced, fit_logreg_weighted, normal_sf, two_sided_p, wald_significance,
    LogRegConfig, LogRegResult, WaldStat,
};

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};

use regex::RegexSet;
use serde::Deserialize;

use crate::dataset::{Item, Question};
use crate::error::{CoreError, Result};
use crate::irt::QuestionCharacteristics;
use crate::linalg::Mat;

/// Relevance threshold defining the per-dimension binary labels.
pub const DEFAULT_LABEL_THRESHOLD: f64 = 0.6;

/// Significance level for reporting features.
pub const DEFAULT_ALPHA: f64 = 0.05;

/// Regex patterns for text-derived flags, loaded from a reviewable TOML
/// file (a built-in default ships with the crate).
#[derive(Debug, Clone, Deserialize)]
pub struct FeatureConfig {
    /// Flag name → regex list; flag is 1 when any pattern matches.
    pub temporal: BTreeMap<String, Vec<String>>,
    pub records: RecordPatterns,
    pub trash: TrashCategories,
}

#[derive(Debug, Clone, Deserialize)]
pub struct RecordPatterns {
    pub patterns: Vec<String>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct TrashCategories {
    pub categories: Vec<String>,
}

const DEFAULT_PATTERNS: &str = include_str!("patterns.toml");

impl Default for FeatureConfig {
    fn default() -> Self {
        toml::from_str(DEFAULT_PATTERNS).expect("built-in patterns parse")
    }
}

impl FeatureConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CoreError::io(path, e))?;
        toml::from_str(&text).map_err(|e| CoreError::Format(format!("{}: {e}", path.display())))
    }

    fn compile(&self) -> Result<CompiledPatterns> {
        let case_insensitive = |patterns: &[String]| -> Result<RegexSet> {
            let wrapped: Vec<String> = patterns.iter().map(|p| format!("(?i){p}")).collect();
            RegexSet::new(&wrapped).map_err(|e| CoreError::Config(format!("bad pattern: {e}")))
        };
        let temporal = self
            .temporal
            .iter()
            .map(|(name, pats)| Ok((name.clone(), case_insensitive(pats)?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(CompiledPatterns {
            temporal,
            records: case_insensitive(&self.records.patterns)?,
            trash: self
                .trash
                .categories
                .iter()
                .map(|c| c.to_lowercase())
                .collect(),
        })
    }
}

struct CompiledPatterns {
    temporal: Vec<(String, RegexSet)>,
    records: RegexSet,
    trash: Vec<String>,
}

/// Whether a column holds a 0/1 flag or a real value; standardization
/// scales only numeric columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureKind {
    Binary,
    Numeric,
}

/// Item × feature matrix with missingness tracked per cell.
#[derive(Debug, Clone)]
pub struct FeatureMatrix {
    pub item_ids: Vec<String>,
    pub names: Vec<String>,
    pub kinds: Vec<FeatureKind>,
    pub values: Mat,
    /// Parallel to `values`, true where the value is missing.
    pub missing: Vec<bool>,
}

/// Externally computed numeric features keyed by item id (first CSV column
/// is `item_id`, the rest are named features). Empty cells are missing.
#[derive(Debug, Clone, Default)]
pub struct ExternalFeatures {
    pub columns: Vec<String>,
    pub rows: HashMap<String, Vec<Option<f64>>>,
}

impl ExternalFeatures {
    pub fn load_csv(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| CoreError::io(path, e))?;
        let mut rdr = csv::Reader::from_reader(std::io::BufReader::new(file));
        let headers = rdr
            .headers()
            .map_err(|e| CoreError::Parse {
                line: 1,
                msg: e.to_string(),
            })?
            .clone();
        if headers.is_empty() || &headers[0] != "item_id" {
            return Err(CoreError::Format(
                "external feature CSV must start with an item_id column".into(),
            ));
        }
        let columns: Vec<String> = headers.iter().skip(1).map(|h| h.to_string()).collect();
        let mut rows = HashMap::new();
        for (idx, record) in rdr.records().enumerate() {
            let record = record.map_err(|e| CoreError::Parse {
                line: idx + 2,
                msg: e.to_string(),
            })?;
            let values: Vec<Option<f64>> = record
                .iter()
                .skip(1)
                .map(|cell| {
                    if cell.is_empty() {
                        Ok(None)
                    } else {
                        cell.parse::<f64>().map(Some).map_err(|e| CoreError::Parse {
                            line: idx + 2,
                            msg: format!("bad number {cell:?}: {e}"),
                        })
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            rows.insert(record[0].to_string(), values);
        }
        Ok(ExternalFeatures { columns, rows })
    }
}

fn slug(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        if c.is_alphanumeric() {
            out.extend(c.to_lowercase());
        } else if !out.ends_with('_') && !out.is_empty() {
            out.push('_');
        }
    }
    out.trim_end_matches('_').to_string()
}

/// Build the feature matrix for a set of items. Category and subcategory
/// one-hots are discovered from the data; temporal/records flags come from
/// the pattern config; `clue_count` and any external columns are numeric.
/// Items without an external row get missing values there (imputed during
/// standardization).
pub fn extract_features(
    items: &[(Item, Question)],
    external: &ExternalFeatures,
    cfg: &FeatureConfig,
) -> Result<FeatureMatrix> {
    if items.is_empty() {
        return Err(CoreError::Contract("no items to featurize".into()));
    }
    let patterns = cfg.compile()?;

    let mut categories = BTreeSet::new();
    let mut subcategories = BTreeSet::new();
    for (_, q) in items {
        if !q.category.is_empty() {
            categories.insert(slug(&q.category));
        }
        if let Some(sc) = &q.subcategory {
            if !sc.is_empty() {
                subcategories.insert(slug(sc));
            }
        }
    }
    // subcategory slugs colliding with a category slug get a sub_ prefix so
    // each one-hot group stays distinct
    let subcat_name = |s: &str| {
        if categories.contains(s) {
            format!("c_sub_{s}")
        } else {
            format!("c_{s}")
        }
    };

    let mut names: Vec<String> = Vec::new();
    let mut kinds: Vec<FeatureKind> = Vec::new();
    for c in &categories {
        names.push(format!("c_{c}"));
        kinds.push(FeatureKind::Binary);
    }
    for sc in &subcategories {
        names.push(subcat_name(sc));
        kinds.push(FeatureKind::Binary);
    }
    for (flag, _) in &patterns.temporal {
        names.push(flag.clone());
        kinds.push(FeatureKind::Binary);
    }
    names.push("o_records".into());
    kinds.push(FeatureKind::Binary);
    names.push("o_trash".into());
    kinds.push(FeatureKind::Binary);
    names.push("clue_count".into());
    kinds.push(FeatureKind::Numeric);
    for col in &external.columns {
        names.push(col.clone());
        kinds.push(FeatureKind::Numeric);
    }

    let p = names.len();
    let cat_count = categories.len();
    let subcat_count = subcategories.len();
    let cat_index: HashMap<&String, usize> = categories.iter().zip(0..).collect();
    let subcat_index: HashMap<&String, usize> = subcategories.iter().zip(0..).collect();

    let mut values = Mat::zeros(items.len(), p);
    let mut missing = vec![false; items.len() * p];
    for (row, (item, q)) in items.iter().enumerate() {
        let r = values.row_mut(row);
        if !q.category.is_empty() {
            if let Some(&idx) = cat_index.get(&slug(&q.category)) {
                r[idx] = 1.0;
            }
        }
        if let Some(sc) = &q.subcategory {
            if !sc.is_empty() {
                if let Some(&idx) = subcat_index.get(&slug(sc)) {
                    r[cat_count + idx] = 1.0;
                }
            }
        }
        let mut col = cat_count + subcat_count;
        for (_, set) in &patterns.temporal {
            r[col] = f64::from(set.is_match(&item.text));
            col += 1;
        }
        r[col] = f64::from(patterns.records.is_match(&item.text));
        col += 1;
        r[col] = f64::from(patterns.trash.contains(&q.category.to_lowercase()));
        col += 1;
        r[col] = item.clue_count as f64;
        col += 1;
        let ext_row = external.rows.get(&item.item_id);
        for (e, _) in external.columns.iter().enumerate() {
            match ext_row.and_then(|vals| vals.get(e).copied().flatten()) {
                Some(v) => r[col + e] = v,
                None => missing[row * p + col + e] = true,
            }
        }
    }
    Ok(FeatureMatrix {
        item_ids: items.iter().map(|(it, _)| it.item_id.clone()).collect(),
        names,
        kinds,
        values,
        missing,
    })
}

/// Standardized design matrix ready for fitting.
#[derive(Debug, Clone)]
pub struct StandardizedFeatures {
    pub item_ids: Vec<String>,
    pub names: Vec<String>,
    pub kinds: Vec<FeatureKind>,
    pub values: Mat,
    /// Columns removed for having no variance (or no data at all).
    pub dropped: Vec<String>,
}

/// Zero-mean unit-variance scaling (population σ) of numeric columns;
/// binary columns pass through as 0/1. Missing values are imputed with the
/// column mean before scaling. Zero-variance columns are dropped with a
/// warning naming them.
pub fn standardize(features: &FeatureMatrix) -> Result<StandardizedFeatures> {
    let n = features.values.rows();
    if n < 2 {
        return Err(CoreError::Contract(
            "standardization needs at least 2 rows".into(),
        ));
    }
    let p = features.names.len();
    let mut keep_cols: Vec<(usize, Vec<f64>)> = Vec::new();
    let mut dropped = Vec::new();
    for col in 0..p {
        let observed: Vec<f64> = (0..n)
            .filter(|&row| !features.missing[row * p + col])
            .map(|row| features.values.get(row, col))
            .collect();
        if observed.is_empty() {
            log::warn!("dropping feature {}: no observed values", features.names[col]);
            dropped.push(features.names[col].clone());
            continue;
        }
        let mean = observed.iter().sum::<f64>() / observed.len() as f64;
        let column: Vec<f64> = (0..n)
            .map(|row| {
                if features.missing[row * p + col] {
                    mean
                } else {
                    features.values.get(row, col)
                }
            })
            .collect();
        let full_mean = column.iter().sum::<f64>() / n as f64;
        let var = column.iter().map(|v| (v - full_mean) * (v - full_mean)).sum::<f64>() / n as f64;
        if var == 0.0 {
            log::warn!("dropping feature {}: zero variance", features.names[col]);
            dropped.push(features.names[col].clone());
            continue;
        }
        let scaled = match features.kinds[col] {
            FeatureKind::Binary => column,
            FeatureKind::Numeric => {
                let sd = var.sqrt();
                column.iter().map(|v| (v - full_mean) / sd).collect()
            }
        };
        keep_cols.push((col, scaled));
    }
    let kept = keep_cols.len();
    let mut values = Mat::zeros(n, kept);
    for (out_col, (_, column)) in keep_cols.iter().enumerate() {
        for row in 0..n {
            values.set(row, out_col, column[row]);
        }
    }
    Ok(StandardizedFeatures {
        item_ids: features.item_ids.clone(),
        names: keep_cols.iter().map(|(c, _)| features.names[*c].clone()).collect(),
        kinds: keep_cols.iter().map(|(c, _)| features.kinds[*c]).collect(),
        values,
        dropped,
    })
}

/// Binary labels for dimension k: relevance strictly above the threshold.
pub fn relevance_labels(
    chars: &[QuestionCharacteristics],
    dimension: usize,
    threshold: f64,
) -> Result<Vec<bool>> {
    if chars.iter().any(|c| dimension >= c.relevance.len()) {
        return Err(CoreError::Contract(format!(
            "dimension {dimension} out of range"
        )));
    }
    Ok(chars.iter().map(|c| c.relevance[dimension] > threshold).collect())
}

/// Write interpretation.csv (all coefficients, sorted by |coef| within
/// each dimension) and interpretation.json (per-dimension accuracy plus
/// the significant features at level `alpha`).
pub fn interpretation_report(
    results: &[LogRegResult],
    alpha: f64,
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir).map_err(|e| CoreError::io(out_dir, e))?;
    let mut csv_out = String::from(
        "dimension,balanced_accuracy,feature,coefficient,std_error,z,p_value,significant,sign\n",
    );
    let mut json_dims = Vec::new();
    for res in results {
        let mut order: Vec<usize> = (0..res.coefficients.len()).collect();
        order.sort_by(|&a, &b| {
            res.coefficients[b]
                .abs()
                .partial_cmp(&res.coefficients[a].abs())
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| res.feature_names[a].cmp(&res.feature_names[b]))
        });
        let mut significant = Vec::new();
        for &j in &order {
            let coef = res.coefficients[j];
            let stat = res.coef_stats.get(j).and_then(|s| s.as_ref());
            let sig = stat.map(|s| s.p_value < alpha).unwrap_or(false);
            let sign = if coef >= 0.0 { "positive" } else { "negative" };
            csv_out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                res.dimension,
                res.balanced_accuracy,
                res.feature_names[j],
                coef,
                stat.map(|s| s.std_error.to_string()).unwrap_or_default(),
                stat.map(|s| s.z.to_string()).unwrap_or_default(),
                stat.map(|s| s.p_value.to_string()).unwrap_or_default(),
                u8::from(sig),
                sign
            ));
            if sig {
                significant.push(serde_json::json!({
                    "feature": res.feature_names[j],
                    "coefficient": coef,
                    "std_error": stat.map(|s| s.std_error),
                    "z": stat.map(|s| s.z),
                    "p_value": stat.map(|s| s.p_value),
                    "sign": sign,
                }));
            }
        }
        json_dims.push(serde_json::json!({
            "dimension": res.dimension,
            "balanced_accuracy": res.balanced_accuracy,
            "converged": res.converged,
            "separation_note": res.separation_note,
            "significant_features": significant,
        }));
    }
    let csv_path = out_dir.join("interpretation.csv");
    std::fs::write(&csv_path, csv_out).map_err(|e| CoreError::io(&csv_path, e))?;
    let json_path = out_dir.join("interpretation.json");
    let json_text = serde_json::to_string_pretty(&serde_json::json!({
        "alpha": alpha,
        "dimensions": json_dims,
    }))
    .expect("report serializes");
    std::fs::write(&json_path, json_text).map_err(|e| CoreError::io(&json_path, e))?;
    Ok(vec![csv_path, json_path])
}
