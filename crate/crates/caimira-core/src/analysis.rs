//! Effective-difficulty analysis: clustering and accuracy slicing.
//!
//! A question's *effective difficulty* on latent dimension k is
//! ε_{j,k} = r_{j,k} · d_{j,k} — the dimension's contribution to how hard
//! the item is. Items are clustered on their effective-difficulty vectors
//! with KMeans, and per-cluster summaries aggregate the relevance-weighted
//! mean difficulty ε_{D,μk} = Σ_j r_{j,k} d_{j,k} / Σ_j r_{j,k}.
//! Agent accuracy is then sliced per cluster and per agent type.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::dataset::ResponseMatrix;
use crate::embeddings::EmbeddingStore;
use crate::error::{CoreError, Result};
use crate::irt::{CaimiraParams, QuestionCharacteristics};
use crate::linalg::Mat;
use crate::par::{map_indexed, mix64};

/// Default cluster count for question grouping.
pub const DEFAULT_CLUSTER_K: usize = 12;

const KMEANS_RESTARTS: usize = 10;
const KMEANS_MAX_ITERS: usize = 300;
const KMEANS_TOL: f64 = 1e-6;

/// Per-item effective difficulty matrix (n_items × m).
#[derive(Debug, Clone)]
pub struct EffectiveDifficulty {
    pub values: Mat,
}

/// ε_{j,k} = r_{j,k} · d_{j,k}, elementwise per item.
pub fn effective_difficulty(chars: &[QuestionCharacteristics]) -> Result<EffectiveDifficulty> {
    if chars.is_empty() {
        return Err(CoreError::Contract(
            "effective difficulty of an empty item set".into(),
        ));
    }
    let m = chars[0].relevance.len();
    let mut values = Mat::zeros(chars.len(), m);
    for (j, c) in chars.iter().enumerate() {
        if c.relevance.len() != m || c.difficulty.len() != m {
            return Err(CoreError::Contract("inconsistent characteristic dims".into()));
        }
        for k in 0..m {
            values.set(j, k, c.relevance[k] * c.difficulty[k]);
        }
    }
    Ok(EffectiveDifficulty { values })
}

/// Relevance-weighted mean effective difficulty of a cluster:
/// ε_{D,μk} = Σ_{j∈D} r_{j,k} d_{j,k} / Σ_{j∈D} r_{j,k}.
/// A dimension with zero total relevance yields NaN rather than an error.
pub fn mean_effective_difficulty(
    cluster: &[usize],
    chars: &[QuestionCharacteristics],
) -> Vec<f64> {
    assert!(!cluster.is_empty(), "mean over an empty cluster");
    let m = chars[0].relevance.len();
    let mut num = vec![0.0; m];
    let mut den = vec![0.0; m];
    for &j in cluster {
        let c = &chars[j];
        for k in 0..m {
            num[k] += c.relevance[k] * c.difficulty[k];
            den[k] += c.relevance[k];
        }
    }
    (0..m)
        .map(|k| if den[k] > 0.0 { num[k] / den[k] } else { f64::NAN })
        .collect()
}

/// KMeans output: per-item assignments plus the winning restart's
/// centroids and within-cluster sum of squares.
#[derive(Debug, Clone)]
pub struct KmeansResult {
    pub assignments: Vec<usize>,
    pub centroids: Mat,
    pub wcss: f64,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum()
}

fn nearest_centroid(point: &[f64], centroids: &Mat) -> (usize, f64) {
    let mut best = (0usize, f64::INFINITY);
    for c in 0..centroids.rows() {
        let d = sq_dist(point, centroids.row(c));
        // strict less-than keeps the lowest index on ties
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn kmeans_pp_seed(data: &Mat, k: usize, rng: &mut ChaCha8Rng) -> Mat {
    let n = data.rows();
    let mut centroids = Mat::zeros(k, data.cols());
    let mut chosen = vec![false; n];
    let first = rng.random_range(0..n);
    centroids.row_mut(0).copy_from_slice(data.row(first));
    chosen[first] = true;
    let mut dist2: Vec<f64> = (0..n).map(|i| sq_dist(data.row(i), data.row(first))).collect();
    for c in 1..k {
        let total: f64 = dist2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random_range(0.0..total);
            let mut pick = n - 1;
            for (i, &d) in dist2.iter().enumerate() {
                if target < d {
                    pick = i;
                    break;
                }
                target -= d;
            }
            pick
        } else {
            // all remaining mass is zero (duplicate points): first unchosen
            chosen.iter().position(|&c| !c).unwrap_or(0)
        };
        centroids.row_mut(c).copy_from_slice(data.row(pick));
        chosen[pick] = true;
        for i in 0..n {
            dist2[i] = dist2[i].min(sq_dist(data.row(i), data.row(pick)));
        }
    }
    centroids
}

fn lloyd(data: &Mat, mut centroids: Mat) -> (Vec<usize>, Mat, f64) {
    let n = data.rows();
    let dims = data.cols();
    let k = centroids.rows();
    let mut assignments = vec![0usize; n];
    for _ in 0..KMEANS_MAX_ITERS {
        for i in 0..n {
            assignments[i] = nearest_centroid(data.row(i), &centroids).0;
        }
        let mut sums = Mat::zeros(k, dims);
        let mut counts = vec![0usize; k];
        for i in 0..n {
            counts[assignments[i]] += 1;
            for (s, &v) in sums.row_mut(assignments[i]).iter_mut().zip(data.row(i)) {
                *s += v;
            }
        }
        // empty clusters are reseeded from the point farthest from its
        // centroid (lowest index on ties)
        for c in 0..k {
            if counts[c] == 0 {
                let far = (0..n)
                    .max_by(|&a, &b| {
                        let da = sq_dist(data.row(a), centroids.row(assignments[a]));
                        let db = sq_dist(data.row(b), centroids.row(assignments[b]));
                        da.partial_cmp(&db)
                            .unwrap_or(std::cmp::Ordering::Equal)
                            .then(b.cmp(&a))
                    })
                    .expect("non-empty data");
                sums.row_mut(c).copy_from_slice(data.row(far));
                counts[c] = 1;
            }
        }
        let mut movement: f64 = 0.0;
        for c in 0..k {
            let inv = 1.0 / counts[c] as f64;
            let mut shift = 0.0;
            for (idx, s) in sums.row(c).iter().enumerate() {
                let newv = s * inv;
                let old = centroids.get(c, idx);
                shift += (newv - old) * (newv - old);
                centroids.set(c, idx, newv);
            }
            movement = movement.max(shift.sqrt());
        }
        if movement < KMEANS_TOL {
            break;
        }
    }
    let mut wcss = 0.0;
    for i in 0..n {
        let (c, d) = nearest_centroid(data.row(i), &centroids);
        assignments[i] = c;
        wcss += d;
    }
    (assignments, centroids, wcss)
}

/// Lloyd's algorithm with k-means++ seeding, 10 restarts, 300 max
/// iterations, centroid-movement tolerance 1e-6. Equidistant points go to
/// the lowest-indexed centroid; the restart with the lowest WCSS wins.
/// Restarts run in parallel but are seeded independently, so the result is
/// deterministic for a fixed seed.
pub fn kmeans_cluster(data: &Mat, k: usize, seed: u64) -> Result<KmeansResult> {
    let n = data.rows();
    if k == 0 {
        return Err(CoreError::Config("cluster count must be >= 1".into()));
    }
    if k > n {
        return Err(CoreError::Config(format!(
            "cannot form {k} clusters from {n} items"
        )));
    }
    let runs: Vec<(Vec<usize>, Mat, f64)> = map_indexed(KMEANS_RESTARTS, |restart| {
        let mut rng = ChaCha8Rng::seed_from_u64(mix64(seed ^ ((restart as u64) << 16)));
        let centroids = kmeans_pp_seed(data, k, &mut rng);
        lloyd(data, centroids)
    });
    let best = runs
        .into_iter()
        .enumerate()
        .min_by(|(ia, a), (ib, b)| {
            a.2.partial_cmp(&b.2)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(ia.cmp(ib))
        })
        .map(|(_, run)| run)
        .expect("at least one restart");
    Ok(KmeansResult {
        assignments: best.0,
        centroids: best.1,
        wcss: best.2,
    })
}

/// Per-cluster aggregate statistics.
#[derive(Debug, Clone, Serialize)]
pub struct ClusterSummary {
    pub cluster: usize,
    pub size: usize,
    pub label: Option<String>,
    /// Mean relevance per dimension (rows still sum to 1).
    pub mean_relevance: Vec<f64>,
    /// Relevance-weighted mean effective difficulty per dimension.
    pub mean_effective_difficulty: Vec<f64>,
    /// Mean total effective difficulty; used to suggest an ordering.
    pub overall_difficulty: f64,
    /// 1 = hardest cluster by overall difficulty.
    pub difficulty_rank: usize,
}

/// Cluster assignments plus per-cluster summaries.
#[derive(Debug, Clone)]
pub struct ClusterReport {
    pub k: usize,
    pub item_ids: Vec<String>,
    pub assignments: Vec<usize>,
    pub summaries: Vec<ClusterSummary>,
}

/// Aggregate a clustering into per-cluster summaries. Labels are
/// analyst-supplied, keyed by cluster id.
pub fn build_cluster_report(
    item_ids: &[String],
    chars: &[QuestionCharacteristics],
    assignments: &[usize],
    k: usize,
    labels: Option<&HashMap<usize, String>>,
) -> Result<ClusterReport> {
    if item_ids.len() != chars.len() || item_ids.len() != assignments.len() {
        return Err(CoreError::Contract("mismatched report inputs".into()));
    }
    let m = chars.first().map(|c| c.relevance.len()).unwrap_or(0);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (j, &c) in assignments.iter().enumerate() {
        if c >= k {
            return Err(CoreError::Contract(format!("assignment {c} out of range")));
        }
        members[c].push(j);
    }
    let mut summaries = Vec::with_capacity(k);
    for (cluster, idxs) in members.iter().enumerate() {
        let (mean_relevance, mean_eff, overall) = if idxs.is_empty() {
            (vec![f64::NAN; m], vec![f64::NAN; m], f64::NAN)
        } else {
            let mut mean_rel = vec![0.0; m];
            let mut overall = 0.0;
            for &j in idxs {
                for kk in 0..m {
                    mean_rel[kk] += chars[j].relevance[kk];
                    overall += chars[j].relevance[kk] * chars[j].difficulty[kk];
                }
            }
            for v in &mut mean_rel {
                *v /= idxs.len() as f64;
            }
            overall /= idxs.len() as f64;
            (mean_rel, mean_effective_difficulty(idxs, chars), overall)
        };
        summaries.push(ClusterSummary {
            cluster,
            size: idxs.len(),
            label: labels.and_then(|l| l.get(&cluster).cloned()),
            mean_relevance,
            mean_effective_difficulty: mean_eff,
            overall_difficulty: overall,
            difficulty_rank: 0,
        });
    }
    // rank 1 = hardest; NaN (empty clusters) ranks last
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| {
        let da = summaries[a].overall_difficulty;
        let db = summaries[b].overall_difficulty;
        db.partial_cmp(&da).unwrap_or_else(|| {
            if da.is_nan() && !db.is_nan() {
                std::cmp::Ordering::Greater
            } else if !da.is_nan() && db.is_nan() {
                std::cmp::Ordering::Less
            } else {
                std::cmp::Ordering::Equal
            }
        })
    });
    for (rank, &cluster) in order.iter().enumerate() {
        summaries[cluster].difficulty_rank = rank + 1;
    }
    Ok(ClusterReport {
        k,
        item_ids: item_ids.to_vec(),
        assignments: assignments.to_vec(),
        summaries,
    })
}

/// One accuracy cell: an agent or agent type crossed with a cluster
/// (`cluster: None` is the overall row). A cell with `answered == 0` is
/// absent, not zero accuracy.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceRow {
    pub scope: SliceScope,
    pub name: String,
    pub cluster: Option<usize>,
    pub answered: usize,
    pub correct: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SliceScope {
    AgentType,
    Agent,
}

impl SliceRow {
    pub fn accuracy(&self) -> Option<f64> {
        if self.answered == 0 {
            None
        } else {
            Some(self.correct as f64 / self.answered as f64)
        }
    }
}

/// Accuracy per (agent type × cluster), per (agent × cluster), and overall
/// per type and agent. `assignments` maps item id → cluster and must cover
/// every matrix item; agents missing from `agent_types` fall into "all".
pub fn accuracy_slices(
    matrix: &ResponseMatrix,
    assignments: &HashMap<String, usize>,
    agent_types: &HashMap<String, String>,
) -> Result<Vec<SliceRow>> {
    let item_cluster: Vec<usize> = matrix
        .items()
        .iter()
        .map(|id| {
            assignments
                .get(id)
                .copied()
                .ok_or_else(|| CoreError::Integrity(format!("item {id} has no cluster assignment")))
        })
        .collect::<Result<Vec<_>>>()?;
    let n_clusters = item_cluster.iter().copied().max().map(|c| c + 1).unwrap_or(0);

    let type_of: Vec<&str> = matrix
        .agents()
        .iter()
        .map(|a| agent_types.get(a).map(|t| t.as_str()).unwrap_or("all"))
        .collect();

    // (answered, correct) per agent per cluster, plus overall per agent
    let n_agents = matrix.agents().len();
    let mut agent_cells = vec![(0usize, 0usize); n_agents * (n_clusters + 1)];
    for (agent, item, entry) in matrix.iter() {
        let cluster = item_cluster[item];
        for slot in [agent * (n_clusters + 1) + cluster, agent * (n_clusters + 1) + n_clusters] {
            agent_cells[slot].0 += 1;
            agent_cells[slot].1 += usize::from(entry.correct);
        }
    }

    let mut type_cells: BTreeMap<&str, Vec<(usize, usize)>> = BTreeMap::new();
    for agent in 0..n_agents {
        let cells = type_cells
            .entry(type_of[agent])
            .or_insert_with(|| vec![(0, 0); n_clusters + 1]);
        for c in 0..=n_clusters {
            cells[c].0 += agent_cells[agent * (n_clusters + 1) + c].0;
            cells[c].1 += agent_cells[agent * (n_clusters + 1) + c].1;
        }
    }

    let mut rows = Vec::new();
    for (ty, cells) in &type_cells {
        for c in 0..=n_clusters {
            rows.push(SliceRow {
                scope: SliceScope::AgentType,
                name: ty.to_string(),
                cluster: if c == n_clusters { None } else { Some(c) },
                answered: cells[c].0,
                correct: cells[c].1,
            });
        }
    }
    for agent in 0..n_agents {
        for c in 0..=n_clusters {
            let (answered, correct) = agent_cells[agent * (n_clusters + 1) + c];
            rows.push(SliceRow {
                scope: SliceScope::Agent,
                name: matrix.agents()[agent].clone(),
                cluster: if c == n_clusters { None } else { Some(c) },
                answered,
                correct,
            });
        }
    }
    Ok(rows)
}

/// Histogram of relevance values per dimension over [0, 1].
pub fn relevance_distribution(
    chars: &[QuestionCharacteristics],
    n_bins: usize,
) -> Vec<(usize, f64, f64, usize)> {
    let m = chars.first().map(|c| c.relevance.len()).unwrap_or(0);
    let mut counts = vec![0usize; m * n_bins];
    for c in chars {
        for (k, &r) in c.relevance.iter().enumerate() {
            let bin = ((r * n_bins as f64) as usize).min(n_bins - 1);
            counts[k * n_bins + bin] += 1;
        }
    }
    let width = 1.0 / n_bins as f64;
    let mut rows = Vec::with_capacity(m * n_bins);
    for k in 0..m {
        for b in 0..n_bins {
            rows.push((k, b as f64 * width, (b + 1) as f64 * width, counts[k * n_bins + b]));
        }
    }
    rows
}

/// Options for [`emit_reports`].
#[derive(Debug, Clone)]
pub struct ReportOptions {
    pub k: usize,
    pub seed: u64,
    pub agent_types: HashMap<String, String>,
    pub cluster_labels: Option<HashMap<usize, String>>,
}

impl Default for ReportOptions {
    fn default() -> Self {
        ReportOptions {
            k: DEFAULT_CLUSTER_K,
            seed: 0,
            agent_types: HashMap::new(),
            cluster_labels: None,
        }
    }
}

fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "NaN".to_string()
    } else {
        format!("{v}")
    }
}

fn write_deterministic(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| CoreError::io(path, e))
}

fn plot_spec(csv_name: &str, mark: &str, x: &str, y: &str, color: Option<&str>) -> String {
    let mut encoding = serde_json::json!({
        "x": {"field": x, "type": "quantitative"},
        "y": {"field": y, "type": "quantitative"},
    });
    if let Some(c) = color {
        encoding["color"] = serde_json::json!({"field": c, "type": "nominal"});
    }
    let spec = serde_json::json!({
        "$schema": "https://vega.github.io/schema/vega-lite/v5.json",
        "data": {"url": csv_name},
        "mark": mark,
        "encoding": encoding,
    });
    serde_json::to_string_pretty(&spec).expect("plot spec serializes")
}

/// Write the analysis file set into `out_dir`:
/// question_characteristics.csv, agent_skills.csv, clusters.csv,
/// cluster_summary.csv, accuracy_slices.csv, relevance_distribution.csv,
/// and one `.plot.json` per CSV. Deterministic: a rerun on the same inputs
/// is byte-identical.
pub fn emit_reports(
    params: &CaimiraParams,
    agent_ids: &[String],
    store: &EmbeddingStore,
    matrix: &ResponseMatrix,
    out_dir: &Path,
    opts: &ReportOptions,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir).map_err(|e| CoreError::io(out_dir, e))?;
    if agent_ids.len() != params.n_agents() {
        return Err(CoreError::Contract(format!(
            "{} agent ids for {} skill rows",
            agent_ids.len(),
            params.n_agents()
        )));
    }
    let m = params.m;
    let chars: Vec<QuestionCharacteristics> = (0..store.len())
        .map(|j| params.characteristics(store.row(j)))
        .collect();
    let mut written = Vec::new();
    let mut emit = |name: &str, contents: String, plot: Option<String>| -> Result<()> {
        let path = out_dir.join(name);
        write_deterministic(&path, &contents)?;
        written.push(path);
        if let Some(spec) = plot {
            let plot_path = out_dir.join(format!("{name}.plot.json"));
            write_deterministic(&plot_path, &spec)?;
            written.push(plot_path);
        }
        Ok(())
    };

    // question_characteristics.csv
    {
        let mut out = String::from("item");
        for k in 0..m {
            out.push_str(&format!(",r_{}", k + 1));
        }
        for k in 0..m {
            out.push_str(&format!(",d_{}", k + 1));
        }
        out.push('\n');
        for (j, id) in store.ids().iter().enumerate() {
            out.push_str(id);
            for k in 0..m {
                out.push(',');
                out.push_str(&fmt_f64(chars[j].relevance[k]));
            }
            for k in 0..m {
                out.push(',');
                out.push_str(&fmt_f64(chars[j].difficulty[k]));
            }
            out.push('\n');
        }
        emit(
            "question_characteristics.csv",
            out,
            Some(plot_spec("question_characteristics.csv", "point", "d_1", "r_1", None)),
        )?;
    }

    // agent_skills.csv
    {
        let mut out = String::from("agent_id");
        for k in 0..m {
            out.push_str(&format!(",s_{}", k + 1));
        }
        out.push('\n');
        for (i, id) in agent_ids.iter().enumerate() {
            out.push_str(id);
            for k in 0..m {
                out.push(',');
                out.push_str(&fmt_f64(params.agent_skills.get(i, k)));
            }
            out.push('\n');
        }
        emit(
            "agent_skills.csv",
            out,
            Some(plot_spec("agent_skills.csv", "point", "s_1", "s_2", None)),
        )?;
    }

    // clustering
    let eff = effective_difficulty(&chars)?;
    let km = kmeans_cluster(&eff.values, opts.k, opts.seed)?;
    let report = build_cluster_report(
        store.ids(),
        &chars,
        &km.assignments,
        opts.k,
        opts.cluster_labels.as_ref(),
    )?;

    {
        let mut out = String::from("item,cluster\n");
        for (id, &c) in report.item_ids.iter().zip(&report.assignments) {
            out.push_str(&format!("{id},{c}\n"));
        }
        emit(
            "clusters.csv",
            out,
            Some(plot_spec("clusters.csv", "bar", "cluster", "cluster", None)),
        )?;
    }
    {
        let mut out = String::from("cluster,size,label,difficulty_rank,overall_difficulty");
        for k in 0..m {
            out.push_str(&format!(",mean_r_{}", k + 1));
        }
        for k in 0..m {
            out.push_str(&format!(",mean_eff_d_{}", k + 1));
        }
        out.push('\n');
        for s in &report.summaries {
            out.push_str(&format!(
                "{},{},{},{},{}",
                s.cluster,
                s.size,
                s.label.as_deref().unwrap_or(""),
                s.difficulty_rank,
                fmt_f64(s.overall_difficulty)
            ));
            for v in &s.mean_relevance {
                out.push(',');
                out.push_str(&fmt_f64(*v));
            }
            for v in &s.mean_effective_difficulty {
                out.push(',');
                out.push_str(&fmt_f64(*v));
            }
            out.push('\n');
        }
        emit(
            "cluster_summary.csv",
            out,
            Some(plot_spec("cluster_summary.csv", "bar", "cluster", "overall_difficulty", None)),
        )?;
    }

    // accuracy slices
    {
        let assignments: HashMap<String, usize> = report
            .item_ids
            .iter()
            .cloned()
            .zip(report.assignments.iter().copied())
            .collect();
        let rows = accuracy_slices(matrix, &assignments, &opts.agent_types)?;
        let mut out = String::from("scope,name,cluster,answered,correct,accuracy\n");
        for r in rows {
            let scope = match r.scope {
                SliceScope::AgentType => "type",
                SliceScope::Agent => "agent",
            };
            let cluster = r.cluster.map(|c| c.to_string()).unwrap_or_else(|| "all".into());
            let acc = r.accuracy().map(fmt_f64).unwrap_or_default();
            out.push_str(&format!(
                "{scope},{},{cluster},{},{},{acc}\n",
                r.name, r.answered, r.correct
            ));
        }
        emit(
            "accuracy_slices.csv",
            out,
            Some(plot_spec("accuracy_slices.csv", "bar", "cluster", "accuracy", Some("name"))),
        )?;
    }

    // relevance histogram (20 bins per dimension)
    {
        let rows = relevance_distribution(&chars, 20);
        let mut out = String::from("dimension,bin_lo,bin_hi,count\n");
        for (k, lo, hi, count) in rows {
            out.push_str(&format!("{},{},{},{}\n", k + 1, fmt_f64(lo), fmt_f64(hi), count));
        }
        emit(
            "relevance_distribution.csv",
            out,
            Some(plot_spec("relevance_distribution.csv", "bar", "bin_lo", "count", Some("dimension"))),
        )?;
    }

    Ok(written)
}
