//! Weighted logistic regression by IRLS, with Wald significance tests.

use crate::error::{CoreError, Result};
use crate::irt::sigmoid;
use crate::linalg::{invert, solve, Mat};

/// Fit settings. The small ridge keeps the IRLS system well-conditioned
/// and bounds coefficients under complete separation.
#[derive(Debug, Clone)]
pub struct LogRegConfig {
    pub ridge: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for LogRegConfig {
    fn default() -> Self {
        LogRegConfig {
            ridge: 1e-4,
            max_iter: 100,
            tol: 1e-8,
        }
    }
}

/// Wald statistics for one coefficient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaldStat {
    pub std_error: f64,
    pub z: f64,
    pub p_value: f64,
}

/// A fitted logistic regression. `coef_stats` stays empty until
/// [`wald_significance`] fills it from the stored Fisher information.
#[derive(Debug, Clone)]
pub struct LogRegResult {
    /// Which latent dimension this fit explains (set by the caller).
    pub dimension: usize,
    pub feature_names: Vec<String>,
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub intercept_stat: Option<WaldStat>,
    pub coef_stats: Vec<Option<WaldStat>>,
    /// 0.5 (TPR + TNR) on the training data at threshold 0.5.
    pub balanced_accuracy: f64,
    pub converged: bool,
    /// Set when coefficients grew large enough to suggest separation; the
    /// ridge bounds them, so the fit is still returned.
    pub separation_note: bool,
    /// Weighted Fisher information XᵀWX at the optimum (no ridge).
    fisher: Mat,
}

const SEPARATION_BOUND: f64 = 20.0;
const P_CLAMP: f64 = 1e-10;

/// IRLS with per-sample weights and an L2 ridge on the non-intercept
/// coefficients. Converges when the largest coefficient change drops
/// below `tol`, or stops at `max_iter`.
pub fn fit_logreg_weighted(
    x: &Mat,
    y: &[bool],
    weights: &[f64],
    cfg: &LogRegConfig,
) -> Result<LogRegResult> {
    let n = x.rows();
    let p = x.cols();
    if y.len() != n || weights.len() != n {
        return Err(CoreError::Contract(format!(
            "design has {n} rows but {} labels and {} weights",
            y.len(),
            weights.len()
        )));
    }
    if n == 0 {
        return Err(CoreError::Fit("no rows to fit".into()));
    }

    // design with intercept in column 0
    let d = p + 1;
    let mut beta = vec![0.0; d];
    let mut converged = false;
    let eta = |beta: &[f64], row: usize| -> f64 {
        beta[0]
            + x.row(row)
                .iter()
                .zip(&beta[1..])
                .map(|(&v, &b)| v * b)
                .sum::<f64>()
    };

    for _ in 0..cfg.max_iter {
        // weighted normal equations: (XᵀWX + λR) β' = XᵀW z
        let mut info = Mat::zeros(d, d);
        let mut rhs = vec![0.0; d];
        for row in 0..n {
            let xb = eta(&beta, row);
            let prob = sigmoid(xb).clamp(P_CLAMP, 1.0 - P_CLAMP);
            let w = weights[row] * prob * (1.0 - prob);
            let z = xb + (f64::from(u8::from(y[row])) - prob) / (prob * (1.0 - prob));
            let mut design_row = Vec::with_capacity(d);
            design_row.push(1.0);
            design_row.extend_from_slice(x.row(row));
            for a in 0..d {
                rhs[a] += w * design_row[a] * z;
                for b in 0..d {
                    let v = info.get(a, b) + w * design_row[a] * design_row[b];
                    info.set(a, b, v);
                }
            }
        }
        for j in 1..d {
            let v = info.get(j, j) + cfg.ridge;
            info.set(j, j, v);
        }
        let new_beta = solve(&info, &rhs)
            .ok_or_else(|| CoreError::Fit("IRLS system is singular".into()))?;
        let max_change = beta
            .iter()
            .zip(&new_beta)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        beta = new_beta;
        if max_change < cfg.tol {
            converged = true;
            break;
        }
    }

    let separation_note = beta.iter().any(|b| b.abs() > SEPARATION_BOUND);

    // Fisher information at the optimum, without the ridge.
    let mut fisher = Mat::zeros(d, d);
    let mut tp = 0.0;
    let mut tn = 0.0;
    let mut pos = 0.0;
    let mut neg = 0.0;
    for row in 0..n {
        let prob = sigmoid(eta(&beta, row)).clamp(P_CLAMP, 1.0 - P_CLAMP);
        let w = weights[row] * prob * (1.0 - prob);
        let mut design_row = Vec::with_capacity(d);
        design_row.push(1.0);
        design_row.extend_from_slice(x.row(row));
        for a in 0..d {
            for b in 0..d {
                let v = fisher.get(a, b) + w * design_row[a] * design_row[b];
                fisher.set(a, b, v);
            }
        }
        let predicted = prob > 0.5;
        if y[row] {
            pos += 1.0;
            tp += f64::from(u8::from(predicted));
        } else {
            neg += 1.0;
            tn += f64::from(u8::from(!predicted));
        }
    }
    let tpr = if pos > 0.0 { tp / pos } else { f64::NAN };
    let tnr = if neg > 0.0 { tn / neg } else { f64::NAN };

    Ok(LogRegResult {
        dimension: 0,
        feature_names: (0..p).map(|j| format!("x{j}")).collect(),
        intercept: beta[0],
        coefficients: beta[1..].to_vec(),
        intercept_stat: None,
        coef_stats: vec![None; p],
        balanced_accuracy: 0.5 * (tpr + tnr),
        converged,
        separation_note,
        fisher,
    })
}

/// Class-balanced fit: sample weights N/(2·N_class) give both classes
/// equal total weight. Errors when only one class is present.
pub fn fit_logreg_balanced(x: &Mat, y: &[bool], cfg: &LogRegConfig) -> Result<LogRegResult> {
    let n_pos = y.iter().filter(|&&v| v).count();
    let n_neg = y.len() - n_pos;
    if n_pos == 0 {
        return Err(CoreError::Fit("dimension has no positive examples".into()));
    }
    if n_neg == 0 {
        return Err(CoreError::Fit("dimension has no negative examples".into()));
    }
    let n = y.len() as f64;
    let w_pos = n / (2.0 * n_pos as f64);
    let w_neg = n / (2.0 * n_neg as f64);
    let weights: Vec<f64> = y.iter().map(|&v| if v { w_pos } else { w_neg }).collect();
    fit_logreg_weighted(x, y, &weights, cfg)
}

/// A maximal well-conditioned subset of rows/columns of a symmetric PSD
/// matrix, found by pivoted Cholesky. Anything outside the subset lies in
/// a (near-)collinear direction.
fn independent_columns(a: &Mat) -> Vec<usize> {
    let n = a.rows();
    let mut work = a.clone();
    let max_diag = (0..n).map(|i| a.get(i, i)).fold(0.0f64, f64::max);
    let tol = max_diag * 1e-10;
    let mut remaining: Vec<usize> = (0..n).collect();
    let mut selected = Vec::new();
    while !remaining.is_empty() {
        let (pos, &pivot) = remaining
            .iter()
            .enumerate()
            .max_by(|(_, &i), (_, &j)| {
                work.get(i, i)
                    .partial_cmp(&work.get(j, j))
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
            .expect("non-empty");
        let diag = work.get(pivot, pivot);
        if !(diag > tol) {
            break;
        }
        selected.push(pivot);
        remaining.remove(pos);
        // Schur complement update on the remaining block
        for a_idx in 0..remaining.len() {
            let i = remaining[a_idx];
            for b_idx in 0..remaining.len() {
                let j = remaining[b_idx];
                let v = work.get(i, j) - work.get(i, pivot) * work.get(j, pivot) / diag;
                work.set(i, j, v);
            }
        }
    }
    selected.sort_unstable();
    selected
}

/// Fill standard errors, z statistics, and two-sided normal p-values from
/// the inverse Fisher information. Collinear directions (a singular
/// information matrix) leave only the affected features unavailable: the
/// information is restricted to a maximal independent subset, such as when
/// a complete one-hot group duplicates the intercept.
pub fn wald_significance(mut result: LogRegResult) -> LogRegResult {
    let d = result.fisher.rows();
    let keep = independent_columns(&result.fisher);
    let cov = if keep.len() == d {
        invert(&result.fisher)
    } else {
        // invert the estimable submatrix and scatter it back
        let sub = {
            let mut s = Mat::zeros(keep.len(), keep.len());
            for (a, &i) in keep.iter().enumerate() {
                for (b, &j) in keep.iter().enumerate() {
                    s.set(a, b, result.fisher.get(i, j));
                }
            }
            s
        };
        invert(&sub).map(|sub_inv| {
            let mut full = Mat::zeros(d, d);
            for i in 0..d {
                full.set(i, i, f64::NAN);
            }
            for (a, &i) in keep.iter().enumerate() {
                for (b, &j) in keep.iter().enumerate() {
                    full.set(i, j, sub_inv.get(a, b));
                }
            }
            full
        })
    };
    match cov {
        None => {
            result.intercept_stat = None;
            result.coef_stats = vec![None; result.coefficients.len()];
        }
        Some(cov) => {
            let stat_for = |coef: f64, var: f64| -> Option<WaldStat> {
                if !(var.is_finite() && var > 0.0) {
                    return None;
                }
                let se = var.sqrt();
                let z = coef / se;
                Some(WaldStat {
                    std_error: se,
                    z,
                    p_value: two_sided_p(z),
                })
            };
            result.intercept_stat = stat_for(result.intercept, cov.get(0, 0));
            result.coef_stats = result
                .coefficients
                .iter()
                .enumerate()
                .map(|(j, &c)| stat_for(c, cov.get(j + 1, j + 1)))
                .collect();
        }
    }
    result
}

/// Complementary error function, |fractional error| < 1.2e-7.
fn erfc(x: f64) -> f64 {
    let z = x.abs();
    let t = 1.0 / (1.0 + 0.5 * z);
    let ans = t * (-z * z - 1.26551223
        + t * (1.00002368
            + t * (0.37409196
                + t * (0.09678418
                    + t * (-0.18628806
                        + t * (0.27886807
                            + t * (-1.13520398
                                + t * (1.48851587
                                    + t * (-0.82215223 + t * 0.17087277)))))))))
    .exp();
    if x >= 0.0 {
        ans
    } else {
        2.0 - ans
    }
}

/// Standard normal survival function P(Z > x).
pub fn normal_sf(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

/// Two-sided normal p-value for a z statistic, clamped into [0, 1].
pub fn two_sided_p(z: f64) -> f64 {
    (2.0 * normal_sf(z.abs())).min(1.0)
}
