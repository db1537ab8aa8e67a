//! Acceptance suite: one test per criterion, each printing a PASS line
//! with the measured figures (run with `--nocapture` to see them).
//!
//! Criteria 1–8 live here; criterion 9 (end-to-end pipeline determinism)
//! drives the compiled binary and lives in the CLI crate's acceptance
//! test target.

use std::time::Instant;

use caimira_core::analysis::{kmeans_cluster, mean_effective_difficulty, DEFAULT_CLUSTER_K};
use caimira_core::dataset::{
    backfill, group_response, parse_question_bank, similarity, MatrixEntry, Origin, QuestionBank,
    ResponseMatrix,
};
use caimira_core::embeddings::EmbeddingStore;
use caimira_core::interpret::{
    fit_logreg_balanced, relevance_labels, wald_significance, LogRegConfig,
    DEFAULT_LABEL_THRESHOLD,
};
use caimira_core::irt::{irt1d_predict, Checkpoint, QuestionCharacteristics};
use caimira_core::linalg::Mat;
use caimira_core::synth::{
    align_dimensions, generate_synthetic, recovery_metrics, unobserved_pairs, SynthConfig,
};
use caimira_core::training::{
    ablate_dimensions, finite_diff_check, train, TrainConfig, TrainEntry,
};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn random_params(rng: &mut ChaCha8Rng, n_agents: usize, m: usize, n: usize) -> caimira_core::irt::CaimiraParams {
    let mut rnd = |len: usize, scale: f64| -> Vec<f64> {
        (0..len).map(|_| rng.random_range(-scale..scale)).collect()
    };
    caimira_core::irt::CaimiraParams {
        m,
        n,
        agent_skills: Mat::from_vec(n_agents, m, rnd(n_agents * m, 1.2)).unwrap(),
        w_r: Mat::from_vec(m, n, rnd(m * n, 0.7)).unwrap(),
        b_r: rnd(m, 0.3),
        w_d: Mat::from_vec(m, n, rnd(m * n, 0.7)).unwrap(),
        mean_embedding: rnd(n, 0.4),
    }
}

fn random_store(rng: &mut ChaCha8Rng, n_items: usize, n: usize) -> EmbeddingStore {
    let rows: Vec<f64> = (0..n_items * n).map(|_| rng.random_range(-1.5..1.5)).collect();
    let ids: Vec<String> = (0..n_items).map(|j| format!("it{j:04}")).collect();
    EmbeddingStore::from_f64_rows(n, ids, rows).unwrap()
}

/// Criterion 1: analytic gradients agree with central finite differences
/// (h = 1e-4) to 1e-4 max relative error on random small instances.
#[test]
fn acceptance_1_gradient_correctness() {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for seed in [0u64, 1, 2] {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let store = random_store(&mut rng, 10, 8);
        let mut params = random_params(&mut rng, 5, 2, 8);
        params.mean_embedding = store.mean().to_vec();
        let batch: Vec<TrainEntry> = (0..40)
            .map(|_| TrainEntry {
                agent: rng.random_range(0..5),
                item_row: rng.random_range(0..10),
                correct: rng.random_bool(0.5),
            })
            .collect();
        let cfg = TrainConfig {
            m: 2,
            lambda_d: 1e-3,
            lambda_s: 1e-3,
            ..TrainConfig::default()
        };
        let err = finite_diff_check(&params, &batch, &store, &cfg, 1e-4, seed);
        assert!(err <= 1e-4, "seed {seed}: max relative error {err}");
        worst = worst.max(err);
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 10.0, "took {elapsed:?}");
    println!(
        "ACCEPTANCE 1 PASS: gradient vs central differences, max rel err {worst:.2e} \
         (limit 1e-4), {elapsed:?} (limit 10 s)"
    );
}

/// Criterion 2: parameter recovery on the reference synthetic benchmark.
#[test]
fn acceptance_2_parameter_recovery() {
    let start = Instant::now();
    let cfg = SynthConfig {
        n_agents: 60,
        n_items: 2000,
        m_true: 2,
        embed_dim: 16,
        density: 0.5,
        seed: 7,
        ..SynthConfig::default()
    };
    let data = generate_synthetic(&cfg).unwrap();
    // paper defaults: lr 0.005, batch 512, lambda 1e-5
    let tcfg = TrainConfig {
        m: 2,
        seed: 7,
        ..TrainConfig::default()
    };
    assert_eq!(tcfg.learning_rate, 0.005);
    assert_eq!(tcfg.batch_size, 512);
    assert_eq!(tcfg.lambda_d, 1e-5);
    let fitted = train(&data.matrix, &data.store, &tcfg).unwrap();
    let perm = align_dimensions(&data.true_params, &fitted.params, &data.store).unwrap();
    let holdout = unobserved_pairs(&data.matrix);
    let report = recovery_metrics(
        &data.true_params,
        &fitted.params,
        &perm,
        &data.store,
        Some(&holdout),
    )
    .unwrap();
    for (k, &r) in report.skill_r.iter().enumerate() {
        assert!(r >= 0.9, "skill dimension {k}: r = {r}");
    }
    for (k, &r) in report.effective_difficulty_r.iter().enumerate() {
        assert!(r >= 0.85, "effective difficulty dimension {k}: r = {r}");
    }
    assert!(
        report.probability_rmse <= 0.08,
        "held-out RMSE {}",
        report.probability_rmse
    );
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 300.0, "took {elapsed:?}");
    println!(
        "ACCEPTANCE 2 PASS: skills r {:?} (>= 0.9), effective difficulty r {:?} (>= 0.85), \
         held-out RMSE {:.4} (<= 0.08), {elapsed:?} (limit 5 min)",
        report.skill_r, report.effective_difficulty_r, report.probability_rmse
    );
}

/// Criterion 3: the dimension ablation plateaus at the true dimension.
#[test]
fn acceptance_3_dimension_ablation_shape() {
    let start = Instant::now();
    let cfg = SynthConfig {
        n_agents: 60,
        n_items: 2000,
        m_true: 3,
        embed_dim: 16,
        density: 0.5,
        seed: 11,
        ..SynthConfig::default()
    };
    let data = generate_synthetic(&cfg).unwrap();
    let tcfg = TrainConfig {
        seed: 11,
        ..TrainConfig::default()
    };
    let rows = ablate_dimensions(&data.matrix, &data.store, &tcfg, &[1, 2, 3, 5, 8]).unwrap();
    let loss_of = |m: usize| rows.iter().find(|r| r.m == m).unwrap().best_val_loss;
    let (l1, l3, l8) = (loss_of(1), loss_of(3), loss_of(8));
    let improv_1_to_3 = (l1 - l3) / l1;
    let improv_3_to_8 = (l3 - l8) / l3;
    assert!(
        improv_1_to_3 >= 0.02,
        "m=1 -> m=3 improvement {improv_1_to_3:.4}"
    );
    assert!(
        improv_3_to_8 < 0.01,
        "m=3 -> m=8 improvement {improv_3_to_8:.4}"
    );
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 900.0, "took {elapsed:?}");
    println!(
        "ACCEPTANCE 3 PASS: val loss improves {:.1}% from m=1->3 (>= 2%) and {:.2}% from \
         m=3->8 (< 1%); losses {:?}, {elapsed:?} (limit 15 min)",
        improv_1_to_3 * 100.0,
        improv_3_to_8 * 100.0,
        rows.iter().map(|r| (r.m, r.best_val_loss)).collect::<Vec<_>>()
    );
}

/// Criterion 4: CAIMIRA at m=1 equals the directly implemented
/// one-dimensional predictor.
#[test]
fn acceptance_4_model_reduction_equivalence() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let n_items = 50;
    let store = random_store(&mut rng, n_items, 6);
    let mut params = random_params(&mut rng, 20, 1, 6);
    params.mean_embedding = store.mean().to_vec();
    // the directly implemented sigmoid(s - d) predictor
    let skills: Vec<f64> = (0..20).map(|i| params.agent_skills.get(i, 0)).collect();
    let difficulties: Vec<f64> = (0..n_items)
        .map(|j| params.difficulty(store.row(j))[0])
        .collect();
    let mut max_diff = 0.0f64;
    for _ in 0..10_000 {
        let agent = rng.random_range(0..20);
        let item = rng.random_range(0..n_items);
        let direct = irt1d_predict(skills[agent], difficulties[item]);
        let full = params.predict(agent, store.row(item)).unwrap();
        max_diff = max_diff.max((direct - full).abs());
    }
    assert!(max_diff <= 1e-12, "max probability difference {max_diff:e}");
    println!(
        "ACCEPTANCE 4 PASS: m=1 reduction, max |p_caimira - p_irt1d| = {max_diff:.2e} \
         over 10^4 pairs (limit 1e-12)"
    );
}

/// Criterion 5: structural invariants — relevance simplex, difficulty
/// centering, permutation invariance, checkpoint round trip.
#[test]
fn acceptance_5_structural_invariants() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n_items = 400;
    let store = random_store(&mut rng, n_items, 10);
    let mut params = random_params(&mut rng, 12, 4, 10);
    params.mean_embedding = store.mean().to_vec();

    // relevance simplex
    let mut worst_simplex = 0.0f64;
    for j in 0..n_items {
        let r = params.relevance(store.row(j));
        assert!(r.iter().all(|&v| v >= 0.0));
        worst_simplex = worst_simplex.max((r.iter().sum::<f64>() - 1.0).abs());
    }
    assert!(worst_simplex <= 1e-6);

    // difficulty centering over the store
    let mut mean_d = vec![0.0f64; 4];
    for j in 0..n_items {
        for (acc, v) in mean_d.iter_mut().zip(params.difficulty(store.row(j))) {
            *acc += v;
        }
    }
    let worst_center = mean_d
        .iter()
        .map(|v| (v / n_items as f64).abs())
        .fold(0.0, f64::max);
    assert!(worst_center <= 1e-6, "difficulty mean {worst_center:e}");

    // consistent dimension permutation leaves predictions unchanged
    let permuted = params.permute_dims(&[3, 1, 0, 2]).unwrap();
    let mut worst_perm = 0.0f64;
    for _ in 0..2000 {
        let agent = rng.random_range(0..12);
        let item = rng.random_range(0..n_items);
        let a = params.predict(agent, store.row(item)).unwrap();
        let b = permuted.predict(agent, store.row(item)).unwrap();
        worst_perm = worst_perm.max((a - b).abs());
    }
    assert!(worst_perm <= 1e-12, "permutation deviation {worst_perm:e}");

    // checkpoint round trip is bitwise on predictions
    let mut quantized = params.clone();
    quantized.quantize_f32();
    let dir = tempfile::tempdir().unwrap();
    let base = dir.path().join("model");
    Checkpoint {
        params: quantized.clone(),
        agent_ids: (0..12).map(|i| format!("a{i}")).collect(),
        item_store_ref: "store".into(),
    }
    .save(&base)
    .unwrap();
    let loaded = Checkpoint::load(&base).unwrap();
    for _ in 0..2000 {
        let agent = rng.random_range(0..12);
        let item = rng.random_range(0..n_items);
        let a = quantized.predict(agent, store.row(item)).unwrap();
        let b = loaded.params.predict(agent, store.row(item)).unwrap();
        assert_eq!(a.to_bits(), b.to_bits(), "round trip changed a prediction");
    }
    println!(
        "ACCEPTANCE 5 PASS: simplex dev {worst_simplex:.2e} (<= 1e-6), centering \
         {worst_center:.2e} (<= 1e-6), permutation dev {worst_perm:.2e} (<= 1e-12), \
         checkpoint round trip bitwise"
    );
}

fn random_history(seed: u64) -> (QuestionBank, ResponseMatrix) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_clues = rng.random_range(1..=6);
    let clues: Vec<String> = (0..n_clues).map(|i| format!("\"c{i}\"")).collect();
    let line = format!(
        "{{\"qid\":\"qq\",\"clues\":[{}],\"answer\":\"x\"}}",
        clues.join(",")
    );
    let bank = parse_question_bank(line.as_bytes()).unwrap();
    let items: Vec<String> = (1..=n_clues).map(|t| format!("qq_{t}")).collect();
    let mut matrix = ResponseMatrix::new(vec!["p".into()], items).unwrap();
    for t in 0..n_clues {
        if rng.random_bool(0.5) {
            matrix
                .insert(
                    0,
                    t,
                    MatrixEntry {
                        correct: rng.random_bool(0.5),
                        origin: Origin::Observed,
                    },
                )
                .unwrap();
        }
    }
    (bank, matrix)
}

/// Independent full-matrix DP edit distance for the fuzzy-match oracle.
fn dp_oracle_distance(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut dp = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for (i, row) in dp.iter_mut().enumerate() {
        row[0] = i;
    }
    for j in 0..=b.len() {
        dp[0][j] = j;
    }
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            let cost = usize::from(a[i - 1] != b[j - 1]);
            dp[i][j] = (dp[i - 1][j] + 1)
                .min(dp[i][j - 1] + 1)
                .min(dp[i - 1][j - 1] + cost);
        }
    }
    dp[a.len()][b.len()]
}

/// Criterion 6: pipeline fidelity — backfill properties over 10^4 random
/// histories, fuzzy match equals the DP oracle on 10^4 pairs, group tie
/// sampling hits the Monte Carlo bounds.
#[test]
fn acceptance_6_pipeline_fidelity() {
    // backfill idempotence and monotonicity
    for seed in 0..10_000u64 {
        let (bank, matrix) = random_history(seed);
        let once = backfill(&matrix, &bank).unwrap();
        let twice = backfill(&once, &bank).unwrap();
        let collect = |m: &ResponseMatrix| m.iter().collect::<Vec<_>>();
        assert_eq!(collect(&once), collect(&twice), "idempotence at seed {seed}");
        let mut prev: Option<MatrixEntry> = None;
        for t in 0..once.items().len() {
            let cur = once.get(0, t);
            if let (Some(p), Some(c)) = (prev, cur) {
                if p.correct && !c.correct {
                    assert!(
                        c.origin == Origin::Observed || p.origin == Origin::Observed,
                        "monotonicity violated at seed {seed}"
                    );
                }
            }
            if cur.is_some() {
                prev = cur;
            }
        }
    }

    // fuzzy similarity equals the independent DP oracle, exactly
    let alphabet: Vec<char> = "abcdefgé ñü日本語x".chars().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let make = |rng: &mut ChaCha8Rng, len: usize| -> String {
        (0..len)
            .map(|_| alphabet[rng.random_range(0..alphabet.len())])
            .collect()
    };
    for _ in 0..10_000 {
        let len_a = rng.random_range(0..12);
        let a = make(&mut rng, len_a);
        let len_b = rng.random_range(0..12);
        let b = make(&mut rng, len_b);
        let la = a.chars().count();
        let lb = b.chars().count();
        let expected = if la.max(lb) == 0 {
            1.0
        } else {
            1.0 - dp_oracle_distance(&a, &b) as f64 / la.max(lb) as f64
        };
        assert_eq!(similarity(&a, &b), expected, "pair {a:?} vs {b:?}");
    }

    // tie sampling rate over 10^4 seeded draws
    let mut ones = 0usize;
    for i in 0..10_000u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(0x7ea + i * 0x9e37);
        let (value, origin) = group_response(&[true, false], &mut rng);
        assert_eq!(origin, Origin::GroupSampled);
        ones += usize::from(value);
    }
    let rate = ones as f64 / 10_000.0;
    assert!((0.48..=0.52).contains(&rate), "tie rate {rate}");
    println!(
        "ACCEPTANCE 6 PASS: backfill idempotent+monotone over 10^4 histories, fuzzy match \
         equals DP oracle on 10^4 pairs exactly, tie rate {rate:.4} in [0.48, 0.52]"
    );
}

/// Adjusted Rand index between two labelings.
fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    let ka = a.iter().max().unwrap() + 1;
    let kb = b.iter().max().unwrap() + 1;
    let mut table = vec![vec![0usize; kb]; ka];
    for (&x, &y) in a.iter().zip(b) {
        table[x][y] += 1;
    }
    let comb2 = |n: usize| (n * n.saturating_sub(1)) as f64 / 2.0;
    let sum_ij: f64 = table.iter().flatten().map(|&n| comb2(n)).sum();
    let sum_a: f64 = table.iter().map(|row| comb2(row.iter().sum())).sum();
    let sum_b: f64 = (0..kb)
        .map(|j| comb2(table.iter().map(|row| row[j]).sum()))
        .sum();
    let total = comb2(a.len());
    let expected = sum_a * sum_b / total;
    let max_index = 0.5 * (sum_a + sum_b);
    (sum_ij - expected) / (max_index - expected)
}

/// Criterion 7: analysis correctness — weighted-mean recomputation oracle,
/// KMeans on planted blobs, and the published defaults.
#[test]
fn acceptance_7_analysis_correctness() {
    // weighted mean effective difficulty vs a literal recomputation
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let m = rng.random_range(2..6);
        let n = rng.random_range(5..40);
        let chars: Vec<QuestionCharacteristics> = (0..n)
            .map(|_| {
                let mut rel: Vec<f64> = (0..m).map(|_| rng.random_range(0.01..1.0)).collect();
                let s: f64 = rel.iter().sum();
                rel.iter_mut().for_each(|v| *v /= s);
                QuestionCharacteristics {
                    relevance: rel,
                    difficulty: (0..m).map(|_| rng.random_range(-3.0..3.0)).collect(),
                }
            })
            .collect();
        let cluster: Vec<usize> = (0..n).filter(|_| rng.random_bool(0.5)).collect();
        if cluster.is_empty() {
            continue;
        }
        let got = mean_effective_difficulty(&cluster, &chars);
        for k in 0..m {
            let num: f64 = cluster
                .iter()
                .map(|&j| chars[j].relevance[k] * chars[j].difficulty[k])
                .sum();
            let den: f64 = cluster.iter().map(|&j| chars[j].relevance[k]).sum();
            worst = worst.max((got[k] - num / den).abs());
        }
    }
    assert!(worst <= 1e-9, "weighted-mean deviation {worst:e}");

    // KMeans on three tight planted blobs, centers >= 1 apart
    let centers = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.5]];
    let mut data = Vec::new();
    let mut truth = Vec::new();
    for (label, c) in centers.iter().enumerate() {
        for _ in 0..60 {
            data.push(c[0] + rng.random_range(-0.01..0.01));
            data.push(c[1] + rng.random_range(-0.01..0.01));
            truth.push(label);
        }
    }
    let points = Mat::from_vec(180, 2, data).unwrap();
    let result = kmeans_cluster(&points, 3, 17).unwrap();
    let ari = adjusted_rand_index(&truth, &result.assignments);
    assert!(ari >= 0.99, "ARI {ari}");

    // published configuration defaults
    assert_eq!(DEFAULT_CLUSTER_K, 12);
    assert_eq!(DEFAULT_LABEL_THRESHOLD, 0.6);
    println!(
        "ACCEPTANCE 7 PASS: weighted-mean oracle dev {worst:.2e} (<= 1e-9), planted-blob \
         ARI {ari:.4} (>= 0.99), defaults k=12 and threshold 0.6"
    );
}

/// Criterion 8: interpretability calibration — planted sign recovery,
/// null significant-feature rate, shuffled-label accuracy.
#[test]
fn acceptance_8_interpretability_calibration() {
    // planted model sign recovery, 20 seeds x 5000 samples
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut sign_hits = 0usize;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(800 + seed);
        let n = 5000;
        let mut data = Vec::with_capacity(n * 2);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let x1: f64 = normal.sample(&mut rng);
            let x2: f64 = normal.sample(&mut rng);
            data.push(x1);
            data.push(x2);
            labels.push(rng.random_bool(caimira_core::irt::sigmoid(2.0 * x1 - x2)));
        }
        let x = Mat::from_vec(n, 2, data).unwrap();
        let res = fit_logreg_balanced(&x, &labels, &LogRegConfig::default()).unwrap();
        if res.coefficients[0] > 0.0 && res.coefficients[1] < 0.0 {
            sign_hits += 1;
        }
    }
    assert_eq!(sign_hits, 20, "sign recovery {sign_hits}/20");

    // null data: fraction of features with p < 0.05 over 200 replications
    let mut significant = 0usize;
    let mut tested = 0usize;
    let p_features = 8;
    for rep in 0..200u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(9000 + rep);
        let n = 400;
        let mut data = Vec::with_capacity(n * p_features);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            for _ in 0..p_features {
                data.push(normal.sample(&mut rng));
            }
            labels.push(rng.random_bool(0.5));
        }
        let x = Mat::from_vec(n, p_features, data).unwrap();
        let res = wald_significance(
            fit_logreg_balanced(&x, &labels, &LogRegConfig::default()).unwrap(),
        );
        for stat in res.coef_stats.iter().flatten() {
            tested += 1;
            significant += usize::from(stat.p_value < 0.05);
        }
    }
    let rate = significant as f64 / tested as f64;
    assert!(
        (0.03..=0.07).contains(&rate),
        "null significant rate {rate} over {tested} tests"
    );

    // label-shuffled balanced accuracy stays at chance
    let mut shuffled_accs = Vec::new();
    for seed in 0..5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(7000 + seed);
        let n = 5000;
        let mut data = Vec::with_capacity(n * 2);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let x1: f64 = normal.sample(&mut rng);
            let x2: f64 = normal.sample(&mut rng);
            data.push(x1);
            data.push(x2);
            labels.push(rng.random_bool(caimira_core::irt::sigmoid(2.0 * x1 - x2)));
        }
        use rand::seq::SliceRandom;
        labels.shuffle(&mut rng);
        let x = Mat::from_vec(n, 2, data).unwrap();
        let res = fit_logreg_balanced(&x, &labels, &LogRegConfig::default()).unwrap();
        assert!(
            (0.45..=0.55).contains(&res.balanced_accuracy),
            "shuffled balanced accuracy {}",
            res.balanced_accuracy
        );
        shuffled_accs.push(res.balanced_accuracy);
    }
    println!(
        "ACCEPTANCE 8 PASS: sign recovery 20/20, null significant rate {rate:.4} \
         (in 0.05 +/- 0.02), shuffled-label balanced accuracy {shuffled_accs:?} (in [0.45, 0.55])"
    );
}

/// The relevance-label threshold default is exercised against model
/// characteristics, not just the constant.
#[test]
fn acceptance_7b_label_threshold_in_use() {
    let chars = vec![
        QuestionCharacteristics {
            relevance: vec![0.65, 0.35],
            difficulty: vec![0.0, 0.0],
        },
        QuestionCharacteristics {
            relevance: vec![0.55, 0.45],
            difficulty: vec![0.0, 0.0],
        },
    ];
    let labels = relevance_labels(&chars, 0, DEFAULT_LABEL_THRESHOLD).unwrap();
    assert_eq!(labels, vec![true, false]);
}
