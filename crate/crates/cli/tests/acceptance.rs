//! Acceptance suite. Prints one line per criterion and exits non-zero if any
//! gating criterion fails. Criterion 8 needs real data and never gates:
//! set `RUNLINE_LAB_GAMES` and `RUNLINE_LAB_STATS` (optionally
//! `RUNLINE_LAB_FEATURES`) to run it.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use runline_core::betting::{
    cutoff_backtest, grid_search_cutoffs, naive_backtest, synth_quotes, QuoteSource, DEFAULT_STAKE,
};
use runline_core::data::{ingest_games, Dataset};
use runline_core::ensemble::{agreement_matrix, triplet_table};
use runline_core::features::elo::expected_score;
use runline_core::features::synth_stats::synth_team_stats;
use runline_core::features::{
    build_feature_matrix, load_spec, parse_spec, read_spec, EloParams, EloState, FeatureMatrix,
    DEFAULT_FEATURE_SPEC,
};
use runline_core::metrics::{accuracy, auroc, brier, log_loss};
use runline_core::models::{
    fit_model, Activation, AnnConfig, GbdtConfig, KnnConfig, LogRConfig, Mlp, ModelConfig, PredictionSet,
    SvmConfig, TreeNode,
};
use runline_core::strength::{bin_by_probability, prob_diff_regression, SdKind};
use runline_core::synth::{generate_synthetic, LatentStrengths, SyntheticConfig};
use runline_core::{Error, Predictions};

type Outcome = Result<String, String>;
/// Id, time budget in seconds, check.
type Criterion = (u32, u64, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($arg:tt)+) => {
        if !($cond) {
            return Err(format!($($arg)+));
        }
    };
}

fn core<T>(r: runline_core::Result<T>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

// ---------------------------------------------------------------- criterion 1

fn criterion_1() -> Outcome {
    let (n, wins) = (10_000usize, 5_315usize);
    let labels: Vec<bool> = (0..n).map(|i| i % 10_000 < wins).collect();
    let rows = vec![vec![0.0f64]; n];
    let m = core(FeatureMatrix::from_rows(&rows, &labels))?;
    let model = core(fit_model(&ModelConfig::HomeWin, &m))?;
    let p = core(model.predict(&m))?;

    let acc = core(accuracy(&p, 0.5))?;
    let auc = core(auroc(&p))?;
    let bs = core(brier(&p))?;
    let ll = core(log_loss(&p))?;
    ensure!(close(acc, 0.5315, 1e-12), "accuracy {acc}");
    ensure!(auc == 0.5, "AUROC {auc} is not exactly 0.5");
    ensure!(close(bs, 0.4685, 1e-4), "Brier {bs}");
    ensure!(close(ll, 16.182, 0.01), "log-loss {ll}");
    Ok(format!(
        "accuracy {acc:.4}, AUROC {auc:.4}, Brier {bs:.4}, log-loss {ll:.4}"
    ))
}

// ---------------------------------------------------------------- criterion 2

fn random_set(rng: &mut ChaCha8Rng, i: usize) -> Predictions {
    let n = rng.random_range(1..=50);
    // mix of coarse values (lots of ties), exact 0/1 and continuous values
    let p: Vec<f64> = (0..n)
        .map(|_| match rng.random_range(0..4) {
            0 => rng.random_range(0..=10) as f64 / 10.0,
            1 => [0.0, 1.0][rng.random_range(0..2)],
            _ => rng.random::<f64>(),
        })
        .collect();
    let base = rng.random::<f64>();
    let y: Vec<bool> = (0..n).map(|_| rng.random_bool(base)).collect();
    PredictionSet::from_probs(format!("set{i}"), p, y).expect("valid set")
}

fn oracle_accuracy(p: &[f64], y: &[bool]) -> f64 {
    let hits = p.iter().zip(y).filter(|(&q, &l)| (q >= 0.5) == l).count();
    hits as f64 / p.len() as f64
}

fn oracle_auroc(p: &[f64], y: &[bool]) -> Option<f64> {
    let (mut score, mut pairs) = (0.0, 0usize);
    for i in 0..p.len() {
        for j in 0..p.len() {
            if y[i] && !y[j] {
                pairs += 1;
                if p[i] > p[j] {
                    score += 1.0;
                } else if p[i] == p[j] {
                    score += 0.5;
                }
            }
        }
    }
    (pairs > 0).then(|| score / pairs as f64)
}

fn oracle_log_loss(p: &[f64], y: &[bool]) -> f64 {
    let eps = 1e-15;
    let total: f64 = p
        .iter()
        .zip(y)
        .map(|(&q, &l)| {
            // clamp the probability given to what happened; clamping q first
            // would make 1 - (1 - eps) round to 1.11e-15 instead of eps
            let realized = if l { q } else { 1.0 - q };
            -realized.clamp(eps, 1.0 - eps).ln()
        })
        .sum();
    total / p.len() as f64
}

fn oracle_brier(p: &[f64], y: &[bool]) -> f64 {
    p.iter()
        .zip(y)
        .map(|(&q, &l)| (q - f64::from(u8::from(l))).powi(2))
        .sum::<f64>()
        / p.len() as f64
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut single_class = 0;
    let mut worst: f64 = 0.0;
    for i in 0..200 {
        let s = random_set(&mut rng, i);
        let (p, y) = (s.p_home(), s.labels());
        let pairs = [
            ("accuracy", core(accuracy(&s, 0.5))?, oracle_accuracy(p, y)),
            ("log-loss", core(log_loss(&s))?, oracle_log_loss(p, y)),
            ("Brier", core(brier(&s))?, oracle_brier(p, y)),
        ];
        for (name, got, want) in pairs {
            ensure!(close(got, want, 1e-12), "set {i}: {name} {got} vs oracle {want}");
            worst = worst.max((got - want).abs());
        }
        match (auroc(&s), oracle_auroc(p, y)) {
            (Ok(got), Some(want)) => {
                ensure!(close(got, want, 1e-12), "set {i}: AUROC {got} vs oracle {want}");
                worst = worst.max((got - want).abs());
            }
            (Err(Error::SingleClass), None) => single_class += 1,
            (got, want) => return Err(format!("set {i}: AUROC {got:?} vs oracle {want:?}")),
        }
    }
    Ok(format!(
        "200 sets, max |diff| {worst:.1e}, {single_class} single-class sets rejected"
    ))
}

// ---------------------------------------------------------------- criterion 3

fn gaussian_rows(rng: &mut ChaCha8Rng, centre: &[f64], sd: f64, n: usize) -> Vec<Vec<f64>> {
    let noise = Normal::new(0.0, sd).expect("sd > 0");
    (0..n)
        .map(|_| centre.iter().map(|&c| c + noise.sample(rng)).collect())
        .collect()
}

fn held_out_accuracy(
    config: &ModelConfig,
    train: &FeatureMatrix<f64>,
    test: &FeatureMatrix<f64>,
) -> Result<f64, String> {
    let model = core(fit_model(config, train))?;
    core(accuracy(&core(model.predict(test))?, 0.5))
}

fn logr_separable() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut split = || {
        let mut rows = gaussian_rows(&mut rng, &[-2.0, -2.0], 0.5, 200);
        rows.extend(gaussian_rows(&mut rng, &[2.0, 2.0], 0.5, 200));
        let labels: Vec<bool> = (0..400).map(|i| i >= 200).collect();
        FeatureMatrix::from_rows(&rows, &labels)
    };
    let (train, test) = (core(split())?, core(split())?);
    let acc = held_out_accuracy(&ModelConfig::LogR(LogRConfig::default()), &train, &test)?;
    ensure!(acc >= 0.99, "LogR held-out accuracy {acc}");
    Ok(format!("LogR {:.1}%", 100.0 * acc))
}

fn minkowski(a: &[f64], b: &[f64], p: f64) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs().powf(p))
        .sum::<f64>()
        .powf(1.0 / p)
}

fn knn_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let mut checked = 0;
    for set in 0..6 {
        // even sets are continuous, odd sets sit on a small integer lattice so
        // distance ties must be broken by training index
        let lattice = set % 2 == 1;
        let point = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            (0..3)
                .map(|_| {
                    if lattice {
                        rng.random_range(0..3) as f64
                    } else {
                        rng.random_range(-1.0..1.0)
                    }
                })
                .collect()
        };
        let rows: Vec<Vec<f64>> = (0..20).map(|_| point(&mut rng)).collect();
        let labels: Vec<bool> = (0..20).map(|_| rng.random_bool(0.5)).collect();
        let m = core(FeatureMatrix::from_rows(&rows, &labels))?;
        let queries: Vec<Vec<f64>> = (0..10).map(|_| point(&mut rng)).collect();
        for p in [1.0, 2.0, 3.0] {
            for k in [1, 3, 7, 20] {
                let config = KnnConfig {
                    k,
                    p,
                    standardize: false,
                };
                let model = core(runline_core::models::knn_fit(&m, &config))?;
                for q in &queries {
                    let mut order: Vec<(f64, usize)> = rows
                        .iter()
                        .enumerate()
                        .map(|(i, r)| (minkowski(q, r, p), i))
                        .collect();
                    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                    let want: Vec<usize> = order[..k].iter().map(|&(_, i)| i).collect();
                    let got = model.neighbours(q);
                    ensure!(
                        got == want,
                        "set {set}, p {p}, k {k}: neighbours {got:?} vs oracle {want:?}"
                    );
                    let prob = want.iter().filter(|&&i| labels[i]).count() as f64 / k as f64;
                    let got_p = runline_core::models::ProbClassifier::predict_row(&model, q);
                    ensure!(
                        got_p == prob,
                        "set {set}, p {p}, k {k}: probability {got_p} vs oracle {prob}"
                    );
                    checked += 1;
                }
            }
        }
    }
    Ok(format!("KNN {checked} queries"))
}

struct SplitCandidate {
    feature: usize,
    threshold: f64,
    gain: f64,
}

/// Exhaustive first split of a one-round boosted stump under logistic loss.
fn brute_force_splits(
    rows: &[Vec<f64>],
    labels: &[bool],
    lambda: f64,
    min_child: f64,
) -> Vec<SplitCandidate> {
    let n = rows.len() as f64;
    let p0 = labels.iter().filter(|&&y| y).count() as f64 / n;
    let g: Vec<f64> = labels.iter().map(|&y| p0 - f64::from(u8::from(y))).collect();
    let h = p0 * (1.0 - p0);
    let score = |g: f64, h: f64| g * g / (h + lambda);
    let (g_tot, h_tot) = (g.iter().sum::<f64>(), h * n);
    let mut out = Vec::new();
    for f in 0..rows[0].len() {
        let mut values: Vec<f64> = rows.iter().map(|r| r[f]).collect();
        values.sort_by(f64::total_cmp);
        values.dedup();
        for w in values.windows(2) {
            let t = (w[0] + w[1]) / 2.0;
            let left: Vec<usize> = (0..rows.len()).filter(|&i| rows[i][f] <= t).collect();
            let gl: f64 = left.iter().map(|&i| g[i]).sum();
            let hl = h * left.len() as f64;
            let (gr, hr) = (g_tot - gl, h_tot - hl);
            if hl < min_child || hr < min_child {
                continue;
            }
            let gain = 0.5 * (score(gl, hl) + score(gr, hr) - score(g_tot, h_tot));
            if gain > 0.0 {
                out.push(SplitCandidate {
                    feature: f,
                    threshold: t,
                    gain,
                });
            }
        }
    }
    out
}

fn gbdt_first_split() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let config = GbdtConfig {
        rounds: 1,
        depth: 1,
        learning_rate: 1.0,
        l2_leaf: 1.0,
        min_child_weight: 1.0,
        max_bins: 256,
    };
    for set in 0..20 {
        let n = 61;
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let labels: Vec<bool> = rows
            .iter()
            .map(|r| r[set % 3] + 0.5 * rng.random_range(-1.0..1.0) > 0.0)
            .collect();
        let m = core(FeatureMatrix::from_rows(&rows, &labels))?;
        let model = core(runline_core::models::gbdt_fit(&m, &config))?;
        let candidates = brute_force_splits(&rows, &labels, config.l2_leaf, config.min_child_weight);
        let best = candidates
            .iter()
            .map(|c| c.gain)
            .fold(f64::NEG_INFINITY, f64::max);
        let tol = 1e-9 * best.abs().max(1.0);
        match model.trees()[0].root() {
            TreeNode::Split {
                feature,
                threshold,
                gain,
                ..
            } => {
                ensure!(
                    close(*gain, best, tol),
                    "set {set}: split gain {gain} vs best {best}"
                );
                let optimal = candidates.iter().any(|c| {
                    c.feature == *feature && close(c.threshold, *threshold, 1e-12) && close(c.gain, best, tol)
                });
                ensure!(
                    optimal,
                    "set {set}: split x{feature} <= {threshold} is not a best split"
                );
            }
            TreeNode::Leaf { .. } => {
                ensure!(
                    candidates.is_empty(),
                    "set {set}: no split made, oracle gain {best}"
                );
            }
        }
    }
    Ok("GBDT 20 root splits".into())
}

fn ann_gradient() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(34);
    let mut worst: f64 = 0.0;
    for activation in [Activation::Tanh, Activation::Sigmoid, Activation::Relu] {
        let config = AnnConfig {
            hidden_sizes: vec![5, 4],
            activation,
            seed: 9,
            ..AnnConfig::default()
        };
        let (n, d) = (30, 3);
        let xs: Vec<f64> = (0..n * d).map(|_| rng.random_range(-2.0..2.0)).collect();
        let labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
        let mut mlp: Mlp<f64> = core(Mlp::init(d, &config))?;
        // non-zero biases so every parameter is exercised
        let params: Vec<f64> = mlp
            .params()
            .iter()
            .map(|&w| w + rng.random_range(-0.1..0.1))
            .collect();
        core(mlp.set_params(&params))?;
        let analytic = mlp.gradient(&xs, &labels);
        let h = 1e-6;
        let mut numeric = Vec::with_capacity(params.len());
        for i in 0..params.len() {
            let mut shifted = params.clone();
            shifted[i] = params[i] + h;
            core(mlp.set_params(&shifted))?;
            let up = mlp.loss(&xs, &labels);
            shifted[i] = params[i] - h;
            core(mlp.set_params(&shifted))?;
            let down = mlp.loss(&xs, &labels);
            numeric.push((up - down) / (2.0 * h));
        }
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let diff: Vec<f64> = analytic.iter().zip(&numeric).map(|(a, b)| a - b).collect();
        let rel = norm(&diff) / (norm(&analytic) + norm(&numeric)).max(1e-12);
        ensure!(rel < 1e-4, "{activation:?}: relative gradient error {rel:.2e}");
        worst = worst.max(rel);
    }
    Ok(format!("ANN grad rel err {worst:.1e}"))
}

fn svm_xor() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(35);
    let mut split = || {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for (cx, cy) in [(-1.5, -1.5), (1.5, 1.5), (-1.5, 1.5), (1.5, -1.5)] {
            rows.extend(gaussian_rows(&mut rng, &[cx, cy], 0.4, 100));
            labels.extend(std::iter::repeat_n(cx * cy > 0.0, 100));
        }
        FeatureMatrix::from_rows(&rows, &labels)
    };
    let (train, test) = (core(split())?, core(split())?);
    let acc = held_out_accuracy(&ModelConfig::Svm(SvmConfig::default()), &train, &test)?;
    ensure!(acc >= 0.95, "SVM held-out XOR accuracy {acc}");
    Ok(format!("SVM XOR {:.1}%", 100.0 * acc))
}

fn elo_home_edge() -> Outcome {
    let want = 1.0 / (1.0 + 10f64.powf(-24.0 / 400.0));
    let state: EloState<f64> = EloState::new(&EloParams::default(), ["HOM", "AWY"]);
    let got = core(state.expected_home("HOM", "AWY", 0.0, 0.0, 0.0))?;
    let direct = expected_score(-24.0f64);
    ensure!(
        close(got, want, 1e-12) && close(direct, want, 1e-12),
        "Elo {got} / {direct} vs {want}"
    );
    ensure!(close(got, 0.5345, 1e-4), "Elo expectation {got}");
    Ok(format!("Elo {got:.4}"))
}

fn criterion_3() -> Outcome {
    let parts = [
        logr_separable(),
        knn_oracle(),
        gbdt_first_split(),
        ann_gradient(),
        svm_xor(),
        elo_home_edge(),
    ];
    let mut notes = Vec::new();
    for part in parts {
        notes.push(part?);
    }
    Ok(notes.join("; "))
}

// ---------------------------------------------------------------- criterion 4

fn default_features(
    data: &Dataset,
    latent: &LatentStrengths,
    stats_seed: u64,
) -> Result<FeatureMatrix<f64>, String> {
    let stats = core(synth_team_stats(data, latent, stats_seed))?;
    let spec = core(parse_spec(&DEFAULT_FEATURE_SPEC))?;
    core(build_feature_matrix(data, &stats, &spec))
}

fn criterion_4() -> Outcome {
    let config = SyntheticConfig {
        n_seasons: 21,
        seed: 4,
        ..SyntheticConfig::default()
    };
    let (data, latent) = core(generate_synthetic(&config))?;
    ensure!(data.len() >= 50_000, "only {} games", data.len());
    let m = default_features(&data, &latent, 4)?;
    let last_train = config.start_season + config.n_seasons as i32 / 2 - 1;
    let (train, test) = core(m.split_by_season(last_train))?;
    let model = core(fit_model(&ModelConfig::LogR(LogRConfig::default()), &train))?;
    let p = core(model.predict(&test))?;

    let fit = core(prob_diff_regression(&p))?;
    ensure!(fit.slope > 0.0, "slope {}", fit.slope);
    ensure!(
        fit.r_squared > 0.05,
        "R² {:.4} (slope {:.3})",
        fit.r_squared,
        fit.slope
    );
    let bins = core(bin_by_probability(&p, 0.1, SdKind::Sample))?;
    let means: Vec<(f64, f64, usize)> = bins
        .iter()
        .filter_map(|b| b.mean_diff.map(|m| (b.bin_center, m, b.n_games)))
        .collect();
    for w in means.windows(2) {
        ensure!(
            w[1].1 >= w[0].1,
            "bin means fall from {:.3} at {} ({} games) to {:.3} at {} ({} games)",
            w[0].1,
            w[0].0,
            w[0].2,
            w[1].1,
            w[1].0,
            w[1].2
        );
    }
    Ok(format!(
        "{} games, {} test; slope {:.3}, R² {:.3}, {} non-empty bins monotone",
        data.len(),
        p.len(),
        fit.slope,
        fit.r_squared,
        means.len()
    ))
}

// ---------------------------------------------------------------- criterion 5

fn criterion_5() -> Outcome {
    let config = SyntheticConfig {
        n_teams: 16,
        n_seasons: 8,
        games_per_team: 80,
        seed: 5,
        ..SyntheticConfig::default()
    };
    let (data, latent) = core(generate_synthetic(&config))?;
    let m = default_features(&data, &latent, 5)?;
    let (train, test) = core(m.split_by_season(config.start_season + 4))?;
    let configs = [
        ModelConfig::LogR(LogRConfig {
            epochs: 1000,
            ..LogRConfig::default()
        }),
        ModelConfig::Svm(SvmConfig {
            subsample_cap: 1500,
            seed: 5,
            ..SvmConfig::default()
        }),
        ModelConfig::Knn(KnnConfig {
            k: 50,
            ..KnnConfig::default()
        }),
        ModelConfig::Gbdt(GbdtConfig {
            rounds: 100,
            depth: 3,
            ..GbdtConfig::default()
        }),
        ModelConfig::Ann(AnnConfig {
            hidden_sizes: vec![16],
            epochs: 40,
            seed: 5,
            ..AnnConfig::default()
        }),
    ];
    let mut preds = Vec::new();
    for c in &configs {
        preds.push(core(core(fit_model(c, &train))?.predict(&test))?);
    }
    let picks: Vec<Vec<bool>> = preds
        .iter()
        .map(|p| p.p_home().iter().map(|&q| q >= 0.5).collect())
        .collect();
    let labels = test.labels();
    let acc_of =
        |pk: &[bool]| pk.iter().zip(labels).filter(|(a, b)| a == b).count() as f64 / labels.len() as f64;

    let table = core(triplet_table(&preds, 0.5))?;
    ensure!(table.len() == 10, "{} triplets, expected 10", table.len());
    let index: BTreeMap<&str, usize> = preds
        .iter()
        .enumerate()
        .map(|(i, p)| (p.model_name(), i))
        .collect();
    for t in &table {
        let ids: Vec<usize> = t.models.iter().map(|name| index[name.as_str()]).collect();
        let oracle = (0..labels.len())
            .filter(|&g| ids.iter().any(|&i| picks[i][g] == labels[g]))
            .count() as f64
            / labels.len() as f64;
        let majority = (0..labels.len())
            .filter(|&g| (ids.iter().filter(|&&i| picks[i][g]).count() >= 2) == labels[g])
            .count() as f64
            / labels.len() as f64;
        let best = t.individual_accuracy.iter().copied().fold(0.0, f64::max);
        for (k, &i) in ids.iter().enumerate() {
            ensure!(
                close(t.individual_accuracy[k], acc_of(&picks[i]), 1e-12),
                "{:?}: individual accuracy",
                t.models
            );
        }
        ensure!(
            close(t.oracle_accuracy, oracle, 1e-12),
            "{:?}: oracle {} vs {oracle}",
            t.models,
            t.oracle_accuracy
        );
        ensure!(
            close(t.majority_accuracy, majority, 1e-12),
            "{:?}: majority {} vs {majority}",
            t.models,
            t.majority_accuracy
        );
        ensure!(
            best <= t.oracle_accuracy && t.oracle_accuracy <= 1.0,
            "{:?}: oracle below best member",
            t.models
        );
        ensure!(
            t.majority_accuracy <= t.oracle_accuracy,
            "{:?}: majority above oracle",
            t.models
        );
    }

    let copies: Vec<Predictions> = ["a", "b", "c"]
        .iter()
        .map(|n| preds[0].clone().with_name(*n))
        .collect();
    let same = core(triplet_table(&copies, 0.5))?;
    let solo = acc_of(&picks[0]);
    ensure!(
        same.len() == 1
            && close(same[0].oracle_accuracy, solo, 1e-12)
            && close(same[0].majority_accuracy, solo, 1e-12),
        "identical models: {same:?} vs accuracy {solo}"
    );

    let agree = core(agreement_matrix(&preds, 0.5))?;
    for i in 0..preds.len() {
        ensure!(
            agree.agree_fraction[i][i] == 1.0,
            "agreement diagonal {}",
            agree.agree_fraction[i][i]
        );
        for j in 0..preds.len() {
            ensure!(
                agree.agree_fraction[i][j] == agree.agree_fraction[j][i],
                "agreement not symmetric at ({i}, {j})"
            );
        }
    }
    let top = table.iter().map(|t| t.oracle_accuracy).fold(0.0, f64::max);
    Ok(format!(
        "{} test games, 10 triplets, best oracle {:.3}",
        labels.len(),
        top
    ))
}

// ---------------------------------------------------------------- criterion 6

/// Probabilities from the generator itself, optionally with noise in log-odds.
fn latent_predictions(
    data: &Dataset,
    latent: &LatentStrengths,
    config: &SyntheticConfig,
    noise: f64,
    rng: &mut ChaCha8Rng,
) -> Predictions {
    let normal = Normal::new(0.0, noise.max(1e-300)).expect("sd > 0");
    let games = data.games();
    let p = games
        .iter()
        .map(|g| {
            let gap = latent[&g.home_team] - latent[&g.away_team];
            let z = gap + config.home_advantage + if noise > 0.0 { normal.sample(rng) } else { 0.0 };
            1.0 / (1.0 + (-z).exp())
        })
        .collect();
    PredictionSet::new(
        "latent",
        games.iter().map(|g| g.game_id.clone()).collect(),
        p,
        games.iter().map(|g| g.home_win()).collect(),
        games.iter().map(|g| g.score_diff()).collect(),
    )
    .expect("valid predictions")
}

fn criterion_6() -> Outcome {
    // (a) and (b): a noisy but informative predictor against a vigged market
    let config = SyntheticConfig {
        n_seasons: 3,
        seed: 60,
        ..SyntheticConfig::default()
    };
    let (data, latent) = core(generate_synthetic(&config))?;
    let mut rng = ChaCha8Rng::seed_from_u64(60);
    let preds = latent_predictions(&data, &latent, &config, 0.3, &mut rng);
    let quotes = core(synth_quotes::<f64>(
        &data,
        QuoteSource::Latent(&latent),
        &config,
        0.045,
    ))?;
    let naive = core(naive_backtest(&preds, &quotes, DEFAULT_STAKE))?;
    let at_half = core(cutoff_backtest(&preds, &quotes, 0.5, 0.5, DEFAULT_STAKE))?;
    let grid = core(grid_search_cutoffs(&preds, &quotes, 20, 20, DEFAULT_STAKE))?;
    let (i, j) = grid.naive_cell();
    ensure!(
        grid.low_cutoffs[i] == 0.5 && grid.high_cutoffs[j] == 0.5,
        "naive cell at ({}, {})",
        grid.low_cutoffs[i],
        grid.high_cutoffs[j]
    );
    ensure!(
        grid.returns_pct[i][j].to_bits() == naive.return_pct.to_bits() && at_half == naive,
        "(a) cell (0.5, 0.5) {} vs naive {}",
        grid.returns_pct[i][j],
        naive.return_pct
    );
    ensure!(
        grid.wager_fraction[i][j] == 1.0,
        "(a) naive cell wagers {}",
        grid.wager_fraction[i][j]
    );

    let cells = grid.returns_pct.iter().map(Vec::len).sum::<usize>();
    ensure!(cells == 400, "(b) {cells} cells");
    let wf = &grid.wager_fraction;
    for a in 0..wf.len() {
        for b in 0..wf[a].len() {
            ensure!(
                (0.0..=1.0).contains(&wf[a][b]),
                "(b) wager fraction {} at ({a}, {b})",
                wf[a][b]
            );
            ensure!(
                a == 0 || wf[a][b] >= wf[a - 1][b],
                "(b) wager fraction falls as low cutoff rises at ({a}, {b})"
            );
            ensure!(
                b == 0 || wf[a][b] <= wf[a][b - 1],
                "(b) wager fraction rises with high cutoff at ({a}, {b})"
            );
            ensure!(
                grid.empty[a][b] == (wf[a][b] == 0.0),
                "(b) empty flag at ({a}, {b})"
            );
        }
    }

    // (c) fair market, true probabilities: mean naive return over 20 seeds
    let mut returns = Vec::new();
    for seed in 0..20u64 {
        let config = SyntheticConfig {
            seed: 600 + seed,
            ..SyntheticConfig::default()
        };
        let (data, latent) = core(generate_synthetic(&config))?;
        let preds = latent_predictions(&data, &latent, &config, 0.0, &mut rng);
        let quotes = core(synth_quotes::<f64>(
            &data,
            QuoteSource::Latent(&latent),
            &config,
            0.0,
        ))?;
        returns.push(core(naive_backtest(&preds, &quotes, DEFAULT_STAKE))?.return_pct);
    }
    let n = returns.len() as f64;
    let mean = returns.iter().sum::<f64>() / n;
    let sd = (returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let se = sd / n.sqrt();
    ensure!(
        mean.abs() <= 3.0 * se,
        "(c) fair-market mean return {mean:.3}% with SE {se:.3}%"
    );

    // (d) vigged market, coin-flip predictor, pooled over 20 seeds
    let vig = 0.045;
    let expected = -100.0 * vig / (1.0 + vig);
    let (mut staked, mut profit) = (0.0, 0.0);
    for seed in 0..20u64 {
        let config = SyntheticConfig {
            seed: 700 + seed,
            ..SyntheticConfig::default()
        };
        let (data, latent) = core(generate_synthetic(&config))?;
        let games = data.games();
        let coin = PredictionSet::new(
            "coin",
            games.iter().map(|g| g.game_id.clone()).collect(),
            games.iter().map(|_| rng.random::<f64>()).collect(),
            games.iter().map(|g| g.home_win()).collect(),
            games.iter().map(|g| g.score_diff()).collect(),
        )
        .expect("valid predictions");
        let quotes = core(synth_quotes::<f64>(
            &data,
            QuoteSource::Latent(&latent),
            &config,
            vig,
        ))?;
        let r = core(naive_backtest(&coin, &quotes, DEFAULT_STAKE))?;
        staked += r.total_staked;
        profit += r.total_profit;
    }
    let pooled = 100.0 * profit / staked;
    ensure!(
        close(pooled, expected, 1.0),
        "(d) no-skill return {pooled:.3}% vs {expected:.3}%"
    );
    Ok(format!(
        "(a) naive {:.3}% bit-exact, (b) 400 cells monotone, (c) fair mean {mean:.3}% ± {se:.3}%, \
         (d) {pooled:.3}% vs {expected:.3}% over {staked:.0} bets",
        naive.return_pct
    ))
}

// ---------------------------------------------------------------- criterion 7

fn demo_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/demo.toml")
}

fn tree_files(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).expect("readable run directory") {
            let path = entry.expect("directory entry").path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).expect("under root").to_path_buf();
                out.insert(rel, std::fs::read(&path).expect("readable output"));
            }
        }
    }
    out
}

fn criterion_7() -> Outcome {
    let dirs = [
        tempfile::tempdir().map_err(|e| e.to_string())?,
        tempfile::tempdir().map_err(|e| e.to_string())?,
    ];
    let mut trees = Vec::new();
    for d in &dirs {
        let out = d.path().join("run");
        runline_lab::run_config_file(&demo_config(), Some(&out)).map_err(|e| e.to_string())?;
        trees.push(tree_files(&out));
    }
    let (a, b) = (&trees[0], &trees[1]);
    ensure!(a.len() > 1, "run wrote {} files", a.len());
    ensure!(
        a.keys().eq(b.keys()),
        "file sets differ: {:?}",
        a.keys()
            .filter(|k| !b.contains_key(*k))
            .chain(b.keys().filter(|k| !a.contains_key(*k)))
            .collect::<Vec<_>>()
    );
    let differing: Vec<_> = a
        .iter()
        .filter(|(k, v)| b[*k] != **v)
        .map(|(k, _)| k.display().to_string())
        .collect();
    ensure!(differing.is_empty(), "files differ: {differing:?}");
    let bytes: usize = a.values().map(Vec::len).sum();
    Ok(format!("{} files, {bytes} bytes identical", a.len()))
}

// ---------------------------------------------------------------- criterion 8

fn criterion_8() -> Option<Outcome> {
    let games = std::env::var_os("RUNLINE_LAB_GAMES")?;
    let stats = std::env::var_os("RUNLINE_LAB_STATS")?;
    Some((|| {
        let data = core(ingest_games(&games, true))?;
        let store = core(runline_core::features::stats::load_stats(&stats))?;
        let spec = match std::env::var_os("RUNLINE_LAB_FEATURES") {
            Some(path) => core(load_spec(path))?,
            None => core(read_spec(DEFAULT_FEATURE_SPEC.join("\n").as_bytes()))?,
        };
        let m: FeatureMatrix<f64> = core(build_feature_matrix(&data, &store, &spec))?;
        let (train, test) = core(m.split_by_season(2015))?;
        let test = test.select(|i| (2016..=2019).contains(&test.seasons()[i]));
        let model = core(fit_model(&ModelConfig::LogR(LogRConfig::default()), &train))?;
        let acc = core(accuracy(&core(model.predict(&test))?, 0.5))?;
        ensure!(close(acc, 0.6294, 0.02), "LogR 2016-2019 accuracy {acc:.4}");
        Ok(format!(
            "LogR 2016-2019 accuracy {acc:.4} on {} games",
            test.n_rows()
        ))
    })())
}

// ---------------------------------------------------------------- harness

fn run(id: u32, budget: Duration, f: fn() -> Outcome) -> bool {
    let start = Instant::now();
    let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
        let msg = e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        Err(format!("panicked: {msg}"))
    });
    let elapsed = start.elapsed();
    let result = match result {
        Ok(_) if elapsed > budget => Err(format!("took {elapsed:.2?}, budget {budget:?}")),
        r => r,
    };
    match &result {
        Ok(detail) => println!("criterion {id}: PASS  {detail}  [{elapsed:.2?}]"),
        Err(detail) => println!("criterion {id}: FAIL  {detail}  [{elapsed:.2?}]"),
    }
    result.is_ok()
}

fn main() {
    let criteria: [Criterion; 7] = [
        (1, 1, criterion_1),
        (2, 10, criterion_2),
        (3, 120, criterion_3),
        (4, 120, criterion_4),
        (5, 30, criterion_5),
        (6, 60, criterion_6),
        (7, 300, criterion_7),
    ];
    let mut ok = true;
    for (id, secs, f) in criteria {
        ok &= run(id, Duration::from_secs(secs), f);
    }
    let start = Instant::now();
    match criterion_8() {
        None => {
            println!("criterion 8: SKIP  set RUNLINE_LAB_GAMES and RUNLINE_LAB_STATS to run (non-gating)")
        }
        Some(Ok(detail)) => println!(
            "criterion 8: PASS  {detail}  [{:.2?}] (non-gating)",
            start.elapsed()
        ),
        Some(Err(detail)) => println!(
            "criterion 8: FAIL  {detail}  [{:.2?}] (non-gating)",
            start.elapsed()
        ),
    }
    if !ok {
        std::process::exit(1);
    }
}
