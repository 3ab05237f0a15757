use runline_core::betting::{naive_backtest, read_quotes, synth_quotes, write_quotes, QuoteSource};
use runline_core::ensemble::{majority_vote, triplet_table};
use runline_core::features::synth_stats::synth_team_stats;
use runline_core::features::{build_feature_matrix, parse_spec, read_matrix, write_matrix, FeatureMatrix};
use runline_core::metrics::{accuracy, auroc, report};
use runline_core::models::{
    fit_model, read_predictions, write_predictions, LogRConfig, ModelConfig, PredictionSet,
};
use runline_core::strength::{range_report, standard_report_suite, SdKind};
use runline_core::synth::{generate_synthetic, SyntheticConfig};
use runline_core::{FeatureMatrix32, FeatureMatrix64, Predictions};

fn small_corpus(
    seed: u64,
) -> (
    runline_core::data::Dataset,
    FeatureMatrix64,
    runline_core::synth::LatentStrengths,
) {
    let config = SyntheticConfig {
        n_teams: 10,
        n_seasons: 4,
        games_per_team: 60,
        seed,
        ..SyntheticConfig::default()
    };
    let (data, latent) = generate_synthetic(&config).unwrap();
    let stats = synth_team_stats(&data, &latent, seed).unwrap();
    let spec = parse_spec(&["WP", "R-1", "RA-1", "Pythag", "Log5", "Rest"]).unwrap();
    let m = build_feature_matrix(&data, &stats, &spec).unwrap();
    (data, m, latent)
}

#[test]
fn csv_round_trips_preserve_results() {
    let (data, m, latent) = small_corpus(1);
    let mut buf = Vec::new();
    write_matrix(&m, &mut buf).unwrap();
    let back: FeatureMatrix64 = read_matrix(buf.as_slice()).unwrap();
    assert_eq!(back, m);

    let (train, test) = m.split_by_season(2002).unwrap();
    let model = fit_model(&ModelConfig::LogR(LogRConfig::default()), &train).unwrap();
    let p = model.predict(&test).unwrap();
    let mut buf = Vec::new();
    write_predictions(&p, &mut buf).unwrap();
    let p2: Predictions = read_predictions(buf.as_slice()).unwrap();
    assert_eq!(report(&p).unwrap(), report(&p2).unwrap());

    let cfg = SyntheticConfig {
        n_teams: 10,
        n_seasons: 4,
        games_per_team: 60,
        seed: 1,
        ..SyntheticConfig::default()
    };
    let book = synth_quotes::<f64>(&data, QuoteSource::Latent(&latent), &cfg, 0.045).unwrap();
    let mut buf = Vec::new();
    write_quotes(&book, &mut buf).unwrap();
    let book2 = read_quotes(buf.as_slice()).unwrap();
    assert_eq!(
        naive_backtest(&p, &book, 1.0).unwrap(),
        naive_backtest(&p2, &book2, 1.0).unwrap()
    );
}

#[test]
fn f32_pipeline_tracks_f64() {
    let (_, m, _) = small_corpus(2);
    let m32: FeatureMatrix32 = m.cast();
    let (train, test) = m.split_by_season(2002).unwrap();
    let (train32, test32) = m32.split_by_season(2002).unwrap();
    let cfg = ModelConfig::LogR(LogRConfig {
        epochs: 500,
        ..LogRConfig::default()
    });
    let p64 = fit_model(&cfg, &train).unwrap().predict(&test).unwrap();
    let p32 = fit_model(&cfg, &train32).unwrap().predict(&test32).unwrap();
    for (a, b) in p64.p_home().iter().zip(p32.p_home()) {
        assert!((a - f64::from(*b)).abs() < 1e-3, "{a} vs {b}");
    }
    let (a64, a32) = (auroc(&p64).unwrap(), auroc(&p32).unwrap());
    assert!((a64 - f64::from(a32)).abs() < 1e-2);
}

#[test]
fn symmetric_league_has_no_toss_up_edge() {
    // no home advantage: games the generator scores near 50% should split
    // evenly, so the mean score differential sits near zero
    let config = SyntheticConfig {
        home_advantage: 0.0,
        n_seasons: 6,
        seed: 9,
        ..SyntheticConfig::default()
    };
    let (data, latent) = generate_synthetic(&config).unwrap();
    let games = data.games();
    let p: Vec<f64> = games
        .iter()
        .map(|g| config.home_win_prob(latent[&g.home_team] - latent[&g.away_team]))
        .collect();
    let preds = PredictionSet::new(
        "truth",
        games.iter().map(|g| g.game_id.clone()).collect(),
        p,
        games.iter().map(|g| g.home_win()).collect(),
        games.iter().map(|g| g.score_diff()).collect(),
    )
    .unwrap();
    let r = range_report(&preds, 0.45, 0.55, SdKind::Sample).unwrap();
    let (mean, sd) = (r.mean_diff.unwrap(), r.sd_diff.unwrap());
    let se = sd / (r.n_games as f64).sqrt();
    assert!(r.n_games > 1000, "{} toss-up games", r.n_games);
    assert!(mean.abs() < 3.0 * se, "mean {mean} with SE {se}");

    let suite = standard_report_suite(&preds, SdKind::Sample);
    let hi = suite.iter().find(|r| r.low >= 0.6 && r.n_games > 0).unwrap();
    assert!(hi.mean_diff.unwrap() > mean);
}

#[test]
fn engineered_disagreement() {
    // each model is wrong on a different third of the games
    let n = 30;
    let labels: Vec<bool> = (0..n).map(|i| i % 2 == 0).collect();
    let model = |bad: usize| {
        let p = (0..n)
            .map(|i| if (i % 3 == bad) != labels[i] { 0.8 } else { 0.2 })
            .collect();
        PredictionSet::from_probs(format!("m{bad}"), p, labels.clone()).unwrap()
    };
    let preds: Vec<Predictions> = (0..3).map(model).collect();
    for p in &preds {
        assert!((accuracy(p, 0.5).unwrap() - 2.0 / 3.0).abs() < 1e-12);
    }
    let t = &triplet_table(&preds, 0.5).unwrap()[0];
    assert_eq!(t.oracle_accuracy, 1.0);
    assert_eq!(t.majority_accuracy, 1.0);
    let refs: Vec<&Predictions> = preds.iter().collect();
    let vote = majority_vote(&refs, 0.5, None).unwrap();
    assert_eq!(vote.home_pick, labels);
}

#[test]
fn anonymous_matrix_models() {
    let rows: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64, (i % 7) as f64]).collect();
    let labels: Vec<bool> = (0..40).map(|i| i >= 20).collect();
    let m = FeatureMatrix::from_rows(&rows, &labels).unwrap();
    for cfg in [
        ModelConfig::default_for("logr".parse().unwrap()),
        ModelConfig::default_for("gbdt".parse().unwrap()),
        ModelConfig::default_for("ann".parse().unwrap()),
    ] {
        let p = fit_model(&cfg, &m).unwrap().predict(&m).unwrap();
        assert!(accuracy(&p, 0.5).unwrap() >= 0.9, "{cfg:?}");
    }
}
