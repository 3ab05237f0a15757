use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Parser, Subcommand};
use runline_core::betting::{self, QuoteSource};
use runline_core::data;
use runline_core::ensemble;
use runline_core::features::{self, stats, synth_stats};
use runline_core::metrics;
use runline_core::models::{
    self, elo_model_predict, fit_model, ModelConfig, ModelFamily, PredictionSet, ScoreMetric,
};
use runline_core::strength::{self, SdKind};
use runline_core::synth::{self, SyntheticConfig};
use runline_lab::config::reference_config;
use runline_lab::output;
use runline_lab::pipeline::{self, under_out_root};

#[derive(Parser)]
#[command(
    name = "runline-lab",
    version,
    about = "Baseball win-probability models, win-strength analysis and run-line backtests"
)]
struct Cli {
    /// Worker threads for parallel stages (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic seasons, team stats and run-line quotes.
    Synth {
        #[arg(long, default_value_t = 30)]
        teams: usize,
        #[arg(long, default_value_t = 19)]
        seasons: usize,
        #[arg(long, default_value_t = 162)]
        games_per_team: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 2001)]
        start_season: i32,
        /// Seed of the team-stat noise.
        #[arg(long, default_value_t = 1)]
        stats_seed: u64,
        /// Bookmaker margin of the quotes.
        #[arg(long, default_value_t = 0.045)]
        vig: f64,
        /// Directory for games.csv, stats.csv, latent.json and odds.csv.
        #[arg(long)]
        out: PathBuf,
    },
    /// Validate a games file and summarize it.
    Ingest {
        #[arg(long)]
        games: PathBuf,
        #[arg(long)]
        exclude_playoffs: bool,
        /// Write the validated games here (CSV, plus JSON alongside).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build the feature matrix.
    Features {
        #[arg(long)]
        games: PathBuf,
        #[arg(long)]
        stats: PathBuf,
        /// One column per line; defaults to the standard 53-column list.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        exclude_playoffs: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a model on seasons up to --last-train-season and predict the rest.
    Train {
        #[arg(long, value_parser = parse_family)]
        model: ModelFamily,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        last_train_season: i32,
        /// Games file, required for elo.
        #[arg(long)]
        games: Option<PathBuf>,
        /// Hyperparameter overrides as a JSON object.
        #[arg(long)]
        params: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Walk-forward hyperparameter search.
    Gridsearch {
        #[arg(long, value_parser = parse_family)]
        model: ModelFamily,
        /// JSON array of override objects, inline or as a file path.
        #[arg(long)]
        grid: String,
        #[arg(long)]
        features: PathBuf,
        /// Games file, required for elo.
        #[arg(long)]
        games: Option<PathBuf>,
        /// Only search seasons up to this one.
        #[arg(long)]
        last_train_season: Option<i32>,
        #[arg(long, default_value_t = 3)]
        folds: usize,
        #[arg(long, default_value = "logloss", value_parser = parse_metric)]
        metric: ScoreMetric,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Accuracy, AUROC, log-loss and Brier score of prediction files.
    Evaluate {
        #[arg(long, required = true, num_args = 1..)]
        preds: Vec<PathBuf>,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        /// Output stem; writes <stem>.csv and <stem>.json.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Probability bins, range reports and regression on score differential.
    Strength {
        #[arg(long)]
        preds: PathBuf,
        #[arg(long, default_value_t = 0.1)]
        bin_width: f64,
        #[arg(long, default_value = "sample", value_parser = parse_sd)]
        sd: SdKind,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Agreement matrix, majority-vote triplets and oracle accuracy.
    Ensemble {
        /// Prediction files, or one directory of them.
        #[arg(long, required = true, num_args = 1..)]
        preds: Vec<PathBuf>,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run-line backtest of one prediction file.
    Backtest {
        #[arg(long)]
        preds: PathBuf,
        #[arg(long)]
        odds: PathBuf,
        /// Only the naive strategy.
        #[arg(long, conflicts_with = "grid")]
        naive: bool,
        /// Cutoff grid size as <low>x<high>.
        #[arg(long, default_value = "20x20")]
        grid: String,
        #[arg(long, default_value_t = 1.0)]
        stake: f64,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the whole pipeline from a TOML config.
    Run {
        #[arg(long, required_unless_present = "print_config")]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Print the reference config with every default and exit.
        #[arg(long)]
        print_config: bool,
    },
    /// Compare two run directories value by value.
    Diff {
        a: PathBuf,
        b: PathBuf,
        #[arg(long, default_value_t = 1e-9)]
        tolerance: f64,
        /// Print the report as JSON.
        #[arg(long)]
        json: bool,
    },
}

fn parse_family(s: &str) -> Result<ModelFamily, String> {
    s.parse().map_err(|e: runline_core::Error| e.to_string())
}

fn parse_metric(s: &str) -> Result<ScoreMetric, String> {
    serde_json::from_value(serde_json::Value::String(s.to_lowercase()))
        .map_err(|_| format!("unknown metric `{s}` (logloss, brier, accuracy, auroc)"))
}

fn parse_sd(s: &str) -> Result<SdKind, String> {
    serde_json::from_value(serde_json::Value::String(s.to_lowercase()))
        .map_err(|_| format!("unknown sd kind `{s}` (sample, population)"))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot size thread pool: {e}");
            return ExitCode::FAILURE;
        }
    }
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn write_json_beside<T: serde::Serialize + ?Sized>(csv_path: &Path, value: &T) -> anyhow::Result<()> {
    let path = csv_path.with_extension("json");
    std::fs::write(&path, output::to_json(value)?).with_context(|| format!("cannot write {}", path.display()))
}

fn create_parent(path: &Path) -> anyhow::Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).with_context(|| format!("cannot create {}", parent.display()))?;
    }
    Ok(())
}

fn stdout_csv(write: impl FnOnce(&mut Vec<u8>) -> runline_core::Result<()>) -> anyhow::Result<()> {
    let mut buf = Vec::new();
    write(&mut buf)?;
    print!("{}", String::from_utf8_lossy(&buf));
    Ok(())
}

/// Directory output without a manifest: plain files, created on demand.
fn plain_dir(out: &Path) -> anyhow::Result<PathBuf> {
    let dir = under_out_root(out);
    std::fs::create_dir_all(&dir).with_context(|| format!("cannot create {}", dir.display()))?;
    Ok(dir)
}

fn save_table<T: serde::Serialize + ?Sized>(
    dir: &Path,
    stem: &str,
    write: impl FnOnce(&mut Vec<u8>) -> runline_core::Result<()>,
    value: &T,
) -> anyhow::Result<()> {
    let mut buf = Vec::new();
    write(&mut buf)?;
    let csv_path = dir.join(format!("{stem}.csv"));
    std::fs::write(&csv_path, buf).with_context(|| format!("cannot write {}", csv_path.display()))?;
    write_json_beside(&csv_path, value)
}

fn load_preds(paths: &[PathBuf]) -> anyhow::Result<Vec<PredictionSet<f64>>> {
    let mut files = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut inside: Vec<PathBuf> = std::fs::read_dir(p)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|x| x == "csv"))
                .collect();
            inside.sort();
            files.extend(inside);
        } else {
            files.push(p.clone());
        }
    }
    files
        .iter()
        .map(|f| models::load_predictions(f).with_context(|| format!("reading {}", f.display())))
        .collect()
}

fn dispatch(command: Command) -> anyhow::Result<ExitCode> {
    match command {
        Command::Synth {
            teams,
            seasons,
            games_per_team,
            seed,
            start_season,
            stats_seed,
            vig,
            out,
        } => {
            let cfg = SyntheticConfig {
                n_teams: teams,
                n_seasons: seasons,
                games_per_team,
                seed,
                start_season,
                ..Default::default()
            };
            let (games, latent) = synth::generate_synthetic(&cfg)?;
            let team_stats = synth_stats::synth_team_stats(&games, &latent, stats_seed)?;
            let quotes = betting::synth_quotes::<f64>(&games, QuoteSource::Latent(&latent), &cfg, vig)?;
            let dir = plain_dir(&out)?;
            data::save_games(&games, dir.join("games.csv"))?;
            stats::save_stats(&team_stats, dir.join("stats.csv"))?;
            betting::save_quotes(&quotes, dir.join("odds.csv"))?;
            std::fs::write(dir.join("latent.json"), output::to_json(&latent)?)?;
            println!(
                "{} games over {} seasons written to {}",
                games.len(),
                games.seasons().len(),
                dir.display()
            );
        }
        Command::Ingest {
            games,
            exclude_playoffs,
            out,
        } => {
            let data = data::ingest_games(&games, exclude_playoffs)?;
            let seasons = data.seasons();
            println!("games      {}", data.len());
            if let (Some(first), Some(last)) = (seasons.first(), seasons.last()) {
                println!("seasons    {first}-{last} ({})", seasons.len());
            }
            println!("home wins  {:.4}", data.home_win_rate());
            if let Some(out) = out {
                let out = under_out_root(&out);
                create_parent(&out)?;
                data::save_games(&data, &out)?;
                write_json_beside(&out, data.games())?;
            }
        }
        Command::Features {
            games,
            stats: stats_path,
            spec,
            exclude_playoffs,
            out,
        } => {
            let data = data::ingest_games(&games, exclude_playoffs)?;
            let store = stats::load_stats(&stats_path)?;
            let spec = match spec {
                Some(p) => features::load_spec(p)?,
                None => features::parse_spec(&features::DEFAULT_FEATURE_SPEC)?,
            };
            let m: features::FeatureMatrix<f64> = features::build_feature_matrix(&data, &store, &spec)?;
            let out = under_out_root(&out);
            create_parent(&out)?;
            features::save_matrix(&m, &out)?;
            write_json_beside(&out, &output::matrix_records(&m))?;
            println!(
                "{} rows x {} columns written to {}",
                m.n_rows(),
                m.n_cols(),
                out.display()
            );
        }
        Command::Train {
            model,
            features: features_path,
            last_train_season,
            games,
            params,
            out,
        } => {
            let overrides: serde_json::Value = match params {
                Some(text) => serde_json::from_str(&text).context("--params is not valid JSON")?,
                None => serde_json::Value::Null,
            };
            let cfg = ModelConfig::from_overrides(model, &overrides)?;
            let preds = match &cfg {
                ModelConfig::Elo(p) => {
                    let games = games.ok_or_else(|| anyhow!("--games is required for elo"))?;
                    let data = data::ingest_games(games, true)?;
                    elo_model_predict(data.games(), Some(last_train_season), p)?
                }
                _ => {
                    let m: features::FeatureMatrix<f64> = features::load_matrix(&features_path)?;
                    let (train, test) = m.split_by_season(last_train_season)?;
                    fit_model(&cfg, &train)?.predict(&test)?
                }
            }
            .with_name(model.as_str());
            let out = under_out_root(&out);
            create_parent(&out)?;
            models::save_predictions(&preds, &out)?;
            write_json_beside(&out, &output::prediction_records(&preds))?;
            let r = metrics::report(&preds)?;
            println!(
                "{model}: {} test games, accuracy {:.4}, log-loss {:.4}",
                r.n_games, r.accuracy, r.log_loss
            );
        }
        Command::Gridsearch {
            model,
            grid,
            features: features_path,
            games,
            last_train_season,
            folds,
            metric,
            out,
        } => {
            let text = if grid.trim_start().starts_with('[') {
                grid.clone()
            } else {
                std::fs::read_to_string(&grid).with_context(|| format!("cannot read {grid}"))?
            };
            let cells: Vec<serde_json::Value> =
                serde_json::from_str(&text).with_context(|| format!("{grid} is not a JSON array"))?;
            let mut m: features::FeatureMatrix<f64> = features::load_matrix(&features_path)?;
            let mut data = match games {
                Some(g) => Some(data::ingest_games(g, true)?),
                None => None,
            };
            if let Some(y) = last_train_season {
                m = m.select(|i| m.seasons()[i] <= y);
                if let Some(d) = data.take() {
                    data = Some(data::split_by_season(&d, y)?.train);
                }
            }
            let r = models::grid_search(model, &cells, &m, data.as_ref(), metric, folds)?;
            for (i, c) in r.cells.iter().enumerate() {
                let mark = if i == r.best { "*" } else { " " };
                match &c.outcome {
                    models::CellOutcome::Scored { score, .. } => {
                        println!("{mark} {i:3}  {score:.6}  {}", c.params)
                    }
                    models::CellOutcome::Failed { error } => {
                        println!("  {i:3}  failed    {}  ({error})", c.params)
                    }
                }
            }
            if let Some(out) = out {
                let out = under_out_root(&out);
                create_parent(&out)?;
                std::fs::write(&out, output::to_json(&r)?)?;
            }
        }
        Command::Evaluate {
            preds,
            threshold,
            out,
        } => {
            let sets = load_preds(&preds)?;
            let reports = sets
                .iter()
                .map(|p| metrics::report_with(p, threshold))
                .collect::<runline_core::Result<Vec<_>>>()?;
            match out {
                Some(stem) => {
                    let stem = under_out_root(&stem);
                    create_parent(&stem)?;
                    let csv_path = stem.with_extension("csv");
                    metrics::save_reports(&reports, &csv_path)?;
                    write_json_beside(&csv_path, &reports)?;
                }
                None => stdout_csv(|w| metrics::write_reports(&reports, w))?,
            }
        }
        Command::Strength {
            preds,
            bin_width,
            sd,
            out,
        } => {
            let p: PredictionSet<f64> = models::load_predictions(&preds)?;
            let bins = strength::bin_by_probability(&p, bin_width, sd)?;
            let ranges = strength::standard_report_suite(&p, sd);
            let fit = strength::prob_diff_regression(&p);
            match out {
                Some(dir) => {
                    let dir = plain_dir(&dir)?;
                    save_table(&dir, "bins", |w| strength::write_bins(&bins, w), &bins)?;
                    save_table(&dir, "ranges", |w| strength::write_ranges(&ranges, w), &ranges)?;
                    if let Ok(f) = &fit {
                        let rows = std::slice::from_ref(f);
                        save_table(&dir, "regression", |w| pipeline::write_serialized(rows, w), rows)?;
                    }
                }
                None => {
                    stdout_csv(|w| strength::write_bins(&bins, w))?;
                    println!();
                    stdout_csv(|w| strength::write_ranges(&ranges, w))?;
                }
            }
            match fit {
                Ok(f) => println!(
                    "slope {:.4}, intercept {:.4}, R^2 {:.4}",
                    f.slope, f.intercept, f.r_squared
                ),
                Err(e) => println!("regression skipped: {e}"),
            }
        }
        Command::Ensemble {
            preds,
            threshold,
            out,
        } => {
            let sets = load_preds(&preds)?;
            if sets.len() < 2 {
                bail!("ensemble analysis needs at least two prediction files");
            }
            let agreement = ensemble::agreement_matrix(&sets, threshold)?;
            let triplets = if sets.len() >= 3 {
                ensemble::triplet_table(&sets, threshold)?
            } else {
                Vec::new()
            };
            match out {
                Some(dir) => {
                    let dir = plain_dir(&dir)?;
                    save_table(
                        &dir,
                        "agreement",
                        |w| ensemble::write_agreement(&agreement, w),
                        &agreement,
                    )?;
                    if !triplets.is_empty() {
                        save_table(
                            &dir,
                            "triplets",
                            |w| ensemble::write_triplets(&triplets, w),
                            &triplets,
                        )?;
                    }
                }
                None => {
                    stdout_csv(|w| ensemble::write_agreement(&agreement, w))?;
                    if !triplets.is_empty() {
                        println!();
                        stdout_csv(|w| ensemble::write_triplets(&triplets, w))?;
                    }
                }
            }
        }
        Command::Backtest {
            preds,
            odds,
            naive,
            grid,
            stake,
            out,
        } => {
            let p: PredictionSet<f64> = models::load_predictions(&preds)?;
            let book = betting::load_quotes(&odds)?;
            let r = betting::naive_backtest(&p, &book, stake)?;
            println!(
                "naive: {} bets, profit {:.3}, return {:.2}%",
                r.n_wagered, r.total_profit, r.return_pct
            );
            let dir = out.map(|d| plain_dir(&d)).transpose()?;
            if let Some(dir) = &dir {
                std::fs::write(dir.join("naive.json"), output::to_json(&r)?)?;
            }
            if !naive {
                let (n_low, n_high) = grid
                    .split_once(['x', 'X'])
                    .and_then(|(a, b)| Some((a.trim().parse().ok()?, b.trim().parse().ok()?)))
                    .ok_or_else(|| anyhow!("--grid must look like 20x20"))?;
                let g = betting::grid_search_cutoffs(&p, &book, n_low, n_high, stake)?;
                match &dir {
                    Some(dir) => {
                        betting::save_grid(&g, dir, "grid")?;
                        std::fs::write(dir.join("grid.json"), output::to_json(&g)?)?;
                    }
                    None => stdout_csv(|w| {
                        betting::write_grid_matrix(&g.low_cutoffs, &g.high_cutoffs, &g.returns_pct, w)
                    })?,
                }
            }
        }
        Command::Run {
            config,
            out,
            print_config,
        } => {
            if print_config {
                print!("{}", reference_config());
                return Ok(ExitCode::SUCCESS);
            }
            let config = config.expect("required by clap");
            let outcome = pipeline::run_config_file(&config, out.as_deref())?;
            println!(
                "{} files written to {} (manifest.json lists their digests)",
                outcome.manifest.outputs.len(),
                outcome.out_dir.display()
            );
        }
        Command::Diff {
            a,
            b,
            tolerance,
            json,
        } => {
            let report = runline_lab::diff_runs(&a, &b, tolerance)?;
            if json {
                print!("{}", String::from_utf8_lossy(&output::to_json(&report)?));
            } else {
                print!("{}", report.render());
            }
            if !report.within_tolerance() {
                return Ok(ExitCode::FAILURE);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}
