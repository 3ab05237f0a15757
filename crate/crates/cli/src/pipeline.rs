//! End-to-end run: data, features, models, evaluation, strength analysis,
//! ensembles and backtests, written to one directory with a manifest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use runline_core::betting::{self, QuoteBook, QuoteSource};
use runline_core::data::{self, Dataset};
use runline_core::ensemble;
use runline_core::features::{self, stats, synth_stats, FeatureMatrix, StatStore};
use runline_core::metrics;
use runline_core::models::{self, elo_model_predict, fit_model, ModelConfig, ModelFamily, PredictionSet};
use runline_core::strength;
use runline_core::synth::{self, LatentStrengths};
use serde::Serialize;

use crate::config::{DataSource, PipelineConfig};
use crate::manifest::{RunManifest, Timestamps, TOOL, VERSION};
use crate::output::{self, OutputTree, MANIFEST};

pub const OUT_ENV: &str = "RUNLINE_LAB_OUT";

#[derive(Debug, thiserror::Error)]
#[error("stage `{stage}` failed: {source:#}")]
pub struct StageError {
    pub stage: &'static str,
    #[source]
    pub source: anyhow::Error,
}

trait Stage<T> {
    fn stage(self, stage: &'static str) -> Result<T, StageError>;
}

impl<T, E: Into<anyhow::Error>> Stage<T> for Result<T, E> {
    fn stage(self, stage: &'static str) -> Result<T, StageError> {
        self.map_err(|e| StageError {
            stage,
            source: e.into(),
        })
    }
}

#[derive(Debug)]
pub struct RunOutcome {
    pub out_dir: PathBuf,
    pub manifest: RunManifest,
}

/// Output directory for a run: `--out`, then `RUNLINE_LAB_OUT`, then the
/// config's `output_dir`, then `runs/<name>` next to the config.
pub fn output_dir(cli_out: Option<&Path>, config: &PipelineConfig, config_dir: &Path) -> PathBuf {
    if let Some(p) = cli_out {
        return under_out_root(p);
    }
    if let Some(root) = std::env::var_os(OUT_ENV) {
        return PathBuf::from(root).join(&config.name);
    }
    config
        .output_dir
        .clone()
        .unwrap_or_else(|| config_dir.join("runs").join(&config.name))
}

/// Relative paths land under `RUNLINE_LAB_OUT` when it is set.
pub fn under_out_root(path: &Path) -> PathBuf {
    match std::env::var_os(OUT_ENV) {
        Some(root) if path.is_relative() => PathBuf::from(root).join(path),
        _ => path.to_path_buf(),
    }
}

/// Loads the config at `path`, resolves its relative paths against the
/// config's directory and runs it.
pub fn run_config_file(path: &Path, cli_out: Option<&Path>) -> Result<RunOutcome, StageError> {
    let mut config = PipelineConfig::load(path).stage("config")?;
    let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    config.resolve_paths(&dir);
    let out = output_dir(cli_out, &config, &dir);
    let mut inputs = BTreeMap::new();
    inputs.insert("config".to_string(), output::sha256_file(path).stage("config")?);
    run_pipeline(&config, &out, inputs)
}

struct Loaded {
    data: Dataset,
    stats: StatStore,
    latent: Option<LatentStrengths>,
}

fn validate(config: &PipelineConfig) -> anyhow::Result<()> {
    let mut required: Vec<(&str, &PathBuf)> = Vec::new();
    if config.data.source == DataSource::Files {
        let games = config
            .data
            .games
            .as_ref()
            .ok_or_else(|| anyhow!("data.source = \"files\" needs data.games"))?;
        let stats = config
            .data
            .stats
            .as_ref()
            .ok_or_else(|| anyhow!("data.source = \"files\" needs data.stats"))?;
        required.push(("games file", games));
        required.push(("stats file", stats));
    }
    if let Some(spec) = &config.features.spec {
        required.push(("feature spec", spec));
    }
    if config.backtest.enabled {
        match (&config.backtest.odds, config.data.source) {
            (Some(odds), _) => required.push(("odds file", odds)),
            (None, DataSource::Files) => bail!("backtest is enabled but backtest.odds is not set"),
            (None, DataSource::Synthetic) => {}
        }
    }
    for (what, path) in required {
        if !path.is_file() {
            bail!("{what} {} does not exist", path.display());
        }
    }
    if config.models.include.is_empty() {
        bail!("models.include is empty");
    }
    Ok(())
}

fn load_data(config: &PipelineConfig) -> anyhow::Result<Loaded> {
    Ok(match config.data.source {
        DataSource::Synthetic => {
            let (data, latent) = synth::generate_synthetic(&config.data.synth)?;
            let stats = synth_stats::synth_team_stats(&data, &latent, config.data.stats_seed)?;
            let data = if config.data.exclude_playoffs {
                data.without_playoffs()
            } else {
                data
            };
            Loaded {
                data,
                stats,
                latent: Some(latent),
            }
        }
        DataSource::Files => {
            let games = config.data.games.as_ref().expect("validated");
            let stats = config.data.stats.as_ref().expect("validated");
            Loaded {
                data: data::ingest_games(games, config.data.exclude_playoffs)?,
                stats: stats::load_stats(stats)?,
                latent: None,
            }
        }
    })
}

#[derive(Serialize)]
struct NaiveRow {
    model: String,
    n_games: usize,
    n_wagered: usize,
    total_staked: f64,
    total_profit: f64,
    return_pct: f64,
}

#[derive(Serialize)]
struct GridCellRow {
    index: usize,
    params: String,
    status: &'static str,
    score: Option<f64>,
    error: Option<String>,
}

/// Runs every stage of `config` into `out_dir`. `inputs` seeds the
/// manifest's input digests (the config file itself, usually).
pub fn run_pipeline(
    config: &PipelineConfig,
    out_dir: &Path,
    mut inputs: BTreeMap<String, String>,
) -> Result<RunOutcome, StageError> {
    validate(config).stage("validate")?;
    let mut out = OutputTree::create(out_dir).stage("output")?;

    // data
    let loaded = load_data(config).stage("data")?;
    for path in [
        &config.data.games,
        &config.data.stats,
        &config.features.spec,
        &config.backtest.odds,
    ]
    .into_iter()
    .flatten()
    {
        inputs.insert(
            path.display().to_string(),
            output::sha256_file(path).stage("data")?,
        );
    }
    let data = &loaded.data;
    out.table("data/games", |w| data::write_games(data, w), data.games())
        .stage("data")?;
    out.table(
        "data/stats",
        |w| stats::write_stats(&loaded.stats, w),
        &loaded.stats.rows(),
    )
    .stage("data")?;
    if let Some(latent) = &loaded.latent {
        out.json("data/latent.json", latent).stage("data")?;
    }

    // features
    let spec = match &config.features.spec {
        Some(path) => features::load_spec(path),
        None => features::parse_spec(&config.features.inline_columns()),
    }
    .stage("features")?;
    let matrix: FeatureMatrix<f64> =
        features::build_feature_matrix(data, &loaded.stats, &spec).stage("features")?;
    out.table(
        "features/matrix",
        |w| features::write_matrix(&matrix, w),
        &output::matrix_records(&matrix),
    )
    .stage("features")?;
    let seasons = data.seasons();
    let last_train = match config.split.last_train_season {
        Some(s) => s,
        None => *seasons
            .iter()
            .rev()
            .nth(1)
            .ok_or_else(|| anyhow!("need at least two seasons to split, found {}", seasons.len()))
            .stage("split")?,
    };
    let (train, test) = matrix.split_by_season(last_train).stage("split")?;
    let split = data::split_by_season(data, last_train).stage("split")?;

    // model configs, tuned if a grid is given
    let mut resolved: BTreeMap<ModelFamily, ModelConfig> = BTreeMap::new();
    for &family in &config.models.include {
        let overrides = config
            .models
            .params
            .get(&family)
            .cloned()
            .unwrap_or(serde_json::Value::Null);
        resolved.insert(
            family,
            ModelConfig::from_overrides(family, &overrides).stage("train")?,
        );
    }
    if config.gridsearch.enabled {
        for (&family, cells) in &config.gridsearch.grids {
            if !resolved.contains_key(&family) {
                continue;
            }
            let result = models::grid_search(
                family,
                cells,
                &train,
                Some(&split.train),
                config.gridsearch.metric,
                config.gridsearch.folds,
            )
            .stage("gridsearch")?;
            let rows: Vec<GridCellRow> = result
                .cells
                .iter()
                .enumerate()
                .map(|(index, c)| GridCellRow {
                    index,
                    params: c.params.to_string(),
                    status: if c.score().is_some() { "scored" } else { "failed" },
                    score: c.score(),
                    error: match &c.outcome {
                        models::CellOutcome::Failed { error } => Some(error.clone()),
                        models::CellOutcome::Scored { .. } => None,
                    },
                })
                .collect();
            out.csv(&format!("gridsearch/{family}.csv"), |w| {
                write_serialized(&rows, w)
            })
            .stage("gridsearch")?;
            out.json(&format!("gridsearch/{family}.json"), &result)
                .stage("gridsearch")?;
            resolved.insert(family, result.best_config().clone());
        }
    }

    // train and predict
    let mut preds: Vec<(ModelFamily, PredictionSet<f64>)> = Vec::new();
    for (&family, cfg) in &resolved {
        let p = match cfg {
            ModelConfig::Elo(params) => elo_model_predict(data.games(), Some(last_train), params),
            _ => fit_model(cfg, &train).and_then(|m| m.predict(&test)),
        }
        .map_err(|e| anyhow!("{family}: {e}"))
        .stage("train")?
        .with_name(family.as_str());
        out.table(
            &format!("predictions/{family}"),
            |w| models::write_predictions(&p, w),
            &output::prediction_records(&p),
        )
        .stage("train")?;
        preds.push((family, p));
    }

    // evaluate
    let reports = preds
        .iter()
        .map(|(_, p)| metrics::report_with(p, config.evaluate.threshold))
        .collect::<runline_core::Result<Vec<_>>>()
        .stage("evaluate")?;
    out.table("metrics", |w| metrics::write_reports(&reports, w), &reports)
        .stage("evaluate")?;

    // strength
    let sc = &config.strength;
    let mut ranges = Vec::new();
    let mut fits = Vec::new();
    for (family, p) in &preds {
        let bins = strength::bin_by_probability(p, sc.bin_width, sc.sd).stage("strength")?;
        out.table(
            &format!("strength/{family}_bins"),
            |w| strength::write_bins(&bins, w),
            &bins,
        )
        .stage("strength")?;
        ranges.extend(strength::standard_report_suite(p, sc.sd));
        match strength::prob_diff_regression(p) {
            Ok(f) => fits.push(f),
            Err(runline_core::Error::ConstantPredictions(_)) => {}
            Err(e) => return Err(e).stage("strength"),
        }
    }
    out.table("strength/ranges", |w| strength::write_ranges(&ranges, w), &ranges)
        .stage("strength")?;
    out.table("strength/regression", |w| write_serialized(&fits, w), &fits)
        .stage("strength")?;

    // ensemble
    if config.ensemble.enabled {
        let chosen = select(&preds, config.ensemble.models.as_deref());
        if chosen.len() >= 2 {
            let agreement =
                ensemble::agreement_matrix(&chosen, config.ensemble.threshold).stage("ensemble")?;
            out.table(
                "ensemble/agreement",
                |w| ensemble::write_agreement(&agreement, w),
                &agreement,
            )
            .stage("ensemble")?;
        }
        if chosen.len() >= 3 {
            let triplets = ensemble::triplet_table(&chosen, config.ensemble.threshold).stage("ensemble")?;
            out.table(
                "ensemble/triplets",
                |w| ensemble::write_triplets(&triplets, w),
                &triplets,
            )
            .stage("ensemble")?;
        }
    }

    // backtest
    if config.backtest.enabled {
        let bc = &config.backtest;
        let book: QuoteBook = match (&bc.odds, &loaded.latent) {
            (Some(path), _) => betting::load_quotes(path).stage("backtest")?,
            (None, Some(latent)) => betting::synth_quotes::<f64>(
                &split.test,
                QuoteSource::Latent(latent),
                &config.data.synth,
                bc.vig,
            )
            .stage("backtest")?,
            (None, None) => unreachable!("checked in validate"),
        };
        out.table(
            "backtest/odds",
            |w| betting::write_quotes(&book, w),
            book.quotes(),
        )
        .stage("backtest")?;
        let mut naive_rows = Vec::new();
        for p in select(&preds, bc.models.as_deref()) {
            let name = p.model_name().to_string();
            let naive = betting::naive_backtest(&p, &book, bc.stake).stage("backtest")?;
            naive_rows.push(NaiveRow {
                model: name.clone(),
                n_games: naive.n_games,
                n_wagered: naive.n_wagered,
                total_staked: naive.total_staked,
                total_profit: naive.total_profit,
                return_pct: naive.return_pct,
            });
            let grid =
                betting::grid_search_cutoffs(&p, &book, bc.n_low, bc.n_high, bc.stake).stage("backtest")?;
            for (suffix, cells) in [
                ("returns", &grid.returns_pct),
                ("wager_fraction", &grid.wager_fraction),
            ] {
                out.csv(&format!("backtest/{name}_grid_{suffix}.csv"), |w| {
                    betting::write_grid_matrix(&grid.low_cutoffs, &grid.high_cutoffs, cells, w)
                })
                .stage("backtest")?;
            }
            out.json(&format!("backtest/{name}_grid.json"), &grid)
                .stage("backtest")?;
        }
        out.table(
            "backtest/naive",
            |w| write_serialized(&naive_rows, w),
            &naive_rows,
        )
        .stage("backtest")?;
    }

    // manifest
    let mut seeds = BTreeMap::new();
    if config.data.source == DataSource::Synthetic {
        seeds.insert("synth".to_string(), config.data.synth.seed);
        seeds.insert("stats".to_string(), config.data.stats_seed);
    }
    for (family, cfg) in &resolved {
        if let Some(seed) = cfg
            .hyperparameters()
            .get("seed")
            .and_then(serde_json::Value::as_u64)
        {
            seeds.insert(family.to_string(), seed);
        }
    }
    let manifest = RunManifest {
        tool: TOOL.to_string(),
        version: VERSION.to_string(),
        config: serde_json::to_value(config).stage("manifest")?,
        models: resolved.iter().map(|(f, c)| (f.to_string(), c.clone())).collect(),
        seeds,
        last_train_season: last_train,
        inputs,
        outputs: out.digests().clone(),
        timestamps: Timestamps::from_env(),
    };
    let bytes = output::to_json(&manifest).stage("manifest")?;
    std::fs::write(out.root().join(MANIFEST), bytes)
        .context("cannot write manifest")
        .stage("manifest")?;
    Ok(RunOutcome {
        out_dir: out.root().to_path_buf(),
        manifest,
    })
}

fn select(
    preds: &[(ModelFamily, PredictionSet<f64>)],
    wanted: Option<&[ModelFamily]>,
) -> Vec<PredictionSet<f64>> {
    preds
        .iter()
        .filter(|(f, _)| wanted.is_none_or(|w| w.contains(f)))
        .map(|(_, p)| p.clone())
        .collect()
}

/// CSV with a header taken from the field names of `rows`.
pub fn write_serialized<T: Serialize, W: std::io::Write>(rows: &[T], writer: W) -> runline_core::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()
        .map_err(|e| runline_core::Error::InvalidInput(e.to_string()))?;
    Ok(())
}
