//! Walk-forward hyperparameter search.
//!
//! Each fold validates on one season using a model trained on every earlier
//! season, so no fold ever trains on data from after its validation season.

use std::cmp::Ordering;
use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{elo_model_predict, fit_model, ModelConfig, ModelFamily, PredictionSet};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::metrics;
use crate::scalar::Real;

const TIE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreMetric {
    #[default]
    LogLoss,
    Brier,
    Accuracy,
    Auroc,
}

impl ScoreMetric {
    pub fn lower_is_better(self) -> bool {
        matches!(self, ScoreMetric::LogLoss | ScoreMetric::Brier)
    }

    pub fn score<F: Real>(self, p: &PredictionSet<F>) -> Result<f64> {
        Ok(match self {
            ScoreMetric::LogLoss => metrics::log_loss(p)?,
            ScoreMetric::Brier => metrics::brier(p)?,
            ScoreMetric::Accuracy => metrics::accuracy(p, F::of(0.5))?,
            ScoreMetric::Auroc => metrics::auroc(p)?,
        }
        .f64())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum CellOutcome {
    Scored {
        /// Mean over folds.
        score: f64,
        fold_scores: Vec<f64>,
    },
    Failed {
        error: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridCell {
    /// The overrides as supplied.
    pub params: serde_json::Value,
    /// Resolved configuration, absent if the overrides did not parse.
    pub config: Option<ModelConfig>,
    pub outcome: CellOutcome,
}

impl GridCell {
    pub fn score(&self) -> Option<f64> {
        match self.outcome {
            CellOutcome::Scored { score, .. } => Some(score),
            CellOutcome::Failed { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridSearchResult {
    pub family: ModelFamily,
    pub metric: ScoreMetric,
    /// Validation seasons, one per fold.
    pub folds: Vec<i32>,
    pub cells: Vec<GridCell>,
    /// Index into `cells`.
    pub best: usize,
}

impl GridSearchResult {
    pub fn best_cell(&self) -> &GridCell {
        &self.cells[self.best]
    }

    pub fn best_config(&self) -> &ModelConfig {
        self.cells[self.best]
            .config
            .as_ref()
            .expect("best cell is scored")
    }

    pub fn failed(&self) -> impl Iterator<Item = (usize, &GridCell)> {
        self.cells
            .iter()
            .enumerate()
            .filter(|(_, c)| matches!(c.outcome, CellOutcome::Failed { .. }))
    }
}

/// Searches `grid` (JSON objects of overrides on the family defaults) for
/// `family`. The last `n_folds` seasons of `matrix` each serve once as the
/// validation season. `games` is required for the Elo family and must cover
/// the same seasons.
pub fn grid_search<F: Real>(
    family: ModelFamily,
    grid: &[serde_json::Value],
    matrix: &FeatureMatrix<F>,
    games: Option<&Dataset>,
    metric: ScoreMetric,
    n_folds: usize,
) -> Result<GridSearchResult> {
    if grid.is_empty() {
        return Err(Error::InvalidConfig("grid search needs at least one cell".into()));
    }
    if n_folds == 0 {
        return Err(Error::InvalidConfig("grid search needs at least one fold".into()));
    }
    let seasons: Vec<i32> = match (family, games) {
        (ModelFamily::Elo, Some(g)) => g.seasons().into_iter().collect(),
        (ModelFamily::Elo, None) => {
            return Err(Error::InvalidConfig("elo grid search needs the game list".into()))
        }
        _ => matrix
            .seasons()
            .iter()
            .copied()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect(),
    };
    if seasons.len() < 2 {
        return Err(Error::InvalidSplit(
            "walk-forward validation needs at least two seasons".into(),
        ));
    }
    let folds: Vec<i32> = seasons[seasons.len() - n_folds.min(seasons.len() - 1)..].to_vec();

    let cells: Vec<GridCell> = grid
        .par_iter()
        .map(|params| {
            let config = match ModelConfig::from_overrides(family, params) {
                Ok(c) => c,
                Err(e) => {
                    return GridCell {
                        params: params.clone(),
                        config: None,
                        outcome: CellOutcome::Failed { error: e.to_string() },
                    }
                }
            };
            let outcome = match evaluate_cell(&config, matrix, games, metric, &folds) {
                Ok(fold_scores) => CellOutcome::Scored {
                    score: fold_scores.iter().sum::<f64>() / fold_scores.len() as f64,
                    fold_scores,
                },
                Err(e) => CellOutcome::Failed { error: e.to_string() },
            };
            GridCell {
                params: params.clone(),
                config: Some(config),
                outcome,
            }
        })
        .collect();

    let best = select_best(&cells, metric).ok_or_else(|| {
        Error::InvalidConfig(format!(
            "every grid cell failed; first error: {}",
            first_error(&cells)
        ))
    })?;
    Ok(GridSearchResult {
        family,
        metric,
        folds,
        cells,
        best,
    })
}

fn first_error(cells: &[GridCell]) -> String {
    cells
        .iter()
        .find_map(|c| match &c.outcome {
            CellOutcome::Failed { error } => Some(error.clone()),
            CellOutcome::Scored { .. } => None,
        })
        .unwrap_or_default()
}

fn evaluate_cell<F: Real>(
    config: &ModelConfig,
    matrix: &FeatureMatrix<F>,
    games: Option<&Dataset>,
    metric: ScoreMetric,
    folds: &[i32],
) -> Result<Vec<f64>> {
    folds
        .iter()
        .map(|&v| {
            let preds = match config {
                ModelConfig::Elo(params) => {
                    let games = games.expect("checked by caller");
                    let upto: Vec<_> = games.games().iter().filter(|g| g.season <= v).cloned().collect();
                    elo_model_predict::<F>(&upto, Some(v - 1), params)?
                }
                _ => {
                    let train = matrix.select(|i| matrix.seasons()[i] < v);
                    let valid = matrix.select(|i| matrix.seasons()[i] == v);
                    fit_model(config, &train)?.predict(&valid)?
                }
            };
            metric.score(&preds)
        })
        .collect()
}

/// Best scored cell; near-equal scores go to the lower complexity key, then
/// the earlier cell.
fn select_best(cells: &[GridCell], metric: ScoreMetric) -> Option<usize> {
    let better = |a: f64, b: f64| {
        if metric.lower_is_better() {
            a < b
        } else {
            a > b
        }
    };
    let mut best: Option<(usize, f64)> = None;
    for (i, c) in cells.iter().enumerate() {
        let Some(s) = c.score() else { continue };
        if !s.is_finite() {
            continue;
        }
        best = match best {
            None => Some((i, s)),
            Some((j, t)) => {
                let tie = (s - t).abs() <= TIE_EPS * s.abs().max(t.abs()).max(1.0);
                if tie {
                    let ci = cells[i].config.as_ref().map(ModelConfig::complexity);
                    let cj = cells[j].config.as_ref().map(ModelConfig::complexity);
                    if compare_keys(ci.as_deref(), cj.as_deref()) == Ordering::Less {
                        Some((i, s))
                    } else {
                        Some((j, t))
                    }
                } else if better(s, t) {
                    Some((i, s))
                } else {
                    Some((j, t))
                }
            }
        };
    }
    best.map(|(i, _)| i)
}

fn compare_keys(a: Option<&[f64]>, b: Option<&[f64]>) -> Ordering {
    match (a, b) {
        (Some(a), Some(b)) => a
            .iter()
            .zip(b)
            .map(|(x, y)| x.partial_cmp(y).unwrap_or(Ordering::Equal))
            .find(|o| *o != Ordering::Equal)
            .unwrap_or(Ordering::Equal),
        _ => Ordering::Equal,
    }
}
