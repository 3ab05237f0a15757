use std::collections::BTreeMap;

use super::{PredictionSet, ProbClassifier};
use crate::data::{Dataset, GameRecord};
use crate::error::Result;
use crate::scalar::Real;

/// Always predicts a home win with probability one.
#[derive(Debug, Clone, Copy, Default)]
pub struct HomeWin;

impl<F: Real> ProbClassifier<F> for HomeWin {
    fn name(&self) -> &str {
        "homewin"
    }

    fn hyperparameters(&self) -> BTreeMap<String, serde_json::Value> {
        BTreeMap::new()
    }

    fn n_features(&self) -> Option<usize> {
        None
    }

    fn predict_row(&self, _x: &[F]) -> F {
        F::one()
    }
}

pub fn homewin_predict<F: Real>(games: &Dataset) -> Result<PredictionSet<F>> {
    let g = games.games();
    PredictionSet::new(
        "homewin",
        g.iter().map(|g| g.game_id.clone()).collect(),
        vec![F::one(); g.len()],
        g.iter().map(GameRecord::home_win).collect(),
        g.iter().map(GameRecord::score_diff).collect(),
    )
}
