//! Elo ratings with linear home-field, rest and travel adjustments.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::GameRecord;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Elo configuration. Only the 24-point home advantage is an established value;
/// the travel and rest coefficients are placeholders meant for tuning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EloParams {
    pub k_factor: f64,
    pub home_advantage_points: f64,
    /// Points per 1000 km travelled by the away side.
    pub travel_coeff: f64,
    /// Points per day of rest advantage.
    pub rest_coeff: f64,
    pub initial_rating: f64,
    /// Rest days are capped here (season openers would otherwise count the winter).
    pub max_rest_days: f64,
}

impl Default for EloParams {
    fn default() -> Self {
        EloParams {
            k_factor: 4.0,
            home_advantage_points: 24.0,
            travel_coeff: 1.0,
            rest_coeff: 2.3,
            initial_rating: 1500.0,
            max_rest_days: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EloState<F: Real> {
    pub ratings: BTreeMap<String, F>,
    pub k_factor: F,
    pub home_advantage_points: F,
    pub travel_coeff: F,
    pub rest_coeff: F,
}

impl<F: Real> EloState<F> {
    /// Every team starts at `params.initial_rating`.
    pub fn new<S: AsRef<str>>(params: &EloParams, teams: impl IntoIterator<Item = S>) -> Self {
        EloState {
            ratings: teams
                .into_iter()
                .map(|t| (t.as_ref().to_string(), F::of(params.initial_rating)))
                .collect(),
            k_factor: F::of(params.k_factor),
            home_advantage_points: F::of(params.home_advantage_points),
            travel_coeff: F::of(params.travel_coeff),
            rest_coeff: F::of(params.rest_coeff),
        }
    }

    pub fn rating(&self, team: &str) -> Result<F> {
        self.ratings
            .get(team)
            .copied()
            .ok_or_else(|| Error::UnknownTeam(team.to_string()))
    }

    /// Rating-point adjustment in the home side's favour.
    pub fn adjustment(&self, travel_km: F, rest_days_home: F, rest_days_away: F) -> F {
        self.home_advantage_points + self.rest_coeff * (rest_days_home - rest_days_away)
            - self.travel_coeff * (travel_km / F::of(1000.0))
    }

    /// Expected home score `1 / (1 + 10^((R_away - R_home - adj) / 400))`.
    pub fn expected_home(
        &self,
        home: &str,
        away: &str,
        travel_km: F,
        rest_days_home: F,
        rest_days_away: F,
    ) -> Result<F> {
        let diff = self.rating(away)?
            - self.rating(home)?
            - self.adjustment(travel_km, rest_days_home, rest_days_away);
        Ok(expected_score(diff))
    }

    /// Updates ratings in place from a finished game and returns the
    /// pre-game home expectation. Points move zero-sum between the two teams.
    pub fn apply(
        &mut self,
        game: &GameRecord,
        travel_km: F,
        rest_days_home: F,
        rest_days_away: F,
    ) -> Result<F> {
        let expected = self.expected_home(
            &game.home_team,
            &game.away_team,
            travel_km,
            rest_days_home,
            rest_days_away,
        )?;
        let actual = if game.home_win() { F::one() } else { F::zero() };
        let delta = self.k_factor * (actual - expected);
        *self.ratings.get_mut(&game.home_team).expect("checked") = self.ratings[&game.home_team] + delta;
        *self.ratings.get_mut(&game.away_team).expect("checked") = self.ratings[&game.away_team] - delta;
        Ok(expected)
    }
}

/// `1 / (1 + 10^(diff / 400))`: expected score of the side `diff` points stronger
/// than its opponent is the complement.
pub fn expected_score<F: Real>(diff: F) -> F {
    F::one() / (F::one() + F::of(10.0).powf(diff / F::of(400.0)))
}

/// Returns the state after one game.
pub fn elo_update<F: Real>(
    state: &EloState<F>,
    game: &GameRecord,
    travel_km: F,
    rest_days_home: F,
    rest_days_away: F,
) -> Result<EloState<F>> {
    let mut next = state.clone();
    next.apply(game, travel_km, rest_days_home, rest_days_away)?;
    Ok(next)
}
