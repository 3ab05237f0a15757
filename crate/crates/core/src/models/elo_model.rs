use std::collections::BTreeMap;

use chrono::NaiveDate;

use super::PredictionSet;
use crate::data::GameRecord;
use crate::error::{Error, Result};
use crate::features::{EloParams, EloState};
use crate::scalar::Real;

/// Walks `games` in order, predicting each game from the pre-game ratings and
/// then updating them. Games in seasons up to `last_train_season` only warm
/// the ratings; the rest are returned. `None` returns every game.
///
/// Travel is not modelled (no venue coordinates), so the travel term is zero.
pub fn elo_model_predict<F: Real>(
    games: &[GameRecord],
    last_train_season: Option<i32>,
    params: &EloParams,
) -> Result<PredictionSet<F>> {
    if let Some(i) = games.windows(2).position(|w| w[1].date < w[0].date) {
        return Err(Error::OutOfOrder(format!(
            "game `{}` on {} follows a game on {}",
            games[i + 1].game_id,
            games[i + 1].date,
            games[i].date
        )));
    }
    let teams = games
        .iter()
        .flat_map(|g| [g.home_team.as_str(), g.away_team.as_str()]);
    let mut state: EloState<F> = EloState::new(params, teams);
    let mut last_played: BTreeMap<&str, NaiveDate> = BTreeMap::new();
    let cap = params.max_rest_days;
    let mut ids = Vec::new();
    let mut probs = Vec::new();
    let mut labels = Vec::new();
    let mut diffs = Vec::new();
    for g in games {
        let rest = |t: &str| {
            last_played
                .get(t)
                .map_or(cap, |&d| ((g.date - d).num_days() as f64).min(cap))
        };
        let (rh, ra) = (F::of(rest(&g.home_team)), F::of(rest(&g.away_team)));
        let p = state.apply(g, F::zero(), rh, ra)?;
        last_played.insert(&g.home_team, g.date);
        last_played.insert(&g.away_team, g.date);
        if last_train_season.is_none_or(|s| g.season > s) {
            ids.push(g.game_id.clone());
            probs.push(p);
            labels.push(g.home_win());
            diffs.push(g.score_diff());
        }
    }
    PredictionSet::new("elo", ids, probs, labels, diffs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::Days;

    fn game(day: u64, season: i32, home: &str, away: &str, hs: u32, as_: u32) -> GameRecord {
        GameRecord {
            game_id: format!("{season}-{day}-{home}"),
            date: NaiveDate::from_ymd_opt(season, 4, 1).unwrap() + Days::new(day),
            season,
            home_team: home.into(),
            away_team: away.into(),
            home_score: hs,
            away_score: as_,
            is_playoff: false,
        }
    }

    fn neutral() -> EloParams {
        EloParams {
            home_advantage_points: 0.0,
            rest_coeff: 0.0,
            k_factor: 0.0,
            ..Default::default()
        }
    }

    #[test]
    fn symmetric_without_adjustments() {
        let games = vec![game(0, 2019, "A", "B", 3, 1), game(1, 2019, "B", "A", 2, 1)];
        let p: PredictionSet<f64> = elo_model_predict(&games, None, &neutral()).unwrap();
        assert_eq!(p.p_home(), &[0.5, 0.5]);
    }

    #[test]
    fn home_advantage_only() {
        let params = EloParams {
            home_advantage_points: 24.0,
            ..neutral()
        };
        let games = vec![game(0, 2019, "A", "B", 3, 1), game(2, 2019, "C", "D", 0, 1)];
        let p: PredictionSet<f64> = elo_model_predict(&games, None, &params).unwrap();
        for &v in p.p_home() {
            assert!((v - 0.5345).abs() < 1e-4);
        }
    }

    #[test]
    fn hand_stepped_three_games() {
        let params = EloParams {
            k_factor: 4.0,
            ..neutral()
        };
        let games = vec![
            game(0, 2019, "A", "B", 5, 2),
            game(1, 2019, "B", "C", 1, 4),
            game(2, 2019, "A", "C", 2, 3),
        ];
        let p: PredictionSet<f64> = elo_model_predict(&games, None, &params).unwrap();
        // game 1: A 1500 vs B 1500 -> 0.5, A wins: A 1502, B 1498
        // game 2: B 1498 vs C 1500 -> 1/(1+10^(2/400)), C wins
        let e2 = 1.0 / (1.0 + 10f64.powf(2.0 / 400.0));
        let c_after = 1500.0 + 4.0 * e2;
        let e3 = 1.0 / (1.0 + 10f64.powf((c_after - 1502.0) / 400.0));
        assert_eq!(p.p_home()[0], 0.5);
        assert!((p.p_home()[1] - e2).abs() < 1e-12);
        assert!((p.p_home()[2] - e3).abs() < 1e-12);
    }

    #[test]
    fn train_seasons_warm_only() {
        let games = vec![game(0, 2018, "A", "B", 3, 1), game(0, 2019, "A", "B", 3, 1)];
        let p: PredictionSet<f64> = elo_model_predict(&games, Some(2018), &EloParams::default()).unwrap();
        assert_eq!(p.len(), 1);
        assert!(p.p_home()[0] > 0.5345);
    }

    #[test]
    fn out_of_order_rejected() {
        let games = vec![game(3, 2019, "A", "B", 3, 1), game(1, 2019, "A", "B", 3, 1)];
        assert!(matches!(
            elo_model_predict::<f64>(&games, None, &neutral()),
            Err(Error::OutOfOrder(_))
        ));
    }
}
