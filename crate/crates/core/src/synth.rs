//! Seeded generator of synthetic seasons with known latent team strengths.
//!
//! Home wins are Bernoulli draws with probability
//! `sigmoid(strength_home - strength_away + home_advantage)`. The margin is
//! `1 + Poisson(run_scale * |strength gap| + 0.8)` runs with its sign taken from
//! the winner, and the loser's score is an independent Poisson draw.

use std::collections::BTreeMap;

use chrono::{Days, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, GameRecord};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Baseline added to the Poisson rate of the winning margin.
pub const MARGIN_BASE_RATE: f64 = 0.8;
/// Mean runs scored by the losing side.
pub const LOSER_RUNS_MEAN: f64 = 3.2;
/// Days in the synthetic season calendar (April 1 through September 30).
const SEASON_DAYS: usize = 183;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub n_teams: usize,
    pub n_seasons: usize,
    pub games_per_team: usize,
    /// Log-odds units.
    pub home_advantage: f64,
    /// Standard deviation of latent strength, log-odds units.
    pub strength_spread: f64,
    /// Expected extra runs of margin per unit of strength gap.
    pub run_scale: f64,
    pub seed: u64,
    pub start_season: i32,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n_teams: 30,
            n_seasons: 19,
            games_per_team: 162,
            home_advantage: (53.1f64 / 46.9).ln(),
            strength_spread: 0.5,
            run_scale: 2.0,
            seed: 0,
            start_season: 2001,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.n_teams < 2 {
            return bad("n_teams must be at least 2");
        }
        if self.n_seasons == 0 || self.games_per_team == 0 {
            return bad("n_seasons and games_per_team must be positive");
        }
        if !(self.run_scale > 0.0) {
            return bad("run_scale must be positive");
        }
        if !(self.strength_spread >= 0.0) || !self.home_advantage.is_finite() {
            return bad("strength_spread must be >= 0 and home_advantage finite");
        }
        Ok(())
    }

    /// True probability that the home side wins given the latent strength gap.
    pub fn home_win_prob<F: Real>(&self, gap: F) -> F {
        (gap + F::of(self.home_advantage)).sigmoid()
    }

    /// Poisson rate of the winning margin beyond the first run.
    pub fn margin_rate<F: Real>(&self, gap: F) -> F {
        F::of(self.run_scale) * gap.abs() + F::of(MARGIN_BASE_RATE)
    }

    /// Probability that the home side covers `home_line` (for ±1.5 lines and
    /// any half-run line), under the generating model.
    pub fn home_cover_prob<F: Real>(&self, gap: F, home_line: F) -> F {
        let p_win = self.home_win_prob(gap);
        let rate = self.margin_rate(gap);
        // P(margin > m) where margin = 1 + Poisson(rate)
        let tail = |m: F| -> F {
            // P(1 + K > m) = P(K >= ceil(m - 1 + tiny))
            let k_min = (m - F::one()).floor() + F::one();
            if k_min <= F::zero() {
                return F::one();
            }
            let k_min = k_min.to_usize().unwrap_or(usize::MAX);
            let mut term = (-rate).exp();
            let mut cdf = F::zero();
            for k in 0..k_min {
                cdf = cdf + term;
                term = term * rate / F::count(k + 1);
            }
            (F::one() - cdf).max(F::zero())
        };
        // home covers iff margin_home + line > 0
        if home_line < F::zero() {
            p_win * tail(-home_line)
        } else {
            // wins outright, or loses by less than the line
            let lose_by_less = (F::one() - p_win) * (F::one() - tail(home_line));
            p_win + lose_by_less
        }
    }
}

/// Latent strength per team code, log-odds units.
pub type LatentStrengths = BTreeMap<String, f64>;

pub fn team_code(i: usize) -> String {
    format!("T{i:02}")
}

/// Round-robin pairings (circle method). Returns per-round lists of
/// `(a, b)` team indices; with an odd team count one team sits out per round.
fn round_robin(n_teams: usize) -> Vec<Vec<(usize, usize)>> {
    let n = n_teams + n_teams % 2;
    let bye = (n != n_teams).then_some(n - 1);
    let mut ring: Vec<usize> = (0..n).collect();
    let mut rounds = Vec::with_capacity(n - 1);
    for _ in 0..n - 1 {
        let mut pairs = Vec::with_capacity(n / 2);
        for i in 0..n / 2 {
            let (a, b) = (ring[i], ring[n - 1 - i]);
            if Some(a) != bye && Some(b) != bye {
                pairs.push((a, b));
            }
        }
        rounds.push(pairs);
        ring[1..].rotate_right(1);
    }
    rounds
}

/// Generates `n_seasons` of regular-season games and the latent strengths
/// that produced them. Fully determined by the config, including the seed.
pub fn generate_synthetic(config: &SyntheticConfig) -> Result<(Dataset, LatentStrengths)> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let strength_dist =
        Normal::new(0.0, config.strength_spread).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let strengths: Vec<f64> = (0..config.n_teams)
        .map(|_| strength_dist.sample(&mut rng))
        .collect();
    let latent: LatentStrengths = strengths
        .iter()
        .enumerate()
        .map(|(i, &s)| (team_code(i), s))
        .collect();
    let codes: Vec<String> = (0..config.n_teams).map(team_code).collect();
    let loser_runs = Poisson::new(LOSER_RUNS_MEAN).expect("positive rate");

    let rounds = round_robin(config.n_teams);
    let target = config.games_per_team;
    let mut games = Vec::with_capacity(config.n_seasons * config.n_teams * target / 2);

    for s in 0..config.n_seasons {
        let season = config.start_season + s as i32;
        let opening = NaiveDate::from_ymd_opt(season, 4, 1)
            .ok_or_else(|| Error::InvalidConfig(format!("season {season} out of range")))?;
        let mut played = vec![0usize; config.n_teams];

        // each day is one round; stop once every team reached its quota
        let mut schedule: Vec<Vec<(usize, usize)>> = Vec::new();
        let max_days = 2 * target + config.n_teams + 2;
        let mut day = 0usize;
        while played.iter().any(|&p| p < target) && day < max_days {
            let cycle = day / rounds.len();
            let mut today = Vec::new();
            for &(a, b) in &rounds[day % rounds.len()] {
                if played[a] < target && played[b] < target {
                    played[a] += 1;
                    played[b] += 1;
                    // alternate home field each time the round robin repeats
                    today.push(if (cycle + a + b).is_multiple_of(2) {
                        (a, b)
                    } else {
                        (b, a)
                    });
                }
            }
            schedule.push(today);
            day += 1;
        }

        let n_days = schedule.len();
        for (d, pairs) in schedule.iter().enumerate() {
            let offset = if n_days <= SEASON_DAYS {
                d
            } else {
                d * SEASON_DAYS / n_days
            };
            let date = opening + Days::new(offset as u64);
            for &(h, a) in pairs {
                let gap = strengths[h] - strengths[a];
                let p_home = config.home_win_prob(gap);
                let home_won = rng.random::<f64>() < p_home;
                let rate = config.margin_rate(gap);
                let extra = Poisson::new(rate).expect("positive rate").sample(&mut rng) as u32;
                let margin = 1 + extra;
                let loser = loser_runs.sample(&mut rng) as u32;
                let (home_score, away_score) = if home_won {
                    (loser + margin, loser)
                } else {
                    (loser, loser + margin)
                };
                games.push(GameRecord {
                    game_id: format!("{season}-{d:03}-{}-{}", codes[h], codes[a]),
                    date,
                    season,
                    home_team: codes[h].clone(),
                    away_team: codes[a].clone(),
                    home_score,
                    away_score,
                    is_playoff: false,
                });
            }
        }
    }
    Ok((Dataset::new(games)?, latent))
}
