//! Synthetic dated team statistics for a synthetic schedule.
//!
//! Talent-driven stats (OPS, ERA, ...) are a linear function of the team's
//! latent strength plus noise that shrinks as the season progresses.
//! Results-driven stats (R, RA, WP, Pythag, ELO, ...) are accumulated from the
//! games themselves. A snapshot is emitted the day before each team's game
//! day, and a final one after the season, so every lookup is lookahead-free.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use chrono::{Days, NaiveDate};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::elo::{EloParams, EloState};
use super::pythagorean;
use super::stats::StatStore;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::synth::LatentStrengths;

/// `(name, league baseline, slope per unit of strength, noise sd)`.
const TALENT: [(&str, f64, f64, f64); 11] = [
    ("OPS", 0.730, 0.060, 0.030),
    ("OBP", 0.322, 0.020, 0.012),
    ("AVG", 0.258, 0.012, 0.010),
    ("FP", 0.984, 0.003, 0.002),
    ("ERA", 4.30, -0.60, 0.40),
    ("WHIP", 1.33, -0.10, 0.06),
    ("SP-ERA", 4.40, -0.60, 0.80),
    ("SP-WHIP", 1.30, -0.10, 0.12),
    ("SP-IP", 5.70, 0.30, 0.40),
    ("SP-WPA", 0.00, 0.40, 0.50),
    ("Attend", 28000.0, 5000.0, 1500.0),
];

/// Every stat the generator emits.
pub const SYNTH_STATS: [&str; 26] = [
    "OPS", "OBP", "AVG", "FP", "ERA", "WHIP", "SP-ERA", "SP-WHIP", "SP-IP", "SP-WPA", "Attend", "ISO", "SLG",
    "R", "RA", "RD", "W-L", "WD", "WP", "Bayes", "Pythag", "Rank", "ELO", "Rest", "PrevWL", "SP-NumG",
];

const PRIOR_GAMES: f64 = 162.0;
const MAX_REST: f64 = 5.0;

#[derive(Default, Clone)]
struct Running {
    games: u32,
    wins: u32,
    runs_for: u32,
    runs_against: u32,
    last10: VecDeque<bool>,
    last_date: Option<NaiveDate>,
    prev_win: Option<bool>,
}

impl Running {
    fn wp(&self) -> f64 {
        if self.games == 0 {
            0.5
        } else {
            self.wins as f64 / self.games as f64
        }
    }
}

struct Emitter<'a> {
    store: StatStore,
    noise: Normal<f64>,
    rng: ChaCha8Rng,
    idx: BTreeMap<&'a str, usize>,
}

impl<'a> Emitter<'a> {
    fn talent_values(&mut self, values: &mut [f64], strength: f64, games: u32) {
        let shrink = 1.0 / (1.0 + games as f64 / 10.0).sqrt();
        for (name, base, slope, sd) in TALENT {
            let z = self.noise.sample(&mut self.rng);
            let mut v = base + slope * strength + sd * shrink * z;
            if matches!(name, "ERA" | "SP-ERA" | "WHIP" | "SP-WHIP" | "SP-IP" | "Attend") {
                v = v.max(0.1);
            }
            values[self.idx[name]] = v;
        }
        let ops = values[self.idx["OPS"]];
        let obp = values[self.idx["OBP"]];
        let avg = values[self.idx["AVG"]];
        let slg = (ops - obp).clamp(0.0, 1.5);
        values[self.idx["SLG"]] = slg;
        values[self.idx["ISO"]] = slg - avg;
    }

    fn set(&self, values: &mut [f64], name: &str, v: f64) {
        values[self.idx[name]] = v;
    }
}

/// Builds a stat store covering every `(team, season)` of `data`, plus a
/// final snapshot for the season before the first one so `-1` columns resolve.
pub fn synth_team_stats(data: &Dataset, latent: &LatentStrengths, seed: u64) -> Result<StatStore> {
    let mut em = Emitter {
        store: StatStore::with_stats(SYNTH_STATS),
        noise: Normal::new(0.0, 1.0).expect("unit normal"),
        rng: ChaCha8Rng::seed_from_u64(seed),
        idx: SYNTH_STATS.iter().enumerate().map(|(i, &n)| (n, i)).collect(),
    };
    let strength = |team: &str| -> Result<f64> {
        latent
            .get(team)
            .copied()
            .ok_or_else(|| Error::UnknownTeam(team.to_string()))
    };
    let seasons = data.seasons();
    let Some(&first) = seasons.first() else {
        return Ok(em.store);
    };
    let teams: BTreeSet<&str> = data
        .games()
        .iter()
        .flat_map(|g| [g.home_team.as_str(), g.away_team.as_str()])
        .collect();
    let n_stats = SYNTH_STATS.len();

    // fabricated final line of the season before the data starts
    let prior_date = NaiveDate::from_ymd_opt(first - 1, 11, 1)
        .ok_or_else(|| Error::InvalidInput(format!("season {first} out of range")))?;
    let prior_wp: BTreeMap<&str, f64> = teams
        .iter()
        .map(|&t| Ok((t, 1.0 / (1.0 + (-strength(t)?).exp()))))
        .collect::<Result<_>>()?;
    for &t in &teams {
        let s = strength(t)?;
        let mut v = vec![f64::NAN; n_stats];
        em.talent_values(&mut v, s, PRIOR_GAMES as u32);
        let wp = prior_wp[t];
        let (r, ra) = (4.5 + 0.8 * s, (4.5 - 0.8 * s).max(0.5));
        em.set(&mut v, "R", r);
        em.set(&mut v, "RA", ra);
        em.set(&mut v, "RD", PRIOR_GAMES * (r - ra));
        em.set(&mut v, "W-L", PRIOR_GAMES * (2.0 * wp - 1.0));
        em.set(&mut v, "WD", 10.0 * (2.0 * wp - 1.0));
        em.set(&mut v, "WP", wp);
        em.set(&mut v, "Bayes", wp);
        em.set(&mut v, "Pythag", pythagorean(r, ra)?);
        em.set(
            &mut v,
            "Rank",
            1.0 + prior_wp.values().filter(|&&o| o > wp).count() as f64,
        );
        em.set(&mut v, "ELO", EloParams::default().initial_rating);
        em.set(&mut v, "Rest", 1.0);
        em.set(&mut v, "PrevWL", 0.5);
        em.set(&mut v, "SP-NumG", PRIOR_GAMES / 5.0);
        em.store.push(t, first - 1, prior_date, v)?;
    }

    let params = EloParams::default();
    let mut elo: EloState<f64> = EloState::new(&params, teams.iter());
    let games = data.games();
    let mut start = 0;
    for &season in &seasons {
        let end = start + games[start..].partition_point(|g| g.season == season);
        let season_games = &games[start..end];
        start = end;
        let talent: BTreeMap<&str, f64> = season_games
            .iter()
            .flat_map(|g| [g.home_team.as_str(), g.away_team.as_str()])
            .collect::<BTreeSet<_>>()
            .into_iter()
            .map(|t| Ok((t, strength(t)?)))
            .collect::<Result<_>>()?;
        let mut state: BTreeMap<&str, Running> = talent.keys().map(|&t| (t, Running::default())).collect();

        let mut i = 0;
        while i < season_games.len() {
            let date = season_games[i].date;
            let j = i + season_games[i..].partition_point(|g| g.date == date);
            let day = &season_games[i..j];
            let playing: BTreeSet<&str> = day
                .iter()
                .flat_map(|g| [g.home_team.as_str(), g.away_team.as_str()])
                .collect();
            let as_of = date - Days::new(1);
            for &t in &playing {
                let v = snapshot(&mut em, &state, t, talent[t], elo.rating(t)?, Some(date))?;
                em.store.push(t, season, as_of, v)?;
            }
            for g in day {
                let rest = |t: &str| {
                    state[t].last_date.map_or(params.max_rest_days, |d| {
                        ((date - d).num_days() as f64).min(params.max_rest_days)
                    })
                };
                let (rh, ra) = (rest(&g.home_team), rest(&g.away_team));
                elo.apply(g, 0.0, rh, ra)?;
                for (team, won, rf, rag) in [
                    (g.home_team.as_str(), g.home_win(), g.home_score, g.away_score),
                    (g.away_team.as_str(), !g.home_win(), g.away_score, g.home_score),
                ] {
                    let st = state.get_mut(team).expect("team in season");
                    st.games += 1;
                    st.wins += won as u32;
                    st.runs_for += rf;
                    st.runs_against += rag;
                    st.last10.push_back(won);
                    if st.last10.len() > 10 {
                        st.last10.pop_front();
                    }
                    st.last_date = Some(date);
                    st.prev_win = Some(won);
                }
            }
            i = j;
        }
        let last = season_games.last().map(|g| g.date).unwrap_or(prior_date);
        let final_date = last + Days::new(1);
        for &t in talent.keys() {
            let v = snapshot(&mut em, &state, t, talent[t], elo.rating(t)?, None)?;
            em.store.push(t, season, final_date, v)?;
        }
    }
    Ok(em.store)
}

fn snapshot(
    em: &mut Emitter<'_>,
    state: &BTreeMap<&str, Running>,
    team: &str,
    strength: f64,
    elo: f64,
    next_game: Option<NaiveDate>,
) -> Result<Vec<f64>> {
    let st = &state[team];
    let mut v = vec![f64::NAN; SYNTH_STATS.len()];
    em.talent_values(&mut v, strength, st.games);
    let games = st.games as f64;
    let (r, ra) = if st.games == 0 {
        (4.5, 4.5)
    } else {
        (st.runs_for as f64 / games, st.runs_against as f64 / games)
    };
    let wp = st.wp();
    let losses = st.games - st.wins;
    let recent: i32 = st.last10.iter().map(|&w| if w { 1 } else { -1 }).sum();
    let rest = match (next_game, st.last_date) {
        (Some(next), Some(prev)) => ((next - prev).num_days() as f64).min(MAX_REST),
        _ => MAX_REST,
    };
    em.set(&mut v, "R", r);
    em.set(&mut v, "RA", ra);
    em.set(&mut v, "RD", st.runs_for as f64 - st.runs_against as f64);
    em.set(&mut v, "W-L", st.wins as f64 - losses as f64);
    em.set(&mut v, "WD", recent as f64);
    em.set(&mut v, "WP", wp);
    em.set(&mut v, "Bayes", (st.wins as f64 + 10.0) / (games + 20.0));
    em.set(
        &mut v,
        "Pythag",
        if r + ra > 0.0 { pythagorean(r, ra)? } else { 0.5 },
    );
    em.set(
        &mut v,
        "Rank",
        1.0 + state.values().filter(|o| o.wp() > wp).count() as f64,
    );
    em.set(&mut v, "ELO", elo);
    em.set(&mut v, "Rest", rest);
    em.set(&mut v, "PrevWL", st.prev_win.map_or(0.5, |w| w as u8 as f64));
    em.set(&mut v, "SP-NumG", (games / 5.0).floor());
    Ok(v)
}
