//! Run-line bet settlement, cutoff strategies and the cutoff grid backtest.

use std::collections::HashMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, GameRecord};
use crate::error::{Error, Result};
use crate::models::PredictionSet;
use crate::scalar::Real;
use crate::synth::{LatentStrengths, SyntheticConfig};

pub const DEFAULT_GRID: usize = 20;
pub const DEFAULT_STAKE: f64 = 1.0;
/// Run line given to the favourite.
pub const FAVOURITE_LINE: f64 = -1.5;
/// Largest implied probability a synthetic quote will carry.
const MAX_IMPLIED: f64 = 0.99;

/// Profit per unit staked on a winning bet at American `odds`.
pub fn payout_ratio(odds: i32) -> Result<f64> {
    if odds.unsigned_abs() < 100 {
        return Err(Error::InvalidOdds(odds));
    }
    Ok(if odds > 0 {
        odds as f64 / 100.0
    } else {
        100.0 / -(odds as f64)
    })
}

/// American odds whose implied probability is `pi`, rounded to the nearest
/// integer.
pub fn american_odds(pi: f64) -> i32 {
    let raw = if pi >= 0.5 {
        -100.0 * pi / (1.0 - pi)
    } else {
        100.0 * (1.0 - pi) / pi
    };
    let o = raw.round() as i32;
    if o.abs() < 100 {
        if o < 0 {
            -100
        } else {
            100
        }
    } else {
        o
    }
}

pub fn implied_probability(odds: i32) -> Result<f64> {
    Ok(1.0 / (1.0 + payout_ratio(odds)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLineQuote {
    pub game_id: String,
    pub home_line: f64,
    pub home_odds: i32,
    pub away_line: f64,
    pub away_odds: i32,
}

impl RunLineQuote {
    pub fn validate(&self) -> Result<()> {
        payout_ratio(self.home_odds)?;
        payout_ratio(self.away_odds)?;
        if !self.home_line.is_finite() || self.away_line != -self.home_line {
            return Err(Error::InvalidInput(format!(
                "quote `{}`: away line {} is not the negated home line {}",
                self.game_id, self.away_line, self.home_line
            )));
        }
        Ok(())
    }
}

/// Quotes indexed by game id, kept in insertion order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct QuoteBook {
    quotes: Vec<RunLineQuote>,
    index: HashMap<String, usize>,
}

impl QuoteBook {
    pub fn new(quotes: Vec<RunLineQuote>) -> Result<Self> {
        let mut index = HashMap::with_capacity(quotes.len());
        for (i, q) in quotes.iter().enumerate() {
            q.validate()?;
            if index.insert(q.game_id.clone(), i).is_some() {
                return Err(Error::DuplicateGameId(q.game_id.clone()));
            }
        }
        Ok(QuoteBook { quotes, index })
    }

    pub fn get(&self, game_id: &str) -> Option<&RunLineQuote> {
        self.index.get(game_id).map(|&i| &self.quotes[i])
    }

    pub fn quotes(&self) -> &[RunLineQuote] {
        &self.quotes
    }

    pub fn len(&self) -> usize {
        self.quotes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.quotes.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Home,
    Away,
    Abstain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetOutcome {
    pub game_id: String,
    pub side: Side,
    pub stake: f64,
    /// Negative for a loss, zero for a push or abstention.
    pub profit: f64,
}

fn settle_diff(quote: &RunLineQuote, score_diff: i32, side: Side, stake: f64) -> Result<BetOutcome> {
    let abstain = BetOutcome {
        game_id: quote.game_id.clone(),
        side: Side::Abstain,
        stake: 0.0,
        profit: 0.0,
    };
    let (margin, odds) = match side {
        Side::Abstain => return Ok(abstain),
        Side::Home => (score_diff as f64 + quote.home_line, quote.home_odds),
        Side::Away => (-score_diff as f64 + quote.away_line, quote.away_odds),
    };
    if !(stake > 0.0 && stake.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "stake must be positive, got {stake}"
        )));
    }
    let profit = if margin > 0.0 {
        stake * payout_ratio(odds)?
    } else if margin < 0.0 {
        -stake
    } else {
        0.0
    };
    Ok(BetOutcome {
        game_id: quote.game_id.clone(),
        side,
        stake,
        profit,
    })
}

/// Settles one bet against the final score. A side covers when its score
/// margin plus its line is positive; landing exactly on the line is a push.
pub fn settle(quote: &RunLineQuote, game: &GameRecord, side: Side, stake: f64) -> Result<BetOutcome> {
    if quote.game_id != game.game_id {
        return Err(Error::InvalidInput(format!(
            "quote for `{}` used to settle game `{}`",
            quote.game_id, game.game_id
        )));
    }
    settle_diff(quote, game.score_diff(), side, stake)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestResult {
    /// Total profit over total staked, percent; 0 when nothing was staked.
    pub return_pct: f64,
    /// Wagered games over all games.
    pub wager_fraction: f64,
    pub n_games: usize,
    pub n_wagered: usize,
    pub total_staked: f64,
    pub total_profit: f64,
    /// No game was wagered.
    pub empty: bool,
    pub outcomes: Vec<BetOutcome>,
}

fn run<F: Real>(
    preds: &PredictionSet<F>,
    quotes: &QuoteBook,
    stake: f64,
    decide: impl Fn(f64) -> Side,
) -> Result<BacktestResult> {
    let mut outcomes = Vec::with_capacity(preds.len());
    let (mut staked, mut profit, mut wagered) = (0.0, 0.0, 0usize);
    for ((id, &p), &diff) in preds
        .game_ids()
        .iter()
        .zip(preds.p_home())
        .zip(preds.score_diff())
    {
        let quote = quotes.get(id).ok_or_else(|| Error::MissingQuote(id.clone()))?;
        let o = settle_diff(quote, diff, decide(p.f64()), stake)?;
        if o.side != Side::Abstain {
            wagered += 1;
            staked += o.stake;
            profit += o.profit;
        }
        outcomes.push(o);
    }
    let n = preds.len();
    Ok(BacktestResult {
        return_pct: if wagered == 0 {
            0.0
        } else {
            100.0 * profit / staked
        },
        wager_fraction: if n == 0 { 0.0 } else { wagered as f64 / n as f64 },
        n_games: n,
        n_wagered: wagered,
        total_staked: staked,
        total_profit: profit,
        empty: wagered == 0,
        outcomes,
    })
}

/// Bets every game on the predicted winner, home when `p >= 0.5`.
pub fn naive_backtest<F: Real>(
    preds: &PredictionSet<F>,
    quotes: &QuoteBook,
    stake: f64,
) -> Result<BacktestResult> {
    run(preds, quotes, stake, |p| {
        if p >= 0.5 {
            Side::Home
        } else {
            Side::Away
        }
    })
}

/// Bets home when `p >= high`, away when `p <= low`, and skips the rest.
pub fn cutoff_backtest<F: Real>(
    preds: &PredictionSet<F>,
    quotes: &QuoteBook,
    low: f64,
    high: f64,
    stake: f64,
) -> Result<BacktestResult> {
    if !((0.0..=0.5).contains(&low) && (0.5..=1.0).contains(&high)) {
        return Err(Error::InvalidInput(format!(
            "cutoffs need 0 <= low <= 0.5 <= high <= 1, got low {low}, high {high}"
        )));
    }
    run(preds, quotes, stake, |p| {
        if p >= high {
            Side::Home
        } else if p <= low {
            Side::Away
        } else {
            Side::Abstain
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestGrid {
    /// Ascending, ending at 0.5.
    pub low_cutoffs: Vec<f64>,
    /// Ascending, starting at 0.5.
    pub high_cutoffs: Vec<f64>,
    /// `returns_pct[i][j]` for `low_cutoffs[i]` and `high_cutoffs[j]`.
    pub returns_pct: Vec<Vec<f64>>,
    pub wager_fraction: Vec<Vec<f64>>,
    pub empty: Vec<Vec<bool>>,
}

impl BacktestGrid {
    /// Cell where both cutoffs are 0.5.
    pub fn naive_cell(&self) -> (usize, usize) {
        (self.low_cutoffs.len() - 1, 0)
    }
}

/// `n` equally spaced low cutoffs from 0 to 0.5; a single cutoff is 0.5.
pub fn low_cutoffs(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.5];
    }
    (0..n).map(|i| 0.5 * i as f64 / (n - 1) as f64).collect()
}

/// `n` equally spaced high cutoffs from 0.5 to 1; a single cutoff is 0.5.
pub fn high_cutoffs(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.5];
    }
    (0..n).map(|j| 0.5 + 0.5 * j as f64 / (n - 1) as f64).collect()
}

/// Backtests every pair of low and high cutoffs.
pub fn grid_search_cutoffs<F: Real>(
    preds: &PredictionSet<F>,
    quotes: &QuoteBook,
    n_low: usize,
    n_high: usize,
    stake: f64,
) -> Result<BacktestGrid> {
    if n_low == 0 || n_high == 0 {
        return Err(Error::InvalidInput(
            "cutoff grid needs at least one cutoff per axis".into(),
        ));
    }
    let lows = low_cutoffs(n_low);
    let highs = high_cutoffs(n_high);
    let cells: Vec<(f64, f64, bool)> = (0..n_low * n_high)
        .into_par_iter()
        .map(|c| {
            let r = cutoff_backtest(preds, quotes, lows[c / n_high], highs[c % n_high], stake)?;
            Ok((r.return_pct, r.wager_fraction, r.empty))
        })
        .collect::<Result<_>>()?;
    let shape = |f: &dyn Fn(&(f64, f64, bool)) -> f64| -> Vec<Vec<f64>> {
        cells
            .chunks(n_high)
            .map(|row| row.iter().map(f).collect())
            .collect()
    };
    Ok(BacktestGrid {
        returns_pct: shape(&|c| c.0),
        wager_fraction: shape(&|c| c.1),
        empty: cells
            .chunks(n_high)
            .map(|row| row.iter().map(|c| c.2).collect())
            .collect(),
        low_cutoffs: lows,
        high_cutoffs: highs,
    })
}

/// Where synthetic quotes take the true win probability from.
#[derive(Debug, Clone, Copy)]
pub enum QuoteSource<'a, F: Real> {
    /// The generator's latent strengths.
    Latent(&'a LatentStrengths),
    /// A model's probabilities, read as the generator's win probability.
    Predictions(&'a PredictionSet<F>),
}

/// Prices both sides of a ±1.5 run line for every game from the generating
/// model's cover probability. The favourite (win probability >= 0.5) gets the
/// -1.5 line. Each side's implied probability is its cover probability times
/// `1 + vig`, capped at 0.99.
pub fn synth_quotes<F: Real>(
    data: &Dataset,
    source: QuoteSource<'_, F>,
    config: &SyntheticConfig,
    vig: f64,
) -> Result<QuoteBook> {
    if !(vig >= 0.0 && vig.is_finite()) {
        return Err(Error::InvalidInput(format!("vig must be >= 0, got {vig}")));
    }
    let by_id: Option<HashMap<&str, f64>> = match source {
        QuoteSource::Predictions(p) => Some(
            p.game_ids()
                .iter()
                .map(String::as_str)
                .zip(p.p_home().iter().map(|x| x.f64()))
                .collect(),
        ),
        QuoteSource::Latent(_) => None,
    };
    let quotes = data
        .games()
        .iter()
        .map(|g| {
            let gap = match (source, &by_id) {
                (QuoteSource::Latent(s), _) => {
                    let get = |t: &String| s.get(t).copied().ok_or_else(|| Error::UnknownTeam(t.clone()));
                    get(&g.home_team)? - get(&g.away_team)?
                }
                (QuoteSource::Predictions(_), Some(m)) => {
                    let p = *m
                        .get(g.game_id.as_str())
                        .ok_or_else(|| Error::MissingQuote(g.game_id.clone()))?;
                    let p = p.clamp(1e-6, 1.0 - 1e-6);
                    (p / (1.0 - p)).ln() - config.home_advantage
                }
                _ => unreachable!(),
            };
            let home_line = if config.home_win_prob(gap) >= 0.5 {
                FAVOURITE_LINE
            } else {
                -FAVOURITE_LINE
            };
            let q_home = config.home_cover_prob(gap, home_line);
            let price = |q: f64| american_odds((q * (1.0 + vig)).clamp(1.0 - MAX_IMPLIED, MAX_IMPLIED));
            Ok(RunLineQuote {
                game_id: g.game_id.clone(),
                home_line,
                home_odds: price(q_home),
                away_line: -home_line,
                away_odds: price(1.0 - q_home),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    QuoteBook::new(quotes)
}

const ODDS_HEADER: [&str; 5] = ["game_id", "home_line", "home_odds", "away_line", "away_odds"];

/// Odds CSV: `game_id,home_line,home_odds,away_line,away_odds`.
pub fn write_quotes<W: Write>(book: &QuoteBook, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(ODDS_HEADER)?;
    for q in &book.quotes {
        w.write_record([
            q.game_id.clone(),
            q.home_line.to_string(),
            q.home_odds.to_string(),
            q.away_line.to_string(),
            q.away_odds.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<odds writer>", e))?;
    Ok(())
}

pub fn read_quotes<R: Read>(reader: R) -> Result<QuoteBook> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    if rdr.headers()?.iter().ne(ODDS_HEADER) {
        return Err(Error::malformed(
            1,
            "header",
            format!("expected {}", ODDS_HEADER.join(",")),
        ));
    }
    let mut quotes = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |i: usize| record.get(i).unwrap_or("");
        let num = |i: usize| -> Result<f64> {
            field(i)
                .parse::<f64>()
                .map_err(|e| Error::malformed(line, ODDS_HEADER[i], e.to_string()))
        };
        let odds = |i: usize| -> Result<i32> {
            field(i)
                .parse::<i32>()
                .map_err(|e| Error::malformed(line, ODDS_HEADER[i], e.to_string()))
        };
        quotes.push(RunLineQuote {
            game_id: field(0).to_string(),
            home_line: num(1)?,
            home_odds: odds(2)?,
            away_line: num(3)?,
            away_odds: odds(4)?,
        });
    }
    QuoteBook::new(quotes)
}

pub fn load_quotes(path: impl AsRef<Path>) -> Result<QuoteBook> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_quotes(file)
}

pub fn save_quotes(book: &QuoteBook, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_quotes(book, std::io::BufWriter::new(file))
}

/// Grid CSV: header row of high cutoffs, first column of low cutoffs.
pub fn write_grid_matrix<W: Write>(lows: &[f64], highs: &[f64], cells: &[Vec<f64>], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(std::iter::once("low\\high".to_string()).chain(highs.iter().map(f64::to_string)))?;
    for (lo, row) in lows.iter().zip(cells) {
        w.write_record(std::iter::once(lo.to_string()).chain(row.iter().map(f64::to_string)))?;
    }
    w.flush().map_err(|e| Error::io("<grid writer>", e))?;
    Ok(())
}

/// Writes `<stem>_returns.csv` and `<stem>_wager_fraction.csv` into `dir`.
pub fn save_grid(grid: &BacktestGrid, dir: impl AsRef<Path>, stem: &str) -> Result<()> {
    let dir = dir.as_ref();
    for (suffix, cells) in [
        ("returns", &grid.returns_pct),
        ("wager_fraction", &grid.wager_fraction),
    ] {
        let path = dir.join(format!("{stem}_{suffix}.csv"));
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        write_grid_matrix(
            &grid.low_cutoffs,
            &grid.high_cutoffs,
            cells,
            std::io::BufWriter::new(file),
        )?;
    }
    Ok(())
}
