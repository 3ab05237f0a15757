//! Dated team statistics with no-lookahead lookups.
//!
//! A store holds any number of snapshots per `(team, season)`. A game on date
//! `d` reads the latest snapshot of its season dated strictly before `d`.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Stats that are rates and must lie in `[0, 1.5]`.
pub const RATE_STATS: [&str; 4] = ["AVG", "OBP", "SLG", "FP"];
/// Stats that count things and must be non-negative.
pub const COUNT_STATS: [&str; 6] = ["R", "RA", "SP-IP", "SP-NumG", "Attend", "Rest"];

/// One dated row of named statistics for a team.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeamSeasonStats {
    pub team: String,
    pub season: i32,
    pub as_of_date: NaiveDate,
    pub stats: BTreeMap<String, f64>,
}

#[derive(Debug, Clone)]
struct Snapshot {
    as_of_date: NaiveDate,
    /// Indexed by stat id; NaN marks an absent value.
    values: Vec<f64>,
}

impl PartialEq for Snapshot {
    fn eq(&self, other: &Self) -> bool {
        self.as_of_date == other.as_of_date
            && self.values.len() == other.values.len()
            && self
                .values
                .iter()
                .zip(&other.values)
                .all(|(a, b)| a == b || (a.is_nan() && b.is_nan()))
    }
}

/// Result of looking for the snapshot that may feed a game.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Lookup {
    /// Index into the `(team, season)` snapshot list.
    Found(usize),
    /// No rows at all for this team and season.
    NoSeasonRows,
    /// Rows exist but every one is dated on or after the game.
    OnlyLater,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StatStore {
    names: Vec<String>,
    index: HashMap<String, usize>,
    rows: HashMap<(String, i32), Vec<Snapshot>>,
}

fn check_value(name: &str, v: f64) -> std::result::Result<(), String> {
    if !v.is_finite() {
        return Err(format!("{name} is not finite"));
    }
    if RATE_STATS.contains(&name) && !(0.0..=1.5).contains(&v) {
        return Err(format!("{name} = {v} outside [0, 1.5]"));
    }
    if COUNT_STATS.contains(&name) && v < 0.0 {
        return Err(format!("{name} = {v} is negative"));
    }
    Ok(())
}

impl StatStore {
    /// Empty store over a fixed list of stat names.
    pub fn with_stats<S: AsRef<str>>(names: impl IntoIterator<Item = S>) -> Self {
        let names: Vec<String> = names.into_iter().map(|s| s.as_ref().to_string()).collect();
        let index = names.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
        StatStore {
            names,
            index,
            rows: HashMap::new(),
        }
    }

    pub fn from_rows(rows: impl IntoIterator<Item = TeamSeasonStats>) -> Result<Self> {
        let rows: Vec<TeamSeasonStats> = rows.into_iter().collect();
        let mut names: Vec<&String> = rows.iter().flat_map(|r| r.stats.keys()).collect();
        names.sort();
        names.dedup();
        let mut store = StatStore::with_stats(names);
        for r in &rows {
            let mut values = vec![f64::NAN; store.names.len()];
            for (k, &v) in &r.stats {
                values[store.index[k]] = v;
            }
            store.push(&r.team, r.season, r.as_of_date, values)?;
        }
        Ok(store)
    }

    /// Appends a snapshot whose values follow [`StatStore::stat_names`] order
    /// (NaN for absent).
    pub fn push(&mut self, team: &str, season: i32, as_of_date: NaiveDate, values: Vec<f64>) -> Result<()> {
        if values.len() != self.names.len() {
            return Err(Error::InvalidInput(format!(
                "snapshot for {team} has {} values, store has {} stats",
                values.len(),
                self.names.len()
            )));
        }
        for (name, &v) in self.names.iter().zip(&values) {
            if v.is_nan() {
                continue;
            }
            check_value(name, v)
                .map_err(|m| Error::InvalidInput(format!("{team} {season} as of {as_of_date}: {m}")))?;
        }
        let list = self.rows.entry((team.to_string(), season)).or_default();
        let pos = list.partition_point(|s| s.as_of_date <= as_of_date);
        list.insert(pos, Snapshot { as_of_date, values });
        Ok(())
    }

    pub fn stat_names(&self) -> &[String] {
        &self.names
    }

    pub fn stat_id(&self, stat: &str) -> Result<usize> {
        self.index
            .get(stat)
            .copied()
            .ok_or_else(|| Error::UnknownStat(stat.to_string()))
    }

    pub fn len(&self) -> usize {
        self.rows.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Latest snapshot strictly before `date`.
    pub fn lookup(&self, team: &str, season: i32, date: NaiveDate) -> Lookup {
        match self.rows.get(&(team.to_string(), season)) {
            None => Lookup::NoSeasonRows,
            Some(list) if list.is_empty() => Lookup::NoSeasonRows,
            Some(list) => match list.partition_point(|s| s.as_of_date < date) {
                0 => Lookup::OnlyLater,
                n => Lookup::Found(n - 1),
            },
        }
    }

    fn value_at(&self, team: &str, season: i32, idx: usize, stat: usize) -> Option<f64> {
        let v = self.rows.get(&(team.to_string(), season))?.get(idx)?.values[stat];
        (!v.is_nan()).then_some(v)
    }

    /// Latest recorded value of `stat` for the team in `season`.
    pub fn final_value(&self, team: &str, season: i32, stat: &str) -> Result<Option<f64>> {
        let id = self.stat_id(stat)?;
        Ok(self
            .rows
            .get(&(team.to_string(), season))
            .and_then(|list| list.iter().rev().map(|s| s.values[id]).find(|v| !v.is_nan())))
    }

    /// Mean over teams of their final `stat` value in `season`.
    pub fn league_mean(&self, season: i32, stat: &str) -> Result<Option<f64>> {
        let id = self.stat_id(stat)?;
        let mut teams: Vec<&String> = self
            .rows
            .keys()
            .filter(|(_, s)| *s == season)
            .map(|(t, _)| t)
            .collect();
        teams.sort();
        let vals: Vec<f64> = teams
            .into_iter()
            .filter_map(|t| {
                self.rows[&(t.clone(), season)]
                    .iter()
                    .rev()
                    .map(|s| s.values[id])
                    .find(|v| !v.is_nan())
            })
            .collect();
        if vals.is_empty() {
            return Ok(None);
        }
        Ok(Some(vals.iter().sum::<f64>() / vals.len() as f64))
    }

    /// Prior-season final value of `stat`, falling back to that season's
    /// league mean when the team has none.
    pub fn offset_prev_season(&self, team: &str, season: i32, stat: &str) -> Result<f64> {
        if let Some(v) = self.final_value(team, season - 1, stat)? {
            return Ok(v);
        }
        self.league_mean(season - 1, stat)?
            .ok_or_else(|| Error::MissingStat {
                team: team.to_string(),
                season: season - 1,
                stat: stat.to_string(),
            })
    }

    /// Value of `stat` for a game on `date`: the latest earlier snapshot of
    /// the season, else the prior-season fallback chain. Rows that exist for
    /// the season but are all dated on or after the game are a lookahead error.
    pub fn current_value(
        &self,
        game_id: &str,
        team: &str,
        season: i32,
        date: NaiveDate,
        stat: &str,
    ) -> Result<f64> {
        let id = self.stat_id(stat)?;
        match self.lookup(team, season, date) {
            Lookup::Found(idx) => match self.value_at(team, season, idx, id) {
                Some(v) => Ok(v),
                None => self.offset_prev_season(team, season, stat),
            },
            Lookup::NoSeasonRows => self.offset_prev_season(team, season, stat),
            Lookup::OnlyLater => Err(Error::Lookahead {
                game_id: game_id.to_string(),
                team: team.to_string(),
                season,
                date,
            }),
        }
    }

    /// All rows ordered by team, season and date.
    pub fn rows(&self) -> Vec<TeamSeasonStats> {
        let mut keys: Vec<&(String, i32)> = self.rows.keys().collect();
        keys.sort();
        let mut out = Vec::with_capacity(self.len());
        for key in keys {
            for snap in &self.rows[key] {
                out.push(TeamSeasonStats {
                    team: key.0.clone(),
                    season: key.1,
                    as_of_date: snap.as_of_date,
                    stats: self
                        .names
                        .iter()
                        .zip(&snap.values)
                        .filter(|(_, v)| !v.is_nan())
                        .map(|(n, &v)| (n.clone(), v))
                        .collect(),
                });
            }
        }
        out
    }
}

/// Reads a team-stats CSV: `team,season,as_of_date,<stat>...`; an empty cell
/// means the stat is absent from that row.
pub fn read_stats<R: Read>(reader: R) -> Result<StatStore> {
    let mut rdr = csv::ReaderBuilder::new().from_reader(reader);
    let headers = rdr.headers()?.clone();
    let fixed = ["team", "season", "as_of_date"];
    for (i, name) in fixed.iter().enumerate() {
        if headers.get(i).map(str::trim) != Some(*name) {
            return Err(Error::malformed(
                1,
                name,
                "team-stats header must start with team,season,as_of_date",
            ));
        }
    }
    let stat_names: Vec<String> = headers.iter().skip(3).map(|h| h.trim().to_string()).collect();
    let mut store = StatStore::with_stats(&stat_names);
    if store.index.len() != stat_names.len() {
        return Err(Error::malformed(1, "header", "duplicate stat column"));
    }
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let team = record.get(0).unwrap_or("").trim();
        if team.is_empty() {
            return Err(Error::malformed(line, "team", "empty"));
        }
        let season: i32 = record
            .get(1)
            .unwrap_or("")
            .trim()
            .parse()
            .map_err(|_| Error::malformed(line, "season", "not an integer"))?;
        let raw_date = record.get(2).unwrap_or("").trim();
        let date = NaiveDate::parse_from_str(raw_date, "%Y-%m-%d")
            .map_err(|_| Error::malformed(line, "as_of_date", format!("`{raw_date}` is not YYYY-MM-DD")))?;
        let mut values = Vec::with_capacity(stat_names.len());
        for (j, name) in stat_names.iter().enumerate() {
            let raw = record.get(j + 3).unwrap_or("").trim();
            if raw.is_empty() {
                values.push(f64::NAN);
                continue;
            }
            let v: f64 = raw
                .parse()
                .map_err(|_| Error::malformed(line, name, format!("`{raw}` is not a number")))?;
            check_value(name, v).map_err(|m| Error::malformed(line, name, m))?;
            values.push(v);
        }
        store.push(team, season, date, values)?;
    }
    Ok(store)
}

pub fn load_stats(path: impl AsRef<Path>) -> Result<StatStore> {
    let path = path.as_ref();
    read_stats(File::open(path).map_err(|e| Error::io(path, e))?)
}

pub fn write_stats<W: Write>(store: &StatStore, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["team".to_string(), "season".into(), "as_of_date".into()];
    header.extend(store.names.iter().cloned());
    w.write_record(&header)?;
    let mut keys: Vec<&(String, i32)> = store.rows.keys().collect();
    keys.sort();
    for key in keys {
        for snap in &store.rows[key] {
            let mut rec = vec![key.0.clone(), key.1.to_string(), snap.as_of_date.to_string()];
            rec.extend(
                snap.values
                    .iter()
                    .map(|v| if v.is_nan() { String::new() } else { v.to_string() }),
            );
            w.write_record(&rec)?;
        }
    }
    w.flush().map_err(|e| Error::io("<stats writer>", e))?;
    Ok(())
}

pub fn save_stats(store: &StatStore, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_stats(store, std::io::BufWriter::new(file))
}
