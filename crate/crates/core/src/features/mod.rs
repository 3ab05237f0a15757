//! Per-game feature vectors built from dated team statistics.
//!
//! Column names follow the abbreviation scheme `<stat>`, `<stat>pctDiff`,
//! `<stat>Diff` and `<stat>-1`. A bare stat and the `-1` offset read the home
//! team's value; `Y`, `M` and `Log5` are game-level columns.

pub mod elo;
pub mod stats;
pub mod synth_stats;

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use chrono::Datelike;
use rayon::prelude::*;

use crate::data::{Dataset, GameRecord};
use crate::error::{Error, Result};
use crate::scalar::Real;

pub use elo::{elo_update, EloParams, EloState};
pub use stats::{StatStore, TeamSeasonStats};

/// Denominator guard for [`pct_diff`].
pub const PCT_DIFF_EPS: f64 = 1e-9;

/// Stat feeding the `Log5` column (team win percentage).
pub const LOG5_STAT: &str = "WP";

/// The standard 53-column input list, in its original order.
pub const DEFAULT_FEATURE_SPEC: [&str; 53] = [
    "OPSpctDiff",
    "SLGpctDiff",
    "OBPpctDiff",
    "AVGpctDiff",
    "RpctDiff",
    "FPpctDiff",
    "OPSDiff",
    "SLGDiff",
    "OBPDiff",
    "AVGDiff",
    "OPS",
    "SLG",
    "OBP",
    "AVG",
    "R",
    "RD",
    "ISO",
    "FP-1",
    "R-1",
    "ERApctDiff",
    "WHIPpctDiff",
    "RApctDiff",
    "SP-IPpctDiff",
    "SP-WPApctDiff",
    "SP-ERApctDiff",
    "SP-WHIPpctDiff",
    "WHIP-1",
    "ERA-1",
    "RA-1",
    "RA",
    "SP-ERA",
    "SP-WHIP",
    "SP-WPA",
    "SP-IP",
    "SP-NumG",
    "BayespctDiff",
    "W-LpctDiff",
    "RankpctDiff",
    "PythagpctDiff",
    "RDpctDiff",
    "Rank-1",
    "W-L-1",
    "Attend-1",
    "Bayes",
    "WD",
    "Pythag",
    "WP",
    "ELO",
    "Rest",
    "PrevWL",
    "Log5",
    "Y",
    "M",
];

/// `(home - away) / max(|away|, 1e-9)`.
pub fn pct_diff<F: Real>(home_value: F, away_value: F) -> F {
    (home_value - away_value) / away_value.abs().max(F::of(PCT_DIFF_EPS))
}

pub fn raw_diff<F: Real>(home_value: F, away_value: F) -> F {
    home_value - away_value
}

/// Pythagorean expectation `RS^2 / (RS^2 + RA^2)`.
pub fn pythagorean<F: Real>(runs_scored: F, runs_allowed: F) -> Result<F> {
    let (rs2, ra2) = (runs_scored * runs_scored, runs_allowed * runs_allowed);
    if rs2 + ra2 == F::zero() {
        return Err(Error::InvalidInput(
            "pythagorean expectation with zero runs scored and allowed".into(),
        ));
    }
    Ok(rs2 / (rs2 + ra2))
}

/// Head-to-head probability that A beats B from their win rates (Log5).
pub fn log5<F: Real>(p_a: F, p_b: F) -> Result<F> {
    let unit = |p: F| p > F::zero() && p < F::one();
    if !unit(p_a) || !unit(p_b) {
        return Err(Error::InvalidInput(format!(
            "log5 inputs must lie in (0, 1), got {p_a} and {p_b}"
        )));
    }
    let num = p_a - p_a * p_b;
    let den = p_a + p_b - F::of(2.0) * p_a * p_b;
    Ok(num / den)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transform {
    /// Home team's current value.
    Value,
    PctDiff,
    Diff,
    /// Home team's previous-season value.
    PrevSeason,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ColumnDef {
    Stat {
        stat: String,
        transform: Transform,
    },
    /// `Y`
    Season,
    /// `M`
    Month,
    /// `Log5` of the two teams' win percentages.
    Log5,
}

impl ColumnDef {
    pub fn parse(name: &str) -> Result<Self> {
        let name = name.trim();
        let bad = || Error::UnknownTransform(name.to_string());
        if name.is_empty() || name.contains(|c: char| c.is_whitespace() || c == ',' || c == '*') {
            return Err(bad());
        }
        Ok(match name {
            "Y" => ColumnDef::Season,
            "M" => ColumnDef::Month,
            "Log5" => ColumnDef::Log5,
            _ => {
                let (stat, transform) = if let Some(s) = name.strip_suffix("pctDiff") {
                    (s, Transform::PctDiff)
                } else if let Some(s) = name.strip_suffix("Diff") {
                    (s, Transform::Diff)
                } else if let Some(s) = name.strip_suffix("-1") {
                    (s, Transform::PrevSeason)
                } else {
                    (name, Transform::Value)
                };
                if stat.is_empty() {
                    return Err(bad());
                }
                ColumnDef::Stat {
                    stat: stat.to_string(),
                    transform,
                }
            }
        })
    }

    pub fn name(&self) -> String {
        match self {
            ColumnDef::Season => "Y".into(),
            ColumnDef::Month => "M".into(),
            ColumnDef::Log5 => "Log5".into(),
            ColumnDef::Stat { stat, transform } => match transform {
                Transform::Value => stat.clone(),
                Transform::PctDiff => format!("{stat}pctDiff"),
                Transform::Diff => format!("{stat}Diff"),
                Transform::PrevSeason => format!("{stat}-1"),
            },
        }
    }

    fn evaluate(&self, game: &GameRecord, stats: &StatStore) -> Result<f64> {
        let cur =
            |team: &str, stat: &str| stats.current_value(&game.game_id, team, game.season, game.date, stat);
        match self {
            ColumnDef::Season => Ok(game.season as f64),
            ColumnDef::Month => Ok(game.date.month() as f64),
            ColumnDef::Log5 => {
                let clamp = |p: f64| p.clamp(0.001, 0.999);
                log5(
                    clamp(cur(&game.home_team, LOG5_STAT)?),
                    clamp(cur(&game.away_team, LOG5_STAT)?),
                )
            }
            ColumnDef::Stat { stat, transform } => match transform {
                Transform::Value => cur(&game.home_team, stat),
                Transform::PctDiff => Ok(pct_diff(cur(&game.home_team, stat)?, cur(&game.away_team, stat)?)),
                Transform::Diff => Ok(raw_diff(cur(&game.home_team, stat)?, cur(&game.away_team, stat)?)),
                Transform::PrevSeason => stats.offset_prev_season(&game.home_team, game.season, stat),
            },
        }
    }
}

/// Parses column names, rejecting an empty list and duplicates.
pub fn parse_spec<S: AsRef<str>>(names: &[S]) -> Result<Vec<ColumnDef>> {
    if names.is_empty() {
        return Err(Error::InvalidInput(
            "feature spec is empty; at least one column is required".into(),
        ));
    }
    let defs = names
        .iter()
        .map(|n| ColumnDef::parse(n.as_ref()))
        .collect::<Result<Vec<_>>>()?;
    let mut seen = HashSet::new();
    for d in &defs {
        if !seen.insert(d.name()) {
            return Err(Error::InvalidInput(format!(
                "duplicate feature column `{}`",
                d.name()
            )));
        }
    }
    Ok(defs)
}

/// Feature-spec file: one column name per line; blank lines and `#` comments ignored.
pub fn read_spec<R: Read>(reader: R) -> Result<Vec<ColumnDef>> {
    let mut names = Vec::new();
    for line in BufReader::new(reader).lines() {
        let line = line.map_err(|e| Error::io("<feature spec>", e))?;
        let line = line.split('#').next().unwrap_or("").trim();
        if !line.is_empty() {
            names.push(line.to_string());
        }
    }
    parse_spec(&names)
}

pub fn load_spec(path: impl AsRef<Path>) -> Result<Vec<ColumnDef>> {
    let path = path.as_ref();
    read_spec(File::open(path).map_err(|e| Error::io(path, e))?)
}

/// Dense row-major features with per-row labels and score differentials.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix<F: Real> {
    game_ids: Vec<String>,
    seasons: Vec<i32>,
    column_names: Vec<String>,
    values: Vec<F>,
    label: Vec<bool>,
    score_diff: Vec<i32>,
}

impl<F: Real> FeatureMatrix<F> {
    pub fn new(
        game_ids: Vec<String>,
        seasons: Vec<i32>,
        column_names: Vec<String>,
        values: Vec<F>,
        score_diff: Vec<i32>,
    ) -> Result<Self> {
        let n = game_ids.len();
        let d = column_names.len();
        if d == 0 {
            return Err(Error::InvalidInput(
                "feature matrix needs at least one column".into(),
            ));
        }
        if seasons.len() != n || score_diff.len() != n || values.len() != n * d {
            return Err(Error::InvalidInput(format!(
                "feature matrix shape mismatch: {n} ids, {} seasons, {} diffs, {} values for {d} columns",
                seasons.len(),
                score_diff.len(),
                values.len()
            )));
        }
        let unique: HashSet<&String> = column_names.iter().collect();
        if unique.len() != d {
            return Err(Error::InvalidInput("duplicate column names".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite value in row `{}`, column `{}`",
                game_ids[i / d],
                column_names[i % d]
            )));
        }
        if let Some(i) = score_diff.iter().position(|&s| s == 0) {
            return Err(Error::InvalidInput(format!(
                "zero score differential for `{}`",
                game_ids[i]
            )));
        }
        let label = score_diff.iter().map(|&s| s > 0).collect();
        Ok(FeatureMatrix {
            game_ids,
            seasons,
            column_names,
            values,
            label,
            score_diff,
        })
    }

    /// Anonymous matrix for experiments: ids `r0, r1, ...`, season 0, score
    /// differential `+1` for a home win and `-1` otherwise.
    pub fn from_rows(rows: &[Vec<F>], labels: &[bool]) -> Result<Self> {
        if rows.len() != labels.len() || rows.is_empty() {
            return Err(Error::InvalidInput(
                "rows and labels must be non-empty and aligned".into(),
            ));
        }
        let d = rows[0].len();
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::InvalidInput("ragged rows".into()));
        }
        FeatureMatrix::new(
            (0..rows.len()).map(|i| format!("r{i}")).collect(),
            vec![0; rows.len()],
            (0..d).map(|j| format!("x{j}")).collect(),
            rows.iter().flatten().copied().collect(),
            labels.iter().map(|&l| if l { 1 } else { -1 }).collect(),
        )
    }

    pub fn n_rows(&self) -> usize {
        self.game_ids.len()
    }

    pub fn n_cols(&self) -> usize {
        self.column_names.len()
    }

    pub fn row(&self, i: usize) -> &[F] {
        let d = self.n_cols();
        &self.values[i * d..(i + 1) * d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[F]> {
        self.values.chunks_exact(self.n_cols())
    }

    pub fn value(&self, i: usize, j: usize) -> F {
        self.values[i * self.n_cols() + j]
    }

    pub fn game_ids(&self) -> &[String] {
        &self.game_ids
    }

    pub fn seasons(&self) -> &[i32] {
        &self.seasons
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn labels(&self) -> &[bool] {
        &self.label
    }

    pub fn score_diff(&self) -> &[i32] {
        &self.score_diff
    }

    pub fn has_both_classes(&self) -> bool {
        self.label.iter().any(|&l| l) && self.label.iter().any(|&l| !l)
    }

    /// Rows for which `keep(row index)` holds, in order.
    pub fn select(&self, keep: impl Fn(usize) -> bool) -> Self {
        let d = self.n_cols();
        let idx: Vec<usize> = (0..self.n_rows()).filter(|&i| keep(i)).collect();
        FeatureMatrix {
            game_ids: idx.iter().map(|&i| self.game_ids[i].clone()).collect(),
            seasons: idx.iter().map(|&i| self.seasons[i]).collect(),
            column_names: self.column_names.clone(),
            values: idx
                .iter()
                .flat_map(|&i| self.values[i * d..(i + 1) * d].iter().copied())
                .collect(),
            label: idx.iter().map(|&i| self.label[i]).collect(),
            score_diff: idx.iter().map(|&i| self.score_diff[i]).collect(),
        }
    }

    /// Seasons `<= last_train_season` versus later seasons; both sides non-empty.
    pub fn split_by_season(&self, last_train_season: i32) -> Result<(Self, Self)> {
        let train = self.select(|i| self.seasons[i] <= last_train_season);
        let test = self.select(|i| self.seasons[i] > last_train_season);
        if train.n_rows() == 0 || test.n_rows() == 0 {
            return Err(Error::InvalidSplit(format!(
                "last_train_season {last_train_season} leaves an empty side"
            )));
        }
        Ok((train, test))
    }

    pub fn cast<G: Real>(&self) -> FeatureMatrix<G> {
        FeatureMatrix {
            game_ids: self.game_ids.clone(),
            seasons: self.seasons.clone(),
            column_names: self.column_names.clone(),
            values: self.values.iter().map(|v| G::of(v.f64())).collect(),
            label: self.label.clone(),
            score_diff: self.score_diff.clone(),
        }
    }
}

/// One row per game, columns in `spec` order.
pub fn build_feature_matrix<F: Real>(
    data: &Dataset,
    stats: &StatStore,
    spec: &[ColumnDef],
) -> Result<FeatureMatrix<F>> {
    if spec.is_empty() {
        return Err(Error::InvalidInput(
            "feature spec is empty; at least one column is required".into(),
        ));
    }
    for def in spec {
        if let ColumnDef::Stat { stat, .. } = def {
            stats.stat_id(stat)?;
        }
        if matches!(def, ColumnDef::Log5) {
            stats.stat_id(LOG5_STAT)?;
        }
    }
    let rows: Vec<Vec<F>> = data
        .games()
        .par_iter()
        .map(|g| {
            spec.iter()
                .map(|def| def.evaluate(g, stats).map(F::of))
                .collect::<Result<Vec<F>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    FeatureMatrix::new(
        data.games().iter().map(|g| g.game_id.clone()).collect(),
        data.games().iter().map(|g| g.season).collect(),
        spec.iter().map(ColumnDef::name).collect(),
        rows.into_iter().flatten().collect(),
        data.games().iter().map(GameRecord::score_diff).collect(),
    )
}

const MATRIX_FIXED: [&str; 4] = ["game_id", "season", "label", "score_diff"];

/// Features CSV: `game_id,season,label,score_diff,<columns...>`.
pub fn write_matrix<F: Real, W: Write>(m: &FeatureMatrix<F>, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = MATRIX_FIXED.iter().map(|s| s.to_string()).collect();
    header.extend(m.column_names.iter().cloned());
    w.write_record(&header)?;
    for i in 0..m.n_rows() {
        let mut rec = vec![
            m.game_ids[i].clone(),
            m.seasons[i].to_string(),
            (m.label[i] as u8).to_string(),
            m.score_diff[i].to_string(),
        ];
        rec.extend(m.row(i).iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("<features writer>", e))?;
    Ok(())
}

pub fn read_matrix<F: Real, R: Read>(reader: R) -> Result<FeatureMatrix<F>> {
    let mut rdr = csv::ReaderBuilder::new().from_reader(reader);
    let headers = rdr.headers()?.clone();
    for (i, name) in MATRIX_FIXED.iter().enumerate() {
        if headers.get(i).map(str::trim) != Some(*name) {
            return Err(Error::malformed(
                1,
                name,
                "features header must start with game_id,season,label,score_diff",
            ));
        }
    }
    let columns: Vec<String> = headers.iter().skip(4).map(|s| s.trim().to_string()).collect();
    let (mut ids, mut seasons, mut diffs, mut values) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let get = |i: usize| record.get(i).map(str::trim).unwrap_or("");
        ids.push(get(0).to_string());
        seasons.push(
            get(1)
                .parse()
                .map_err(|_| Error::malformed(line, "season", "not an integer"))?,
        );
        let diff: i32 = get(3)
            .parse()
            .map_err(|_| Error::malformed(line, "score_diff", "not an integer"))?;
        let label = match get(2) {
            "1" => true,
            "0" => false,
            other => {
                return Err(Error::malformed(
                    line,
                    "label",
                    format!("`{other}` is not 0 or 1"),
                ))
            }
        };
        if label != (diff > 0) {
            return Err(Error::malformed(
                line,
                "label",
                "label disagrees with score_diff sign",
            ));
        }
        diffs.push(diff);
        for (j, col) in columns.iter().enumerate() {
            let raw = get(j + 4);
            let v: f64 = raw
                .parse()
                .map_err(|_| Error::malformed(line, col, format!("`{raw}` is not a number")))?;
            values.push(F::of(v));
        }
    }
    FeatureMatrix::new(ids, seasons, columns, values, diffs)
}

pub fn save_matrix<F: Real>(m: &FeatureMatrix<F>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_matrix(m, std::io::BufWriter::new(file))
}

pub fn load_matrix<F: Real>(path: impl AsRef<Path>) -> Result<FeatureMatrix<F>> {
    let path = path.as_ref();
    read_matrix(File::open(path).map_err(|e| Error::io(path, e))?)
}
